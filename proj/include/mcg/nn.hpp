#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcg/graph.hpp"
#include "mcg/rng.hpp"

namespace mcg {

/// Named, hierarchical collection of trainable arrays. Names are dotted
/// paths (ivm.block0.temporal.q.weight). Iteration is name-sorted so
/// every traversal (updates, checkpoints, gradient checks) is
/// deterministic.
class ParameterTree {
 public:
  Var create(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, Var>& entries() const { return params_; }
  size_t total_entries() const;
  void zero_grads();
  /// Names of arrays whose gradient was touched by the last backward.
  std::vector<std::string> touched() const;
  /// Arrays under a dotted prefix ("ivm." matches ivm.*).
  std::vector<std::string> names_under(const std::string& prefix) const;

 private:
  std::map<std::string, Var> params_;
};

/// Weight initialization helpers; all draws come from the caller's Rng so
/// construction order fully determines the values.
Tensor init_normal(Rng& rng, int rows, int cols, double std_dev = 0.02);

struct LinearLayer {
  Var weight;  // [in x out]
  Var bias;    // [1 x out]
  LinearLayer() = default;
  LinearLayer(ParameterTree& tree, const std::string& prefix, int in, int out, Rng& rng);
  Var apply(const Var& x) const { return add_rowvec(matmul(x, weight), bias); }
  int out_dim() const { return weight->value.cols(); }
};

struct LayerNorm {
  Var gain;
  Var bias;
  LayerNorm() = default;
  LayerNorm(ParameterTree& tree, const std::string& prefix, int dim);
  Var apply(const Var& x) const { return layer_norm_rows(x, gain, bias); }
};

/// Query/key/value/output projections around the fused attention op.
/// Keys and values may come from a modality with a different width than
/// the query stream (cross-attention).
struct AttentionBlock {
  LinearLayer q, k, v, o;
  int n_heads = 1;
  AttentionBlock() = default;
  AttentionBlock(ParameterTree& tree, const std::string& prefix, int query_dim, int memory_dim,
                 int n_heads, Rng& rng);
  /// mask: [rows(queries) x rows(memory)] of 0/1.
  Var apply(const Var& queries, const Var& memory, const Tensor& mask) const;
  /// Two-memory variant: keys/values are the concatenation of both
  /// projected sources (used by the answer generator's conditioning).
  Var apply2(const Var& queries, const Var& mem_a, const Var& mem_b, const Tensor& mask,
             const LinearLayer& k_b, const LinearLayer& v_b) const;
};

struct FeedForward {
  LinearLayer fc1, fc2;
  FeedForward() = default;
  FeedForward(ParameterTree& tree, const std::string& prefix, int dim, int hidden, Rng& rng);
  Var apply(const Var& x) const { return fc2.apply(gelu_v(fc1.apply(x))); }
};

// Mask builders (0/1 tensors consumed by attention_heads).
Tensor full_mask(int tq, int tk);
Tensor causal_mask(int t);
/// All queries may look at key j iff key_allowed[j].
Tensor key_padding_mask(int tq, const std::vector<bool>& key_allowed);

}  // namespace mcg
