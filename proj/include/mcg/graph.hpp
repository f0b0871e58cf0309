#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg {

/// One node of a dynamically built reverse-mode differentiation graph.
/// Nodes are created by the free functions below; calling backward() on a
/// scalar node accumulates gradients into every reachable node that
/// requires them. Graphs are plain shared_ptr DAGs with no global state,
/// so independent forwards may run concurrently as long as they only share
/// leaf (parameter) nodes and at most one thread runs backward at a time.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  bool grad_touched = false;  // set once grad storage is live this pass
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pulls this->grad into parents

  Tensor& ensure_grad();
  void zero_grad();
};

using Var = std::shared_ptr<Node>;

/// Leaf with gradient tracking (parameters, checked inputs).
Var leaf(Tensor value);
/// Leaf without gradient tracking (data).
Var constant(Tensor value);

void backward(const Var& root);

// ---- arithmetic ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // elementwise
Var scale(const Var& a, double c);            // constant scalar
Var add_const(const Var& a, double c);
Var smul(const Var& s, const Var& a);         // 1x1 Var * tensor Var
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);    // a * b^T
Var matmul_tn(const Var& a, const Var& b);    // a^T * b
Var transpose(const Var& a);
Var add_rowvec(const Var& a, const Var& v);   // broadcast [1 x n] over rows

// ---- structure ----
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int first, int count);
Var gather_rows(const Var& a, std::vector<int> indices);
Var pick(const Var& a, int r, int c);         // 1x1 view of one entry
Var diag(const Var& a);                       // [n x 1] main diagonal of square a
Var sum_all(const Var& a);                    // 1x1

// ---- nonlinearities ----
Var tanh_v(const Var& a);
Var sigmoid_v(const Var& a);
Var gelu_v(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var recip_v(const Var& a);
Var clamp_v(const Var& a, double lo, double hi);

// ---- normalizations ----
/// Row softmax. `mask` (optional, 0/1, same shape) marks allowed entries;
/// disallowed entries get exactly zero weight. Every row needs at least
/// one allowed entry.
Var softmax_rows(const Var& a, const Tensor* mask = nullptr);
Var log_softmax_rows(const Var& a, const Tensor* mask = nullptr);
/// Per-row layer normalization with learned gain/bias ([1 x cols]).
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
/// Rows scaled to (near-)unit L2 norm: x / (||x|| + eps).
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

/// Fused masked multi-head attention. q:[Tq x d], k,v:[Tk x d] with d
/// divisible by n_heads; mask:[Tq x Tk] marks allowed query->key pairs.
/// Heads are contiguous column blocks; outputs are concatenated back.
Var attention_heads(const Var& q, const Var& k, const Var& v, int n_heads, const Tensor& mask);

/// Mean of -log_softmax(logits)[r, target[r]] over rows where
/// supervised[r] is true. Throws "no supervised positions" if none.
Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets,
                       const std::vector<bool>& supervised);

}  // namespace mcg
