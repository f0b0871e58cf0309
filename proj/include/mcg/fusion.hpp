#pragma once

#include <cstdint>

#include "mcg/nn.hpp"
#include "mcg/text_encoder.hpp"

namespace mcg {

struct FusorConfig {
  int dim = 32;        // query/text stream width
  int video_dim = 32;  // cross-attention memory width
  int depth = 2;
  int heads = 4;
};

/// Output of the cross-modal fusor; row 0 is the [FUS] reasoning summary.
struct FusedEvidence {
  Var tokens;
  std::vector<bool> query_mask;  // [FUS] + text positions, true = real
  Var fus_row() const { return slice_rows(tokens, 0, 1); }
};

/// The Cross-modal Fusor: a [FUS] slot plus the text sequence as queries;
/// each block runs padding-masked self-attention, cross-attention with
/// the video tokens as keys/values, and a feed-forward, all pre-norm
/// residual.
class CrossModalFusor {
 public:
  CrossModalFusor(ParameterTree& tree, const std::string& prefix, const FusorConfig& cfg,
                  Rng& rng);
  FusedEvidence fuse(const Var& text_tokens, const std::vector<bool>& text_mask,
                     const Var& video_tokens) const;
  const FusorConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln_sa, ln_ca, ln_ffn;
    AttentionBlock sa, ca;
    FeedForward ffn;
  };
  FusorConfig cfg_;
  Var fus_embed_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

struct VtmPrediction {
  Var probs;   // [1 x 2]: (match, mismatch)
  int label;   // 0 = match, 1 = mismatch
};

struct VtmHead {
  LinearLayer fc;  // d -> 2
  VtmHead() = default;
  VtmHead(ParameterTree& tree, const std::string& prefix, int dim, Rng& rng)
      : fc(tree, prefix, dim, 2, rng) {}
  /// p^vtm = softmax(W . fus + b).
  VtmPrediction predict(const FusedEvidence& fused, int label = 0) const;
};

/// Mean binary cross-entropy over matched and mismatched predictions;
/// probabilities are clipped to [1e-7, 1 - 1e-7] before the log.
Var vtm_loss(const std::vector<VtmPrediction>& predictions);

enum class NegativeMode { kUniform, kHard };

/// One mismatched (video, text) pair per positive: (i, negative_for[i]).
/// Uniform draws j != i uniformly; hard draws j != i proportionally to
/// softmax(S[i,.]/tau1) with the diagonal excluded.
std::vector<int> sample_negatives(const Tensor& similarity, NegativeMode mode, double tau1,
                                  uint64_t seed);

}  // namespace mcg
