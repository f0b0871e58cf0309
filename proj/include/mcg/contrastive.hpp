#pragma once

#include "mcg/nn.hpp"

namespace mcg {

/// Linear map into the shared instance space; project_normalize puts the
/// result on the unit sphere.
struct ProjectionHead {
  LinearLayer map;
  ProjectionHead() = default;
  ProjectionHead(ParameterTree& tree, const std::string& prefix, int in, int out, Rng& rng)
      : map(tree, prefix, in, out, rng) {}
};

Var project_normalize(const Var& embedding, const ProjectionHead& head);

/// S[i][j] = g_x(x_cls_i) . g_y(y_cls_j) over a batch of summary rows.
Var instance_similarity_matrix(const std::vector<Var>& x_cls, const std::vector<Var>& y_cls,
                               const ProjectionHead& g_x, const ProjectionHead& g_y);

/// Symmetric in-batch InfoNCE over the similarity matrix, temperature
/// tau1 (a positive 1x1 Var).
Var icl_loss(const Var& similarity, const Var& tau1);

/// Attention read from one video's memory: scores tanh(m_j).tanh(u),
/// weights rho = softmax(scores), response r = M^T rho.
/// memory: [J x d_m], state: [1 x d_m]; returns (r [1 x d_m], rho [1 x J]).
std::pair<Var, Var> memory_response(const Var& memory, const Var& state);

enum class SaliencyMode { kUniform, kLearned };

/// Per-token weights for the token-grained losses. Uniform yields the
/// 1/K (resp. 1/J) factors; learned gates each token with a sigmoid of a
/// linear probe on its embedding.
struct SaliencyProvider {
  SaliencyMode mode = SaliencyMode::kUniform;
  LinearLayer text_gate;   // d_y -> 1, learned mode only
  LinearLayer video_gate;  // d_x -> 1
  SaliencyProvider() = default;
  SaliencyProvider(ParameterTree& tree, const std::string& prefix, int d_x, int d_y, Rng& rng);
  /// [K x 1] weights for K token rows.
  Var text_weights(const Var& text_tokens) const;
  Var video_weights(const Var& video_tokens) const;
};

struct TokenPairBatch {
  // Per pair i: content tokens only (no summary slot, no padding).
  std::vector<Var> video_tokens;  // [J_i x d_x]
  std::vector<Var> text_tokens;   // [K_i x d_y]
};

/// Token-grained contrastive loss: memory-attentive cross-modal responses
/// in both directions combined symmetrically. `text_to_mem`/`video_to_mem`
/// are the internal state maps into the memory dimension.
Var tcl_loss(const TokenPairBatch& batch, const SaliencyProvider& saliency, const Var& tau2,
             const LinearLayer& text_to_mem, const LinearLayer& video_to_mem);

/// theta1 * L_ICL + theta2 * L_TCL.
Var mcl_loss(const Var& l_icl, const Var& l_tcl, double theta1, double theta2);

/// Trainable temperatures stored as logs so they stay positive.
struct TemperaturePair {
  Var log_tau1;
  Var log_tau2;
  TemperaturePair() = default;
  TemperaturePair(ParameterTree& tree, const std::string& prefix, double tau1_init,
                  double tau2_init);
  Var tau1() const { return exp_v(log_tau1); }
  Var tau2() const { return exp_v(log_tau2); }
};

}  // namespace mcg
