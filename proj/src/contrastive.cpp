#include "mcg/contrastive.hpp"

#include <cmath>

namespace mcg {

Var project_normalize(const Var& embedding, const ProjectionHead& head) {
  return l2_normalize_rows(head.map.apply(embedding));
}

Var instance_similarity_matrix(const std::vector<Var>& x_cls, const std::vector<Var>& y_cls,
                               const ProjectionHead& g_x, const ProjectionHead& g_y) {
  if (x_cls.empty() || x_cls.size() != y_cls.size())
    fail("instance_similarity_matrix: batch size mismatch");
  Var px = project_normalize(concat_rows(x_cls), g_x);
  Var py = project_normalize(concat_rows(y_cls), g_y);
  return matmul_nt(px, py);
}

Var icl_loss(const Var& similarity, const Var& tau1) {
  const int b = similarity->value.rows();
  if (similarity->value.cols() != b) fail("icl_loss: similarity matrix must be square");
  Var scaled = smul(recip_v(tau1), similarity);
  Var row_diag = diag(log_softmax_rows(scaled));
  Var col_diag = diag(log_softmax_rows(transpose(scaled)));
  return scale(add(sum_all(row_diag), sum_all(col_diag)), -1.0 / (2.0 * b));
}

std::pair<Var, Var> memory_response(const Var& memory, const Var& state) {
  if (memory->value.rows() < 1) fail("memory_response: empty memory");
  Var scores = matmul_nt(tanh_v(state), tanh_v(memory));  // [1 x J]
  Var rho = softmax_rows(scores);
  return {matmul(rho, memory), rho};
}

SaliencyProvider::SaliencyProvider(ParameterTree& tree, const std::string& prefix, int d_x,
                                   int d_y, Rng& rng)
    : mode(SaliencyMode::kLearned),
      text_gate(tree, prefix + ".text_gate", d_y, 1, rng),
      video_gate(tree, prefix + ".video_gate", d_x, 1, rng) {}

Var SaliencyProvider::text_weights(const Var& text_tokens) const {
  const int k = text_tokens->value.rows();
  if (mode == SaliencyMode::kUniform) return constant(Tensor::full(k, 1, 1.0 / k));
  return sigmoid_v(text_gate.apply(text_tokens));
}

Var SaliencyProvider::video_weights(const Var& video_tokens) const {
  const int j = video_tokens->value.rows();
  if (mode == SaliencyMode::kUniform) return constant(Tensor::full(j, 1, 1.0 / j));
  return sigmoid_v(video_gate.apply(video_tokens));
}

namespace {

// One direction of Eq. 5/6: tokens attend into the other modality's
// memory; each token is pulled toward its own response against the
// pair's other responses, in both query orders.
Var token_direction_loss(const Var& tokens_in_mem, const Var& memory_in_mem, const Var& weights,
                         const Var& inv_tau) {
  Var scores = matmul_nt(tanh_v(tokens_in_mem), tanh_v(memory_in_mem));
  Var responses = matmul(softmax_rows(scores), memory_in_mem);  // one response per token
  Var sims = matmul_nt(l2_normalize_rows(tokens_in_mem), l2_normalize_rows(responses));
  Var scaled = smul(inv_tau, sims);
  Var per_token = scale(add(diag(log_softmax_rows(scaled)), diag(log_softmax_rows(transpose(scaled)))),
                        -1.0);
  return sum_all(mul(weights, per_token));
}

}  // namespace

Var tcl_loss(const TokenPairBatch& batch, const SaliencyProvider& saliency, const Var& tau2,
             const LinearLayer& text_to_mem, const LinearLayer& video_to_mem) {
  const size_t b = batch.video_tokens.size();
  if (b == 0 || batch.text_tokens.size() != b) fail("tcl_loss: batch size mismatch");
  Var inv_tau = recip_v(tau2);
  Var tvc;  // text tokens vs video memory
  Var tlc;  // video tokens vs text memory
  for (size_t i = 0; i < b; ++i) {
    const Var& video = batch.video_tokens[i];
    const Var& text = batch.text_tokens[i];
    if (video->value.rows() < 1 || text->value.rows() < 1) fail("empty token set");
    Var video_mem = video_to_mem.apply(video);  // the pair's memory buffer M_i
    Var text_mem = text_to_mem.apply(text);
    Var a = token_direction_loss(text_mem, video_mem, saliency.text_weights(text), inv_tau);
    Var c = token_direction_loss(video_mem, text_mem, saliency.video_weights(video), inv_tau);
    tvc = tvc ? add(tvc, a) : a;
    tlc = tlc ? add(tlc, c) : c;
  }
  const double norm = 1.0 / (2.0 * double(b));
  // L_TCL = (L_tvc + L_tlc) / 2.
  return scale(add(scale(tvc, norm), scale(tlc, norm)), 0.5);
}

Var mcl_loss(const Var& l_icl, const Var& l_tcl, double theta1, double theta2) {
  if (theta1 < 0 || theta2 < 0) fail("mcl_loss: negative weights");
  return add(scale(l_icl, theta1), scale(l_tcl, theta2));
}

TemperaturePair::TemperaturePair(ParameterTree& tree, const std::string& prefix, double tau1_init,
                                 double tau2_init) {
  if (tau1_init <= 0 || tau2_init <= 0) fail("temperatures must be positive");
  log_tau1 = tree.create(prefix + ".log_tau1", Tensor::scalar(std::log(tau1_init)));
  log_tau2 = tree.create(prefix + ".log_tau2", Tensor::scalar(std::log(tau2_init)));
}

}  // namespace mcg
