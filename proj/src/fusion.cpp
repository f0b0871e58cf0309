#include "mcg/fusion.hpp"

#include <cmath>

#include "mcg/rng.hpp"

namespace mcg {

CrossModalFusor::CrossModalFusor(ParameterTree& tree, const std::string& prefix,
                                 const FusorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  fus_embed_ = tree.create(prefix + ".fus", init_normal(rng, 1, cfg.dim));
  blocks_.reserve(size_t(cfg.depth));
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.ln_sa = LayerNorm(tree, bp + ".ln_sa", cfg.dim);
    blk.sa = AttentionBlock(tree, bp + ".sa", cfg.dim, cfg.dim, cfg.heads, rng);
    blk.ln_ca = LayerNorm(tree, bp + ".ln_ca", cfg.dim);
    blk.ca = AttentionBlock(tree, bp + ".ca", cfg.dim, cfg.video_dim, cfg.heads, rng);
    blk.ln_ffn = LayerNorm(tree, bp + ".ln_ffn", cfg.dim);
    blk.ffn = FeedForward(tree, bp + ".ffn", cfg.dim, cfg.dim * 4, rng);
    blocks_.push_back(std::move(blk));
  }
  final_ln_ = LayerNorm(tree, prefix + ".final_ln", cfg.dim);
}

FusedEvidence CrossModalFusor::fuse(const Var& text_tokens, const std::vector<bool>& text_mask,
                                    const Var& video_tokens) const {
  if (text_tokens->value.cols() != cfg_.dim)
    fail("fuse: text width " + std::to_string(text_tokens->value.cols()) + " vs fusor dim " +
         std::to_string(cfg_.dim));
  if (video_tokens->value.cols() != cfg_.video_dim)
    fail("fuse: video width " + std::to_string(video_tokens->value.cols()) + " vs fusor memory " +
         std::to_string(cfg_.video_dim));
  if (int(text_mask.size()) != text_tokens->value.rows()) fail("fuse: mask length mismatch");

  FusedEvidence out;
  out.query_mask.push_back(true);  // the [FUS] slot
  out.query_mask.insert(out.query_mask.end(), text_mask.begin(), text_mask.end());
  Var h = concat_rows({fus_embed_, text_tokens});
  const int tq = h->value.rows();
  const Tensor sa_mask = key_padding_mask(tq, out.query_mask);
  const Tensor ca_mask = full_mask(tq, video_tokens->value.rows());
  for (const auto& blk : blocks_) {
    Var normed = blk.ln_sa.apply(h);
    h = add(h, blk.sa.apply(normed, normed, sa_mask));
    h = add(h, blk.ca.apply(blk.ln_ca.apply(h), video_tokens, ca_mask));
    h = add(h, blk.ffn.apply(blk.ln_ffn.apply(h)));
  }
  out.tokens = final_ln_.apply(h);
  return out;
}

VtmPrediction VtmHead::predict(const FusedEvidence& fused, int label) const {
  VtmPrediction pred;
  pred.probs = softmax_rows(fc.apply(fused.fus_row()));
  pred.label = label;
  return pred;
}

Var vtm_loss(const std::vector<VtmPrediction>& predictions) {
  if (predictions.empty()) fail("vtm_loss: no predictions");
  Var acc;
  for (const auto& pred : predictions) {
    if (pred.label != 0 && pred.label != 1) fail("vtm_loss: bad label");
    Var p = clamp_v(pick(pred.probs, 0, pred.label), 1e-7, 1.0 - 1e-7);
    Var term = scale(log_v(p), -1.0);
    acc = acc ? add(acc, term) : term;
  }
  return scale(acc, 1.0 / double(predictions.size()));
}

std::vector<int> sample_negatives(const Tensor& similarity, NegativeMode mode, double tau1,
                                  uint64_t seed) {
  const int b = similarity.rows();
  if (similarity.cols() != b) fail("sample_negatives: similarity matrix must be square");
  if (b < 2) fail("cannot form negatives: batch size " + std::to_string(b));
  Rng rng(seed);
  std::vector<int> out(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    if (mode == NegativeMode::kUniform) {
      const int j = int(rng.below(uint64_t(b - 1)));
      out[size_t(i)] = j >= i ? j + 1 : j;
      continue;
    }
    // Hard: categorical over softmax(S[i,.]/tau1) with diagonal removed.
    double mx = -1e300;
    for (int j = 0; j < b; ++j)
      if (j != i) mx = std::max(mx, similarity(i, j) / tau1);
    std::vector<double> w(size_t(b), 0.0);
    double total = 0.0;
    for (int j = 0; j < b; ++j) {
      if (j == i) continue;
      w[size_t(j)] = std::exp(similarity(i, j) / tau1 - mx);
      total += w[size_t(j)];
    }
    double u = rng.uniform() * total;
    int chosen = -1;
    for (int j = 0; j < b; ++j) {
      if (j == i) continue;
      u -= w[size_t(j)];
      if (u <= 0.0) {
        chosen = j;
        break;
      }
    }
    out[size_t(i)] = chosen >= 0 ? chosen : (i == b - 1 ? b - 2 : b - 1);
  }
  return out;
}

}  // namespace mcg
