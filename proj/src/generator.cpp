#include "mcg/generator.hpp"

#include <algorithm>
#include <cmath>

namespace mcg {

std::vector<int> GenerationState::full_ids() const {
  std::vector<int> ids = cond_ids;
  ids.insert(ids.end(), gen_ids.begin(), gen_ids.end());
  return ids;
}

AnswerGenerator::AnswerGenerator(ParameterTree& tree, const std::string& prefix,
                                 const GeneratorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  token_embed_ = tree.create(prefix + ".embed.token", init_normal(rng, cfg.vocab_size, cfg.dim));
  pos_embed_ = tree.create(prefix + ".embed.position", init_normal(rng, cfg.max_len, cfg.dim));
  blocks_.reserve(size_t(cfg.depth));
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.ln_sa = LayerNorm(tree, bp + ".ln_sa", cfg.dim);
    blk.sa = AttentionBlock(tree, bp + ".sa", cfg.dim, cfg.dim, cfg.heads, rng);
    blk.ln_ca = LayerNorm(tree, bp + ".ln_ca", cfg.dim);
    blk.ca = AttentionBlock(tree, bp + ".ca", cfg.dim, cfg.video_dim, cfg.heads, rng);
    blk.ca_fused_k = LinearLayer(tree, bp + ".ca_fused.k", cfg.dim, cfg.dim, rng);
    blk.ca_fused_v = LinearLayer(tree, bp + ".ca_fused.v", cfg.dim, cfg.dim, rng);
    blk.ln_ffn = LayerNorm(tree, bp + ".ln_ffn", cfg.dim);
    blk.ffn = FeedForward(tree, bp + ".ffn", cfg.dim, cfg.dim * 4, rng);
    blocks_.push_back(std::move(blk));
  }
  final_ln_ = LayerNorm(tree, prefix + ".final_ln", cfg.dim);
}

Var AnswerGenerator::forward_logits(const std::vector<int>& ids, const Var& video_tokens,
                                    const FusedEvidence& fused) const {
  const int len = int(ids.size());
  if (len < 1) fail("generator prefix is empty");
  if (len > cfg_.max_len) fail("generation overflow: prefix " + std::to_string(len) +
                               " exceeds " + std::to_string(cfg_.max_len));
  for (int id : ids)
    if (id < 0 || id >= cfg_.vocab_size) fail("vocabulary overflow: id " + std::to_string(id));

  std::vector<int> pos(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) pos[size_t(i)] = i;
  Var h = add(gather_rows(token_embed_, ids), gather_rows(pos_embed_, pos));
  const Tensor sa_mask = causal_mask(len);
  const bool with_video = cfg_.conditioning == GeneratorConditioning::kVideoAndFused;
  const int mem_len =
      (with_video ? video_tokens->value.rows() : 0) + fused.tokens->value.rows();
  const Tensor ca_mask = full_mask(len, mem_len);
  for (const auto& blk : blocks_) {
    Var normed = blk.ln_sa.apply(h);
    h = add(h, blk.sa.apply(normed, normed, sa_mask));
    Var q = blk.ln_ca.apply(h);
    Var ca = with_video ? blk.ca.apply2(q, video_tokens, fused.tokens, ca_mask, blk.ca_fused_k,
                                        blk.ca_fused_v)
                        : blk.ca.o.apply(attention_heads(blk.ca.q.apply(q),
                                                         blk.ca_fused_k.apply(fused.tokens),
                                                         blk.ca_fused_v.apply(fused.tokens),
                                                         blk.ca.n_heads, ca_mask));
    h = add(h, ca);
    h = add(h, blk.ffn.apply(blk.ln_ffn.apply(h)));
  }
  // Output projection weight-tied to the token embedding table.
  return matmul_nt(final_ln_.apply(h), token_embed_);
}

Var AnswerGenerator::step_logits(const GenerationState& state, const Var& video_tokens,
                                 const FusedEvidence& fused) const {
  if (state.gen_ids.empty()) fail("generator prefix is empty");
  const std::vector<int> ids = state.full_ids();
  Var logits = forward_logits(ids, video_tokens, fused);
  return slice_rows(logits, int(ids.size()) - 1, 1);
}

Var lm_loss(const Var& logits, const std::vector<int>& targets,
            const std::vector<bool>& supervised) {
  return cross_entropy_rows(logits, targets, supervised);
}

namespace {

struct Hypothesis {
  std::vector<int> gen_ids;  // starts with [GEN]
  double logp = 0.0;
  bool finished = false;
  int generated() const { return int(gen_ids.size()) - 1; }
  double score() const { return logp / std::max(1, generated()); }
};

std::vector<double> log_probs_row(const Tensor& logits_row) {
  const int v = logits_row.cols();
  double mx = logits_row(0, 0);
  for (int c = 1; c < v; ++c) mx = std::max(mx, logits_row(0, c));
  double denom = 0.0;
  for (int c = 0; c < v; ++c) denom += std::exp(logits_row(0, c) - mx);
  const double lse = mx + std::log(denom);
  std::vector<double> out(static_cast<size_t>(v));
  for (int c = 0; c < v; ++c) out[size_t(c)] = logits_row(0, c) - lse;
  return out;
}

}  // namespace

DecodeResult decode_answer(const AnswerGenerator& gen, const std::vector<int>& question_ids,
                           const Var& video_tokens, const FusedEvidence& fused,
                           const Vocabulary& vocab, const DecodeConfig& cfg) {
  const int width = cfg.mode == DecodeConfig::Mode::kGreedy ? 1 : std::max(1, cfg.beam_width);
  std::vector<Hypothesis> pool{Hypothesis{{vocab.gen_id}, 0.0, false}};
  for (int step = 0; step < cfg.max_len; ++step) {
    bool any_open = false;
    std::vector<Hypothesis> next;
    for (const auto& hyp : pool) {
      if (hyp.finished) {
        next.push_back(hyp);
        continue;
      }
      any_open = true;
      GenerationState state;
      state.cond_ids = question_ids;
      state.gen_ids = hyp.gen_ids;
      Var logits = gen.step_logits(state, video_tokens, fused);
      const auto lp = log_probs_row(logits->value);
      // Top `width` candidate tokens, ties resolved toward lower ids.
      std::vector<int> order(lp.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
      std::stable_sort(order.begin(), order.end(),
                       [&lp](int a, int b) { return lp[size_t(a)] > lp[size_t(b)]; });
      for (int c = 0; c < width && c < int(order.size()); ++c) {
        Hypothesis h = hyp;
        h.gen_ids.push_back(order[size_t(c)]);
        h.logp += lp[size_t(order[size_t(c)])];
        h.finished = order[size_t(c)] == vocab.eos_id;
        next.push_back(std::move(h));
      }
    }
    if (!any_open) break;
    std::stable_sort(next.begin(), next.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score() > b.score(); });
    if (int(next.size()) > width) next.resize(size_t(width));
    pool = std::move(next);
  }
  const Hypothesis* best = &pool.front();
  for (const auto& h : pool)
    if (h.score() > best->score()) best = &h;
  DecodeResult res;
  res.truncated = !best->finished;
  for (size_t i = 1; i < best->gen_ids.size(); ++i)
    if (best->gen_ids[i] != vocab.eos_id) res.answer_ids.push_back(best->gen_ids[i]);
  return res;
}

}  // namespace mcg
