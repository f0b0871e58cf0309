#include "mcg/model.hpp"

namespace mcg {

void ModelConfig::validate() const {
  if (max_resolution % patch != 0)
    fail("configuration error: resolution " + std::to_string(max_resolution) +
         " not divisible by patch size " + std::to_string(patch));
  for (int d : {d_x, d_y})
    if (d % heads != 0) fail("configuration error: width not divisible by head count");
  if (max_frames < 1 || max_text_len < 2 || max_gen_len < 2)
    fail("configuration error: degenerate sequence limits");
}

namespace {
VideoEncoderConfig video_cfg(const ModelConfig& m) {
  VideoEncoderConfig c;
  c.dim = m.d_x;
  c.depth = m.video_depth;
  c.heads = m.heads;
  c.patch = m.patch;
  c.max_frames = m.max_frames;
  const int side = m.max_resolution / m.patch;
  c.max_patches = side * side;
  c.timesformer_residuals = m.timesformer_residuals;
  return c;
}

TextEncoderConfig text_cfg(const ModelConfig& m, int vocab_size) {
  TextEncoderConfig c;
  c.vocab_size = vocab_size;
  c.dim = m.d_y;
  c.depth = m.text_depth;
  c.heads = m.heads;
  c.max_len = m.max_text_len;
  return c;
}

FusorConfig fusor_cfg(const ModelConfig& m) {
  FusorConfig c;
  c.dim = m.d_y;
  c.video_dim = m.d_x;
  c.depth = m.fusor_depth;
  c.heads = m.heads;
  return c;
}

GeneratorConfig gen_cfg(const ModelConfig& m, int vocab_size) {
  GeneratorConfig c;
  c.vocab_size = vocab_size;
  c.dim = m.d_y;
  c.video_dim = m.d_x;
  c.depth = m.gen_depth;
  c.heads = m.heads;
  c.max_len = m.max_gen_len;
  c.conditioning = m.conditioning;
  return c;
}
}  // namespace

McgModel::McgModel(const ModelConfig& cfg, Vocabulary vocab, uint64_t seed)
    : McgModel(cfg, std::move(vocab), std::make_unique<Rng>(seed)) {}

McgModel::McgModel(const ModelConfig& cfg, Vocabulary vocab, std::unique_ptr<Rng> rng)
    : cfg_((cfg.validate(), cfg)),
      vocab_(std::move(vocab)),
      tree_(),
      ivm_(tree_, "ivm", video_cfg(cfg), *rng),
      iqm_(tree_, "iqm", text_cfg(cfg, vocab_.size()), *rng),
      g_x_(tree_, "mcl.g_x", cfg.d_x, cfg.d_p, *rng),
      g_y_(tree_, "mcl.g_y", cfg.d_y, cfg.d_p, *rng),
      text_to_mem_(tree_, "mcl.text_to_mem", cfg.d_y, cfg.d_m, *rng),
      video_to_mem_(tree_, "mcl.video_to_mem", cfg.d_x, cfg.d_m, *rng),
      temps_(tree_, "mcl.temp", cfg.tau1_init, cfg.tau2_init),
      saliency_(cfg.saliency == SaliencyMode::kLearned
                    ? SaliencyProvider(tree_, "mcl.saliency", cfg.d_x, cfg.d_y, *rng)
                    : SaliencyProvider()),
      cfor_(tree_, "cfor", fusor_cfg(cfg), *rng),
      vtm_(tree_, "cfor.vtm_head", cfg.d_y, *rng),
      agor_(tree_, "agor", gen_cfg(cfg, vocab_.size()), *rng) {}

std::vector<int> McgModel::question_condition_ids(const std::string& question) const {
  TokenizedText tok = tokenize(question, vocab_, cfg_.max_text_len);
  std::vector<int> ids;
  for (int id : tok.ids)
    if (id != vocab_.cls_id && id != vocab_.sep_id && id != vocab_.pad_id) ids.push_back(id);
  return ids;
}

AnswerResult McgModel::generate_answer(const NormalizedClip& clip, const std::string& question,
                                       const DecodeConfig& decode) const {
  Var video = encode_video(clip);
  TokenizedText tok = tokenize(question, vocab_, cfg_.max_text_len);
  Var text = encode_text(tok);
  FusedEvidence fused = fuse(text, tok.mask, video);
  DecodeResult dec = decode_answer(agor_, question_condition_ids(question), video, fused, vocab_,
                                   decode);
  AnswerResult out;
  out.text = detokenize(dec.answer_ids, vocab_);
  out.truncated = dec.truncated;
  return out;
}

ChoiceResult McgModel::score_choices(const NormalizedClip& clip, const std::string& question,
                                     const std::vector<std::string>& candidates) const {
  if (candidates.size() < 2) fail("score_choices needs at least two candidates");
  Var video = encode_video(clip);
  ChoiceResult res;
  res.match_probs.reserve(candidates.size());
  for (const auto& cand : candidates) {
    const std::string text = question.empty() ? cand : question + " " + cand;
    TokenizedText tok = tokenize(text, vocab_, cfg_.max_text_len);
    FusedEvidence fused = fuse(encode_text(tok), tok.mask, video);
    VtmPrediction pred = vtm_.predict(fused);
    res.match_probs.push_back(pred.probs->value(0, 0));
  }
  res.best_index = 0;
  for (size_t i = 1; i < res.match_probs.size(); ++i)
    if (res.match_probs[i] > res.match_probs[size_t(res.best_index)]) res.best_index = int(i);
  return res;
}

}  // namespace mcg
