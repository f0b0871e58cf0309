#pragma once

#include "mcg/contrastive.hpp"
#include "mcg/generator.hpp"
#include "mcg/video_encoder.hpp"

namespace mcg {

struct ModelConfig {
  int d_x = 32;  // video token width
  int d_y = 32;  // text token width (also fusor/generator stream)
  int d_p = 32;  // instance projection space
  int d_m = 32;  // token memory space
  int video_depth = 2;
  int text_depth = 2;
  int fusor_depth = 2;
  int gen_depth = 2;
  int heads = 4;
  int patch = 8;
  int max_frames = 16;
  int max_resolution = 32;  // sizes the spatial position table
  int max_text_len = 40;
  int max_gen_len = 64;
  double tau1_init = 0.07;
  double tau2_init = 0.07;
  bool timesformer_residuals = false;
  SaliencyMode saliency = SaliencyMode::kUniform;
  GeneratorConditioning conditioning = GeneratorConditioning::kVideoAndFused;

  void validate() const;
};

struct AnswerResult {
  std::string text;
  bool truncated = false;
};

struct ChoiceResult {
  int best_index = -1;
  std::vector<double> match_probs;
};

/// The full MCG stack: unimodal encoders, contrastive heads, cross-modal
/// fusor with the matching head, and the answer generator, all sharing
/// one parameter tree. Forward passes are pure with respect to the tree
/// snapshot; only the trainer mutates parameters.
class McgModel {
 public:
  McgModel(const ModelConfig& cfg, Vocabulary vocab, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterTree& tree() { return tree_; }
  const ParameterTree& tree() const { return tree_; }

  const VideoEncoder& ivm() const { return ivm_; }
  const TextEncoder& iqm() const { return iqm_; }
  const CrossModalFusor& cfor() const { return cfor_; }
  const AnswerGenerator& agor() const { return agor_; }
  const VtmHead& vtm_head() const { return vtm_; }
  const ProjectionHead& g_x() const { return g_x_; }
  const ProjectionHead& g_y() const { return g_y_; }
  const LinearLayer& text_to_mem() const { return text_to_mem_; }
  const LinearLayer& video_to_mem() const { return video_to_mem_; }
  const TemperaturePair& temperatures() const { return temps_; }
  const SaliencyProvider& saliency() const { return saliency_; }

  Var encode_video(const NormalizedClip& clip) const { return ivm_.encode(clip); }
  Var encode_text(const TokenizedText& tok) const { return iqm_.encode(tok); }
  FusedEvidence fuse(const Var& text_tokens, const std::vector<bool>& text_mask,
                     const Var& video_tokens) const {
    return cfor_.fuse(text_tokens, text_mask, video_tokens);
  }

  /// Question pieces for the generator's conditioning segment (no control
  /// tokens).
  std::vector<int> question_condition_ids(const std::string& question) const;

  AnswerResult generate_answer(const NormalizedClip& clip, const std::string& question,
                               const DecodeConfig& decode) const;

  /// VTM-scores each candidate appended to the question; ties break
  /// toward the lowest index.
  ChoiceResult score_choices(const NormalizedClip& clip, const std::string& question,
                             const std::vector<std::string>& candidates) const;

 private:
  McgModel(const ModelConfig& cfg, Vocabulary vocab, std::unique_ptr<Rng> rng);

  ModelConfig cfg_;
  Vocabulary vocab_;
  ParameterTree tree_;
  VideoEncoder ivm_;
  TextEncoder iqm_;
  ProjectionHead g_x_, g_y_;
  LinearLayer text_to_mem_, video_to_mem_;
  TemperaturePair temps_;
  SaliencyProvider saliency_;
  CrossModalFusor cfor_;
  VtmHead vtm_;
  AnswerGenerator agor_;
};

}  // namespace mcg
