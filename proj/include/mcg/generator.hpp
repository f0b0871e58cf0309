#pragma once

#include "mcg/fusion.hpp"

namespace mcg {

/// Decoder prefix: a fixed conditioning segment (the question pieces)
/// followed by the generation segment, which always starts with [GEN].
struct GenerationState {
  std::vector<int> cond_ids;
  std::vector<int> gen_ids;
  bool finished = false;
  bool truncated = false;
  std::vector<int> full_ids() const;
};

enum class GeneratorConditioning { kVideoAndFused, kFusedOnly };

struct GeneratorConfig {
  int vocab_size = 0;
  int dim = 32;
  int video_dim = 32;
  int depth = 2;
  int heads = 4;
  int max_len = 64;  // position table / hard prefix limit
  GeneratorConditioning conditioning = GeneratorConditioning::kVideoAndFused;
};

/// The answer generator: causal self-attention blocks with cross-attention
/// into the video tokens and the fused evidence; the output projection is
/// weight-tied to the token embedding table.
class AnswerGenerator {
 public:
  AnswerGenerator(ParameterTree& tree, const std::string& prefix, const GeneratorConfig& cfg,
                  Rng& rng);

  /// Teacher-forced logits for every position of `ids`. [len x V]
  Var forward_logits(const std::vector<int>& ids, const Var& video_tokens,
                     const FusedEvidence& fused) const;
  /// Next-token logits for the state's current prefix. [1 x V]
  Var step_logits(const GenerationState& state, const Var& video_tokens,
                  const FusedEvidence& fused) const;

  const GeneratorConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln_sa, ln_ca, ln_ffn;
    AttentionBlock sa, ca;          // ca projects the video memory
    LinearLayer ca_fused_k, ca_fused_v;  // fused-evidence keys/values
    FeedForward ffn;
  };
  GeneratorConfig cfg_;
  Var token_embed_;
  Var pos_embed_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

/// Mean next-token negative log-likelihood over supervised positions.
/// Position t's logits predict targets[t]; mask excludes pads and the
/// conditioning segment.
Var lm_loss(const Var& logits, const std::vector<int>& targets,
            const std::vector<bool>& supervised);

struct DecodeConfig {
  enum class Mode { kGreedy, kBeam } mode = Mode::kGreedy;
  int beam_width = 1;
  int max_len = 8;  // maximum generated tokens (including [EOS])
};

struct DecodeResult {
  std::vector<int> answer_ids;  // generated ids without [GEN]/[EOS]
  bool truncated = false;
};

/// Autoregressive decoding from [GEN] until [EOS] or the budget runs out.
/// Greedy takes the argmax with index-order tie-breaking; beam keeps
/// `beam_width` hypotheses ranked by length-normalized log-probability.
DecodeResult decode_answer(const AnswerGenerator& gen, const std::vector<int>& question_ids,
                           const Var& video_tokens, const FusedEvidence& fused,
                           const Vocabulary& vocab, const DecodeConfig& cfg);

}  // namespace mcg
