#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mcg/nn.hpp"

namespace mcg {

/// Token table with the reserved control ids. File format: optional
/// leading "#reserved role=token ..." header lines, then one token per
/// line; a token's id is its line number in the body.
class Vocabulary {
 public:
  static Vocabulary parse(const std::string& text);
  static Vocabulary load(const std::string& path);
  std::string to_text() const;

  int size() const { return int(tokens_.size()); }
  int id_of(const std::string& token) const;  // -1 if absent
  const std::string& token_of(int id) const;
  bool is_reserved(int id) const;

  int pad_id = -1, unk_id = -1, cls_id = -1, sep_id = -1, mask_id = -1, gen_id = -1, eos_id = -1;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Small self-contained vocabulary used by the unit tests.
const std::string& toy_vocabulary_text();

struct TokenizedText {
  std::vector<int> ids;        // position 0 is [CLS]
  std::vector<bool> mask;      // true = real token
  int real_length() const;
};

/// Lowercase, split on whitespace with punctuation isolated, then greedy
/// longest-prefix subword matching; unmatchable characters become [UNK].
/// Output is [CLS] pieces... [SEP], tail-truncated to max_len.
TokenizedText tokenize(const std::string& text, const Vocabulary& vocab, int max_len = 40);

/// Joins non-reserved tokens with single spaces.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

/// Pads with [PAD] (mask=false) up to len.
TokenizedText pad_to(const TokenizedText& tok, int len, const Vocabulary& vocab);

struct TextEncoderConfig {
  int vocab_size = 0;
  int dim = 32;
  int depth = 2;
  int heads = 4;
  int max_len = 40;
};

/// The question-side encoder: token + position embeddings into a stack of
/// bidirectional pre-norm attention blocks. Row 0 of the output is the
/// instance summary y_cls.
class TextEncoder {
 public:
  TextEncoder(ParameterTree& tree, const std::string& prefix, const TextEncoderConfig& cfg,
              Rng& rng);
  Var encode(const TokenizedText& tok) const;
  const TextEncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln_attn, ln_ffn;
    AttentionBlock attn;
    FeedForward ffn;
  };
  TextEncoderConfig cfg_;
  Var token_embed_;
  Var pos_embed_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

}  // namespace mcg
