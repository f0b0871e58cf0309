#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcg/text_encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace mcg;
using mcg::test::check_gradients;

namespace {

const Vocabulary& toy_vocab() {
  static Vocabulary v = Vocabulary::parse(toy_vocabulary_text());
  return v;
}

struct ToyTextEncoder {
  ParameterTree tree;
  std::unique_ptr<TextEncoder> enc;
  ToyTextEncoder(int dim, int depth, uint64_t seed, int max_len = 16) {
    TextEncoderConfig cfg;
    cfg.vocab_size = toy_vocab().size();
    cfg.dim = dim;
    cfg.depth = depth;
    cfg.heads = 2;
    cfg.max_len = max_len;
    Rng rng(seed);
    enc = std::make_unique<TextEncoder>(tree, "iqm", cfg, rng);
  }
};

}  // namespace

TEST_CASE("vocabulary parses reserved roles and round-trips") {
  const auto& v = toy_vocab();
  CHECK(v.pad_id == 0);
  CHECK(v.unk_id == 1);
  CHECK(v.cls_id == 2);
  CHECK(v.sep_id == 3);
  CHECK(v.mask_id == 4);
  CHECK(v.gen_id == 5);
  CHECK(v.eos_id == 6);
  CHECK(v.size() > 50);

  Vocabulary again = Vocabulary::parse(v.to_text());
  CHECK(again.size() == v.size());
  CHECK(again.id_of("doing") == v.id_of("doing"));

  CHECK_THROWS_WITH_AS(Vocabulary::parse("#reserved pad=[PAD]\n[PAD]\n"),
                       doctest::Contains("missing reserved role"), Error);
}

TEST_CASE("empty string tokenizes to [CLS][SEP]") {
  auto tok = tokenize("", toy_vocab(), 40);
  CHECK(tok.ids == std::vector<int>{toy_vocab().cls_id, toy_vocab().sep_id});
  CHECK(tok.mask == std::vector<bool>{true, true});
}

TEST_CASE("golden ids for 'what is the man doing'") {
  auto tok = tokenize("what is the man doing", toy_vocab(), 40);
  // Frozen from one hand-run of the greedy matcher over the bundled
  // vocabulary (ids are body line numbers).
  CHECK(tok.ids == std::vector<int>{2, 7, 8, 9, 10, 11, 3});
}

TEST_CASE("tokenize round-trips an in-vocab sentence up to casing") {
  const std::string text = "The man is walking";
  auto tok = tokenize(text, toy_vocab(), 40);
  CHECK(detokenize(tok.ids, toy_vocab()) == "the man is walking");
}

TEST_CASE("greedy longest-match prefers whole words and splits the rest") {
  const auto& v = toy_vocab();
  auto doing = tokenize("doing", v, 40);
  CHECK(doing.ids == std::vector<int>{v.cls_id, v.id_of("doing"), v.sep_id});

  auto runner = tokenize("runner", v, 40);
  CHECK(runner.ids == std::vector<int>{v.cls_id, v.id_of("run"), v.id_of("ner"), v.sep_id});

  auto unknown = tokenize("zq", v, 40);
  CHECK(unknown.ids == std::vector<int>{v.cls_id, v.unk_id, v.unk_id, v.sep_id});

  auto punct = tokenize("what?", v, 40);
  CHECK(punct.ids == std::vector<int>{v.cls_id, v.id_of("what"), v.id_of("?"), v.sep_id});
}

TEST_CASE("tokenize truncates the tail to max_len") {
  auto tok = tokenize("what is the man doing in the park today", toy_vocab(), 6);
  CHECK(int(tok.ids.size()) == 6);
  CHECK(tok.ids.front() == toy_vocab().cls_id);
  CHECK(tok.ids.back() == toy_vocab().sep_id);
  CHECK(tok.ids[1] == toy_vocab().id_of("what"));
}

TEST_CASE("padding never influences real positions at any depth") {
  for (int depth : {0, 1, 2}) {
    ToyTextEncoder toy(16, depth, 100 + uint64_t(depth));
    auto tok = tokenize("what is the man doing", toy_vocab(), 16);
    auto padded = pad_to(tok, 12, toy_vocab());
    Var plain = toy.enc->encode(tok);
    Var with_pads = toy.enc->encode(padded);
    for (int r = 0; r < int(tok.ids.size()); ++r)
      for (int c = 0; c < 16; ++c)
        CHECK(std::fabs(plain->value(r, c) - with_pads->value(r, c)) < 1e-12);
  }
}

TEST_CASE("depth zero equals normalized embedding plus position") {
  ToyTextEncoder toy(16, 0, 7);
  auto tok = tokenize("the dog", toy_vocab(), 16);
  Var out = toy.enc->encode(tok);
  const Tensor& emb = toy.tree.get("iqm.embed.token")->value;
  const Tensor& pos = toy.tree.get("iqm.embed.position")->value;
  Tensor raw(int(tok.ids.size()), 16);
  for (size_t i = 0; i < tok.ids.size(); ++i)
    for (int c = 0; c < 16; ++c) raw(int(i), c) = emb(tok.ids[i], c) + pos(int(i), c);
  const Tensor expect = mcg::test::oracle_layernorm(
      raw, toy.tree.get("iqm.final_ln.gain")->value, toy.tree.get("iqm.final_ln.bias")->value);
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(out->value[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("batch order does not leak across examples") {
  ToyTextEncoder toy(16, 2, 11);
  auto a = tokenize("what is the man doing", toy_vocab(), 16);
  auto b = tokenize("the dog runs", toy_vocab(), 16);
  Var a1 = toy.enc->encode(a);
  Var b1 = toy.enc->encode(b);
  Var b2 = toy.enc->encode(b);
  Var a2 = toy.enc->encode(a);
  for (size_t i = 0; i < a1->value.size(); ++i) CHECK(a1->value[i] == a2->value[i]);
  for (size_t i = 0; i < b1->value.size(); ++i) CHECK(b1->value[i] == b2->value[i]);
}

TEST_CASE("ids beyond the vocabulary raise vocabulary overflow") {
  ToyTextEncoder toy(16, 1, 13);
  TokenizedText tok;
  tok.ids = {toy_vocab().cls_id, toy_vocab().size() + 3, toy_vocab().sep_id};
  tok.mask = {true, true, true};
  CHECK_THROWS_WITH_AS(toy.enc->encode(tok), doctest::Contains("vocabulary overflow"), Error);
}

TEST_CASE("text encoder gradients pass finite differences") {
  ToyTextEncoder toy(16, 1, 17);
  auto tok = tokenize("the cat runs fast", toy_vocab(), 16);
  std::vector<Var> leaves;
  for (const auto& [name, var] : toy.tree.entries()) leaves.push_back(var);
  mcg::test::GradCheckOptions opt;
  opt.max_entries_per_leaf = 40;  // the embedding table is mostly untouched rows
  auto res = check_gradients(leaves, [&] { return sum_all(toy.enc->encode(tok)); }, opt);
  CHECK(res.ok);
  CHECK(res.max_rel_err < 1e-4);
}
