#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcg/generator.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace mcg;
using mcg::test::check_gradients;

namespace {

const Vocabulary& toy_vocab() {
  static Vocabulary v = Vocabulary::parse(toy_vocabulary_text());
  return v;
}

struct ToyFusor {
  ParameterTree tree;
  std::unique_ptr<CrossModalFusor> fusor;
  VtmHead vtm;
  ToyFusor(int dim, int video_dim, int depth, uint64_t seed) {
    FusorConfig cfg;
    cfg.dim = dim;
    cfg.video_dim = video_dim;
    cfg.depth = depth;
    cfg.heads = 2;
    Rng rng(seed);
    fusor = std::make_unique<CrossModalFusor>(tree, "cfor", cfg, rng);
    vtm = VtmHead(tree, "cfor.vtm_head", dim, rng);
  }
};

struct ToyGenerator {
  ParameterTree tree;
  std::unique_ptr<AnswerGenerator> gen;
  ToyGenerator(int dim, int video_dim, int depth, uint64_t seed, int max_len = 24,
               GeneratorConditioning cond = GeneratorConditioning::kVideoAndFused) {
    GeneratorConfig cfg;
    cfg.vocab_size = toy_vocab().size();
    cfg.dim = dim;
    cfg.video_dim = video_dim;
    cfg.depth = depth;
    cfg.heads = 2;
    cfg.max_len = max_len;
    cfg.conditioning = cond;
    Rng rng(seed);
    gen = std::make_unique<AnswerGenerator>(tree, "agor", cfg, rng);
  }
};

Var random_tokens(Rng& rng, int rows, int dim) { return leaf(init_normal(rng, rows, dim, 1.0)); }

std::vector<bool> all_true(int n) { return std::vector<bool>(size_t(n), true); }

}  // namespace

TEST_CASE("depth-zero fusor returns the normalized query sequence") {
  ToyFusor toy(8, 6, 0, 3);
  Rng rng(5);
  Var text = random_tokens(rng, 4, 8);
  Var video = random_tokens(rng, 5, 6);
  FusedEvidence fused = toy.fusor->fuse(text, all_true(4), video);
  REQUIRE(fused.tokens->value.rows() == 5);  // [FUS] + 4 text rows

  Tensor queries(5, 8);
  for (int c = 0; c < 8; ++c) queries(0, c) = toy.tree.get("cfor.fus")->value(0, c);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 8; ++c) queries(1 + r, c) = text->value(r, c);
  const Tensor expect = mcg::test::oracle_layernorm(
      queries, toy.tree.get("cfor.final_ln.gain")->value,
      toy.tree.get("cfor.final_ln.bias")->value);
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(fused.tokens->value[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("padded text tail never reaches the FUS row") {
  for (int depth : {0, 1, 2, 3}) {
    ToyFusor toy(8, 6, depth, 7 + uint64_t(depth));
    Rng rng(11);
    Var text = random_tokens(rng, 3, 8);
    Var video = random_tokens(rng, 5, 6);
    FusedEvidence base = toy.fusor->fuse(text, all_true(3), video);

    // Same three real rows plus two padded rows with arbitrary content.
    Tensor padded_vals(5, 8);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 8; ++c) padded_vals(r, c) = text->value(r, c);
    for (int r = 3; r < 5; ++r)
      for (int c = 0; c < 8; ++c) padded_vals(r, c) = 99.0 + r + c;
    Var padded = leaf(padded_vals);
    FusedEvidence with_pads = toy.fusor->fuse(padded, {true, true, true, false, false}, video);

    for (int r = 0; r < 4; ++r)  // FUS + 3 real rows
      for (int c = 0; c < 8; ++c)
        CHECK(std::fabs(base.tokens->value(r, c) - with_pads.tokens->value(r, c)) < 1e-6);
  }
}

TEST_CASE("fusor block matches the SA/CA loop oracle") {
  ToyFusor toy(8, 6, 1, 13);
  Rng rng(17);
  Var text = random_tokens(rng, 3, 8);
  Var video = random_tokens(rng, 4, 6);
  FusedEvidence fused = toy.fusor->fuse(text, all_true(3), video);

  auto weights = [&](const std::string& p) {
    mcg::test::OracleAttentionWeights w;
    w.wq = toy.tree.get(p + ".q.weight")->value;
    w.bq = toy.tree.get(p + ".q.bias")->value;
    w.wk = toy.tree.get(p + ".k.weight")->value;
    w.bk = toy.tree.get(p + ".k.bias")->value;
    w.wv = toy.tree.get(p + ".v.weight")->value;
    w.bv = toy.tree.get(p + ".v.bias")->value;
    w.wo = toy.tree.get(p + ".o.weight")->value;
    w.bo = toy.tree.get(p + ".o.bias")->value;
    return w;
  };
  auto ln = [&](const Tensor& x, const std::string& p) {
    return mcg::test::oracle_layernorm(x, toy.tree.get(p + ".gain")->value,
                                       toy.tree.get(p + ".bias")->value);
  };

  Tensor h(4, 8);
  for (int c = 0; c < 8; ++c) h(0, c) = toy.tree.get("cfor.fus")->value(0, c);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) h(1 + r, c) = text->value(r, c);

  Tensor sa = mcg::test::oracle_attention_layer(ln(h, "cfor.block0.ln_sa"),
                                                ln(h, "cfor.block0.ln_sa"),
                                                weights("cfor.block0.sa"), 2, Tensor::ones(4, 4));
  h.add_inplace(sa);
  Tensor ca = mcg::test::oracle_attention_layer(ln(h, "cfor.block0.ln_ca"), video->value,
                                                weights("cfor.block0.ca"), 2, Tensor::ones(4, 4));
  h.add_inplace(ca);
  Tensor f1 = mcg::test::oracle_gelu(
      mcg::test::oracle_linear(ln(h, "cfor.block0.ln_ffn"),
                               toy.tree.get("cfor.block0.ffn.fc1.weight")->value,
                               toy.tree.get("cfor.block0.ffn.fc1.bias")->value));
  h.add_inplace(mcg::test::oracle_linear(f1, toy.tree.get("cfor.block0.ffn.fc2.weight")->value,
                                         toy.tree.get("cfor.block0.ffn.fc2.bias")->value));
  Tensor expect = ln(h, "cfor.final_ln");
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(fused.tokens->value[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("vtm head produces chance probabilities with zero weights") {
  ToyFusor toy(8, 6, 0, 19);
  toy.vtm.fc.weight->value.fill(0.0);
  toy.vtm.fc.bias->value.fill(0.0);
  Rng rng(23);
  FusedEvidence fused = toy.fusor->fuse(random_tokens(rng, 3, 8), all_true(3),
                                        random_tokens(rng, 4, 6));
  VtmPrediction pred = toy.vtm.predict(fused);
  CHECK(pred.probs->value(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pred.probs->value(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(vtm_loss({pred})->value.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("vtm head matches a hand softmax and extreme losses behave") {
  ToyFusor toy(8, 6, 1, 29);
  Rng rng(31);
  FusedEvidence fused = toy.fusor->fuse(random_tokens(rng, 3, 8), all_true(3),
                                        random_tokens(rng, 4, 6));
  VtmPrediction pred = toy.vtm.predict(fused);
  const Tensor logits = mcg::test::oracle_linear(fused.tokens->value, Tensor(0, 0), Tensor(0, 0));
  (void)logits;  // logits recomputed below from the head weights
  Tensor fus(1, 8);
  for (int c = 0; c < 8; ++c) fus(0, c) = fused.tokens->value(0, c);
  const Tensor z = mcg::test::oracle_linear(fus, toy.vtm.fc.weight->value, toy.vtm.fc.bias->value);
  const auto p = mcg::test::oracle_softmax({z(0, 0), z(0, 1)});
  CHECK(pred.probs->value(0, 0) == doctest::Approx(p[0]).epsilon(1e-9));
  CHECK(pred.probs->value(0, 1) == doctest::Approx(p[1]).epsilon(1e-9));

  VtmPrediction perfect;
  perfect.probs = constant(Tensor{{1.0, 0.0}});
  perfect.label = 0;
  CHECK(vtm_loss({perfect})->value.item() == doctest::Approx(1e-7).epsilon(0.01));
}

TEST_CASE("negative sampling covers both modes") {
  Tensor s2(2, 2);
  CHECK(sample_negatives(s2, NegativeMode::kUniform, 0.1, 7) == std::vector<int>{1, 0});
  CHECK(sample_negatives(s2, NegativeMode::kHard, 0.1, 7) == std::vector<int>{1, 0});

  Tensor s1(1, 1);
  CHECK_THROWS_WITH_AS(sample_negatives(s1, NegativeMode::kUniform, 0.1, 7),
                       doctest::Contains("cannot form negatives"), Error);

  // Determinism.
  Rng rng(37);
  Tensor s(4, 4);
  for (size_t i = 0; i < s.size(); ++i) s[i] = rng.normal();
  CHECK(sample_negatives(s, NegativeMode::kUniform, 0.1, 11) ==
        sample_negatives(s, NegativeMode::kUniform, 0.1, 11));
  CHECK(sample_negatives(s, NegativeMode::kHard, 0.1, 11) ==
        sample_negatives(s, NegativeMode::kHard, 0.1, 11));

  // A dominant off-diagonal entry wins most hard draws.
  Tensor dom(3, 3);
  dom(0, 1) = 5.0;  // row 0 favors j=1 strongly at tau=0.5
  int hits = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed)
    hits += sample_negatives(dom, NegativeMode::kHard, 0.5, seed)[0] == 1 ? 1 : 0;
  CHECK(hits > 900);

  // Uniform mode draws j != i roughly evenly.
  std::vector<int> counts(4, 0);
  for (uint64_t seed = 0; seed < 2000; ++seed) counts[size_t(
      sample_negatives(s, NegativeMode::kUniform, 0.1, seed)[2])]++;
  CHECK(counts[2] == 0);
  for (int j : {0, 1, 3}) CHECK(counts[size_t(j)] > 500);
}

TEST_CASE("causal invariance: later prefix tokens never affect earlier logits") {
  for (int depth : {0, 1, 2, 3}) {
    ToyGenerator toy(8, 6, depth, 41 + uint64_t(depth));
    Rng rng(43);
    Var video = random_tokens(rng, 4, 6);
    FusedEvidence fused;
    fused.tokens = random_tokens(rng, 3, 8);
    fused.query_mask = all_true(3);

    std::vector<int> ids{toy_vocab().gen_id, 7, 8, 9, 10};
    Var base = toy.gen->forward_logits(ids, video, fused);
    std::vector<int> mutated = ids;
    mutated[4] = 20;  // perturb the last prefix token
    Var out = toy.gen->forward_logits(mutated, video, fused);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < base->value.cols(); ++c)
        CHECK(std::fabs(base->value(r, c) - out->value(r, c)) < 1e-6);
  }
}

TEST_CASE("depth-zero generator logits are output-projected normalized embeddings") {
  ToyGenerator toy(8, 6, 0, 47);
  Rng rng(53);
  Var video = random_tokens(rng, 4, 6);
  FusedEvidence fused;
  fused.tokens = random_tokens(rng, 3, 8);
  fused.query_mask = all_true(3);
  std::vector<int> ids{toy_vocab().gen_id, 9, 14};
  Var logits = toy.gen->forward_logits(ids, video, fused);

  const Tensor& emb = toy.tree.get("agor.embed.token")->value;
  const Tensor& pos = toy.tree.get("agor.embed.position")->value;
  Tensor h(3, 8);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) h(r, c) = emb(ids[size_t(r)], c) + pos(r, c);
  const Tensor normed = mcg::test::oracle_layernorm(
      h, toy.tree.get("agor.final_ln.gain")->value, toy.tree.get("agor.final_ln.bias")->value);
  const Tensor expect = matmul_values(normed, emb, false, true);
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(logits->value[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("incremental decoding reproduces teacher-forced logits") {
  for (int depth : {0, 1, 2, 3}) {
    ToyGenerator toy(8, 6, depth, 59 + uint64_t(depth));
    Rng rng(61);
    Var video = random_tokens(rng, 5, 6);
    FusedEvidence fused;
    fused.tokens = random_tokens(rng, 4, 8);
    fused.query_mask = all_true(4);

    std::vector<int> cond{7, 8};
    std::vector<int> gen{toy_vocab().gen_id, 26, 34};
    std::vector<int> full = cond;
    full.insert(full.end(), gen.begin(), gen.end());
    Var teacher = toy.gen->forward_logits(full, video, fused);

    for (size_t t = size_t(cond.size()); t < full.size(); ++t) {
      GenerationState state;
      state.cond_ids = cond;
      state.gen_ids = std::vector<int>(full.begin() + long(cond.size()), full.begin() + long(t) + 1);
      Var step = toy.gen->step_logits(state, video, fused);
      for (int c = 0; c < step->value.cols(); ++c)
        CHECK(std::fabs(step->value(0, c) - teacher->value(int(t), c)) < 1e-5);
    }
  }
}

TEST_CASE("lm loss exact values and loop oracle") {
  const int v = 100;
  Var uniform = constant(Tensor::zeros(4, v));
  std::vector<int> targets{3, 17, 0, 99};
  Var l = lm_loss(uniform, targets, {true, true, true, true});
  CHECK(l->value.item() == doctest::Approx(std::log(100.0)).epsilon(1e-9));

  // Near one-hot logits drive the loss to zero.
  Tensor sharp(2, v);
  sharp(0, 3) = 50.0;
  sharp(1, 17) = 50.0;
  Var l2 = lm_loss(constant(sharp), {3, 17}, {true, true});
  CHECK(l2->value.item() < 1e-9);

  // Random instance against a loop oracle.
  Rng rng(67);
  Tensor z(3, 7);
  for (size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
  std::vector<int> t{2, 5, 1};
  std::vector<bool> sup{true, false, true};
  double expect = 0.0;
  int count = 0;
  for (int r = 0; r < 3; ++r) {
    if (!sup[size_t(r)]) continue;
    std::vector<double> row(7);
    for (int c = 0; c < 7; ++c) row[size_t(c)] = z(r, c);
    expect -= std::log(mcg::test::oracle_softmax(row)[size_t(t[size_t(r)])]);
    ++count;
  }
  expect /= count;
  CHECK(lm_loss(constant(z), t, sup)->value.item() == doctest::Approx(expect).epsilon(1e-9));

  CHECK_THROWS_WITH_AS(lm_loss(constant(z), t, {false, false, false}), "no supervised positions",
                       Error);
}

TEST_CASE("beam width one is exactly greedy and decoding is deterministic") {
  ToyGenerator toy(8, 6, 2, 71);
  Rng rng(73);
  Var video = random_tokens(rng, 4, 6);
  FusedEvidence fused;
  fused.tokens = random_tokens(rng, 3, 8);
  fused.query_mask = all_true(3);
  const std::vector<int> question{7, 8, 9};

  DecodeConfig greedy;
  greedy.mode = DecodeConfig::Mode::kGreedy;
  greedy.max_len = 6;
  DecodeConfig beam1;
  beam1.mode = DecodeConfig::Mode::kBeam;
  beam1.beam_width = 1;
  beam1.max_len = 6;

  auto g1 = decode_answer(*toy.gen, question, video, fused, toy_vocab(), greedy);
  auto g2 = decode_answer(*toy.gen, question, video, fused, toy_vocab(), greedy);
  auto b1 = decode_answer(*toy.gen, question, video, fused, toy_vocab(), beam1);
  CHECK(g1.answer_ids == g2.answer_ids);
  CHECK(g1.answer_ids == b1.answer_ids);
  CHECK(g1.truncated == b1.truncated);

  DecodeConfig beam3 = beam1;
  beam3.beam_width = 3;
  auto b3 = decode_answer(*toy.gen, question, video, fused, toy_vocab(), beam3);
  CHECK(int(b3.answer_ids.size()) <= 6);
}

TEST_CASE("prefix overflow raises generation overflow") {
  ToyGenerator toy(8, 6, 1, 79, /*max_len=*/6);
  Rng rng(83);
  Var video = random_tokens(rng, 4, 6);
  FusedEvidence fused;
  fused.tokens = random_tokens(rng, 3, 8);
  fused.query_mask = all_true(3);
  std::vector<int> ids(7, 9);
  CHECK_THROWS_WITH_AS(toy.gen->forward_logits(ids, video, fused),
                       doctest::Contains("generation overflow"), Error);
}

TEST_CASE("fused-only conditioning ignores the video stream") {
  ToyGenerator toy(8, 6, 2, 89, 24, GeneratorConditioning::kFusedOnly);
  Rng rng(97);
  Var video_a = random_tokens(rng, 4, 6);
  Var video_b = random_tokens(rng, 4, 6);
  FusedEvidence fused;
  fused.tokens = random_tokens(rng, 3, 8);
  fused.query_mask = all_true(3);
  std::vector<int> ids{toy_vocab().gen_id, 12};
  Var la = toy.gen->forward_logits(ids, video_a, fused);
  Var lb = toy.gen->forward_logits(ids, video_b, fused);
  for (size_t i = 0; i < la->value.size(); ++i) CHECK(la->value[i] == lb->value[i]);
}

TEST_CASE("vtm and lm gradients flow through fusor and generator parameters") {
  ToyFusor fusor_toy(8, 6, 1, 101);
  ToyGenerator gen_toy(8, 6, 1, 103);
  Rng rng(107);
  Var text = random_tokens(rng, 3, 8);
  Var video = random_tokens(rng, 4, 6);

  std::vector<Var> fusor_leaves{text, video};
  for (const auto& [name, var] : fusor_toy.tree.entries()) fusor_leaves.push_back(var);
  auto vtm_res = check_gradients(fusor_leaves, [&] {
    FusedEvidence fused = fusor_toy.fusor->fuse(text, all_true(3), video);
    VtmPrediction pos = fusor_toy.vtm.predict(fused, 0);
    VtmPrediction neg = fusor_toy.vtm.predict(fused, 1);
    return vtm_loss({pos, neg});
  });
  CHECK(vtm_res.ok);
  CHECK(vtm_res.max_rel_err < 1e-4);

  std::vector<Var> gen_leaves{video};
  for (const auto& [name, var] : gen_toy.tree.entries()) gen_leaves.push_back(var);
  FusedEvidence fused;
  fused.tokens = random_tokens(rng, 3, 8);
  fused.query_mask = all_true(3);
  gen_leaves.push_back(fused.tokens);
  std::vector<int> ids{7, toy_vocab().gen_id, 26, toy_vocab().eos_id};
  std::vector<int> targets{toy_vocab().gen_id, 26, toy_vocab().eos_id, 0};
  std::vector<bool> sup{false, true, true, false};
  mcg::test::GradCheckOptions opt;
  opt.max_entries_per_leaf = 60;
  auto lm_res = check_gradients(gen_leaves, [&] {
    return lm_loss(gen_toy.gen->forward_logits(ids, video, fused), targets, sup);
  }, opt);
  CHECK(lm_res.ok);
  CHECK(lm_res.max_rel_err < 1e-4);
}
