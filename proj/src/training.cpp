#include "mcg/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace mcg {

double total_loss(double l_mcl, double l_vtm, double l_lm, const TrainConfig& cfg) {
  const double l1 = cfg.effective_lambda1(), l2 = cfg.effective_lambda2();
  if (!std::isfinite(l_mcl)) fail("non-finite loss component: l_mcl");
  if (!std::isfinite(l_vtm)) fail("non-finite loss component: l_vtm");
  if (!std::isfinite(l_lm)) fail("non-finite loss component: l_lm");
  return l1 * l_mcl + l2 * l_vtm + cfg.lambda3 * l_lm;
}

AdamWReport adamw_step(ParameterTree& params, AdamWState& state, const TrainConfig& cfg,
                       double lr) {
  AdamWReport report;
  // Global gradient norm over the arrays touched by this backward pass.
  double sq = 0.0;
  bool finite = true;
  for (const auto& [name, var] : params.entries()) {
    if (!var->grad_touched) continue;
    for (size_t i = 0; i < var->grad.size(); ++i) {
      const double g = var->grad[i];
      if (!std::isfinite(g)) finite = false;
      sq += g * g;
    }
  }
  report.grad_norm = std::sqrt(sq);
  if (!finite || !std::isfinite(report.grad_norm)) {
    std::cerr << "step rejected: non-finite gradient\n";
    report.grad_norm = std::nan("");
    return report;
  }
  const double clip =
      cfg.clip_norm > 0 && report.grad_norm > cfg.clip_norm ? cfg.clip_norm / report.grad_norm
                                                            : 1.0;
  for (const auto& [name, var] : params.entries()) {
    if (!var->grad_touched) continue;
    Tensor& m = state.m.try_emplace(name, Tensor::zeros(var->value.rows(), var->value.cols()))
                    .first->second;
    Tensor& v = state.v.try_emplace(name, Tensor::zeros(var->value.rows(), var->value.cols()))
                    .first->second;
    int64_t& t = state.step_count.try_emplace(name, 0).first->second;
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (size_t i = 0; i < var->value.size(); ++i) {
      const double g = var->grad[i] * clip;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      var->value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                             cfg.weight_decay * var->value[i]);
    }
    ++report.updated;
  }
  return report;
}

ClassifierHead::ClassifierHead(ParameterTree& tree, const std::string& prefix, int dim,
                               std::vector<std::string> class_names, Rng& rng)
    : fc(tree, prefix, dim, int(class_names.size()) + 1, rng), classes(std::move(class_names)) {}

int ClassifierHead::index_of(const std::string& answer) const {
  for (size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == answer) return int(i);
  return unk_index();
}

Var classifier_loss(const Var& logits, int class_index) {
  return cross_entropy_rows(logits, {class_index}, {true});
}

// ---- synthetic dataset ----

namespace {

struct ColorDef {
  const char* name;
  uint8_t r, g, b;
};

constexpr ColorDef kColors[] = {{"red", 255, 0, 0},      {"green", 0, 255, 0},
                                {"blue", 0, 0, 255},     {"yellow", 255, 255, 0},
                                {"cyan", 0, 255, 255},   {"magenta", 255, 0, 255},
                                {"white", 255, 255, 255}, {"orange", 255, 128, 0}};
constexpr const char* kDirections[] = {"left", "right", "up", "down"};
constexpr const char* kSpeeds[] = {"slow", "fast"};
constexpr const char* kAdverbs[] = {"slowly", "quickly"};
constexpr int kSpeedPixels[] = {1, 2};

struct Attributes {
  int color, direction, speed;
};

std::vector<std::vector<uint8_t>> render_square_clip(const Attributes& a, int frames, int res) {
  const int side = std::max(2, res / 4);
  const int span = res - side;
  const ColorDef& c = kColors[a.color];
  int x = span / 2, y = span / 2, dx = 0, dy = 0;
  const int v = kSpeedPixels[a.speed];
  switch (a.direction) {
    case 0: x = span; dx = -v; break;  // left
    case 1: x = 0; dx = v; break;      // right
    case 2: y = span; dy = -v; break;  // up
    case 3: y = 0; dy = v; break;      // down
  }
  std::vector<std::vector<uint8_t>> out;
  for (int f = 0; f < frames; ++f) {
    std::vector<uint8_t> frame(size_t(res) * res * 3, 0);
    const int px = std::clamp(x + f * dx, 0, span);
    const int py = std::clamp(y + f * dy, 0, span);
    for (int yy = py; yy < py + side; ++yy)
      for (int xx = px; xx < px + side; ++xx) {
        const size_t at = (size_t(yy) * res + xx) * 3;
        frame[at] = c.r;
        frame[at + 1] = c.g;
        frame[at + 2] = c.b;
      }
    out.push_back(std::move(frame));
  }
  return out;
}

std::string synthetic_vocab_text(int vocab_size) {
  std::vector<std::string> words{"what", "color", "is",   "the",  "square", "which",
                                 "way",  "does",  "move", "moves", "how",   "fast",
                                 "slow", "slowly", "quickly"};
  for (const auto& c : kColors) words.push_back(c.name);
  for (const char* d : kDirections) words.push_back(d);
  std::string out =
      "#reserved pad=[PAD] unk=[UNK] cls=[CLS] sep=[SEP] mask=[MASK] gen=[GEN] eos=[EOS]\n"
      "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n[GEN]\n[EOS]\n";
  int count = 7;
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (!seen.insert(w).second) continue;
    out += w + "\n";
    ++count;
  }
  char buf[32];
  for (int i = 0; count < vocab_size; ++i, ++count) {
    std::snprintf(buf, sizeof(buf), "filler_%03d\n", i);
    out += buf;
  }
  return out;
}

}  // namespace

SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, uint64_t seed,
                                        const std::string& out_dir) {
  if (spec.pairs < 2) fail("make_synthetic_dataset: need at least 2 pairs");
  fs::create_directories(fs::path(out_dir) / "media");

  // All 8 x 4 x 2 = 64 attribute combinations, seeded order. The first
  // 64 examples are pairwise distinct, so captions identify clips.
  std::vector<Attributes> combos;
  for (int c = 0; c < 8; ++c)
    for (int d = 0; d < 4; ++d)
      for (int s = 0; s < 2; ++s) combos.push_back({c, d, s});
  Rng rng(mix_seed(seed, 0x5E4D));
  rng.shuffle(combos);

  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
  if (!manifest) fail("cannot write synthetic manifest");
  for (int i = 0; i < spec.pairs; ++i) {
    const Attributes a = combos[size_t(i) % combos.size()];
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "ex%03d", i);
    const std::string media_rel = std::string("media/") + idbuf + ".mcgv";
    auto frames = render_square_clip(a, spec.frames, spec.resolution);
    write_frame_stack((fs::path(out_dir) / media_rel).string(), frames, spec.resolution,
                      spec.resolution);

    ManifestRecord rec;
    rec.id = idbuf;
    rec.video = media_rel;
    rec.caption = std::string("the ") + kColors[a.color].name + " square moves " +
                  kDirections[a.direction] + " " + kAdverbs[a.speed];
    switch (i % 3) {
      case 0:
        rec.question = "what color is the square";
        rec.answer = kColors[a.color].name;
        rec.qtype = "Color";
        break;
      case 1:
        rec.question = "which way does the square move";
        rec.answer = kDirections[a.direction];
        rec.qtype = "Motion";
        break;
      default:
        rec.question = "how fast does the square move";
        rec.answer = kSpeeds[a.speed];
        rec.qtype = "Speed";
        break;
    }
    manifest << manifest_line(rec) << "\n";
  }
  manifest.close();

  const std::string vocab_path = (fs::path(out_dir) / "vocab.txt").string();
  std::ofstream vocab(vocab_path);
  vocab << synthetic_vocab_text(spec.vocab_size);
  vocab.close();

  SyntheticDataset out;
  out.manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  out.vocab_path = vocab_path;
  return out;
}

// ---- trainer ----

namespace {

/// Rows of real content tokens (no [CLS]/[SEP]/pads).
std::vector<int> content_rows(const TokenizedText& tok, const Vocabulary& vocab) {
  std::vector<int> rows;
  for (size_t i = 0; i < tok.ids.size(); ++i) {
    if (!tok.mask[i]) continue;
    if (tok.ids[i] == vocab.cls_id || tok.ids[i] == vocab.sep_id || tok.ids[i] == vocab.pad_id)
      continue;
    rows.push_back(int(i));
  }
  return rows;
}

std::vector<int> strip_controls(const TokenizedText& tok, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (size_t i = 0; i < tok.ids.size(); ++i) {
    if (!tok.mask[i]) continue;
    if (tok.ids[i] == vocab.cls_id || tok.ids[i] == vocab.sep_id || tok.ids[i] == vocab.pad_id)
      continue;
    ids.push_back(tok.ids[i]);
  }
  return ids;
}

}  // namespace

Trainer::Trainer(McgModel& model, const RunConfig& cfg, std::vector<ManifestRecord> records)
    : model_(model), cfg_(cfg), records_(std::move(records)) {
  if (records_.empty()) fail("trainer: empty dataset");
}

std::vector<int> Trainer::batch_record_indices(int64_t step) const {
  const int n = int(records_.size());
  const int b = std::min(cfg_.train.batch_size, n);
  const int per_epoch = std::max(1, n / b);
  const int64_t epoch = step / per_epoch;
  const int slot = int(step % per_epoch);
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[size_t(i)] = i;
  Rng rng(mix_seed(cfg_.train.seed, 0xE70C, uint64_t(epoch)));
  rng.shuffle(perm);
  const int first = slot * b;
  std::vector<int> out;
  for (int i = first; i < std::min(first + b, n); ++i) out.push_back(perm[size_t(i)]);
  return out;
}

TrainExample Trainer::load_example(const ManifestRecord& rec, uint64_t plan_seed,
                                   SampleMode mode) const {
  TrainExample ex;
  ex.id = rec.id;
  MediaSource src = MediaSource::open(rec.video);
  FrameIndexPlan plan =
      head_tail_sample(src.meta(), cfg_.train.frames, mode, plan_seed, cfg_.sampling);
  VideoClip clip = decode_frames(src, plan);
  ex.clip = resize_normalize(clip, cfg_.train.resolution, cfg_.image_mean, cfg_.image_std);

  const Vocabulary& vocab = model_.vocab();
  const std::string caption_text =
      rec.caption ? *rec.caption : rec.question + " " + rec.gold_answer();
  ex.caption = tokenize(caption_text, vocab, model_.config().max_text_len);
  ex.question = tokenize(rec.question, vocab, model_.config().max_text_len);
  ex.cond_ids = model_.question_condition_ids(rec.question);
  ex.answer_ids = strip_controls(tokenize(rec.gold_answer(), vocab, model_.config().max_text_len),
                                 vocab);
  return ex;
}

std::vector<TrainExample> Trainer::load_batch(int64_t step) const {
  const int n = int(records_.size());
  const int b = std::min(cfg_.train.batch_size, n);
  const int per_epoch = std::max(1, n / b);
  const int64_t epoch = step / per_epoch;
  std::vector<TrainExample> batch;
  for (int idx : batch_record_indices(step)) {
    const uint64_t plan_seed = mix_seed(cfg_.train.seed, uint64_t(epoch), uint64_t(idx));
    batch.push_back(load_example(records_[size_t(idx)], plan_seed, SampleMode::kTrain));
  }
  return batch;
}

LossBundle Trainer::train_step(const std::vector<TrainExample>& batch) {
  if (batch.empty()) fail("train_step: empty batch");
  const TrainConfig& tc = cfg_.train;
  const int b = int(batch.size());
  const bool mcl_active = tc.effective_lambda1() > 0.0;
  const bool vtm_active = tc.effective_lambda2() > 0.0;
  const bool lm_active = tc.lambda3 > 0.0;
  if (vtm_active && b < 2) fail("cannot form negatives: VTM needs batch size >= 2");

  model_.tree().zero_grads();
  const Vocabulary& vocab = model_.vocab();

  std::vector<Var> video_embeddings;
  video_embeddings.reserve(size_t(b));
  for (const auto& ex : batch) video_embeddings.push_back(model_.encode_video(ex.clip));

  std::vector<Var> caption_embeddings(static_cast<size_t>(b));
  if (mcl_active || vtm_active)
    for (int i = 0; i < b; ++i)
      caption_embeddings[size_t(i)] = model_.encode_text(batch[size_t(i)].caption);

  LossBundle bundle;
  Var total;
  auto accumulate = [&total](const Var& term) { total = total ? add(total, term) : term; };

  Var similarity;
  if (mcl_active || (vtm_active && cfg_.negative_mode == NegativeMode::kHard)) {
    std::vector<Var> x_cls, y_cls;
    for (int i = 0; i < b; ++i) {
      x_cls.push_back(slice_rows(video_embeddings[size_t(i)], 0, 1));
      y_cls.push_back(slice_rows(caption_embeddings[size_t(i)], 0, 1));
    }
    similarity = instance_similarity_matrix(x_cls, y_cls, model_.g_x(), model_.g_y());
  }

  if (mcl_active) {
    Var icl = icl_loss(similarity, model_.temperatures().tau1());
    TokenPairBatch pairs;
    for (int i = 0; i < b; ++i) {
      const Var& x = video_embeddings[size_t(i)];
      pairs.video_tokens.push_back(slice_rows(x, 1, x->value.rows() - 1));
      const auto rows = content_rows(batch[size_t(i)].caption, vocab);
      if (rows.empty()) fail("empty token set: caption of " + batch[size_t(i)].id);
      pairs.text_tokens.push_back(gather_rows(caption_embeddings[size_t(i)], rows));
    }
    Var tcl = tcl_loss(pairs, model_.saliency(), model_.temperatures().tau2(),
                       model_.text_to_mem(), model_.video_to_mem());
    bundle.l_icl = icl->value.item();
    bundle.l_tcl = tcl->value.item();
    Var mcl = mcl_loss(icl, tcl, tc.theta1, tc.theta2);
    bundle.l_mcl = mcl->value.item();
    accumulate(scale(mcl, tc.effective_lambda1()));
  }

  if (vtm_active) {
    const Tensor sim_values = similarity ? similarity->value : Tensor::zeros(b, b);
    const double tau1 = std::exp(model_.temperatures().log_tau1->value.item());
    const auto negatives = sample_negatives(sim_values, cfg_.negative_mode, tau1,
                                            mix_seed(tc.seed, 0x4E47, uint64_t(step_)));
    std::vector<VtmPrediction> preds;
    for (int i = 0; i < b; ++i) {
      FusedEvidence pos = model_.fuse(caption_embeddings[size_t(i)], batch[size_t(i)].caption.mask,
                                      video_embeddings[size_t(i)]);
      preds.push_back(model_.vtm_head().predict(pos, 0));
      const int j = negatives[size_t(i)];
      FusedEvidence neg = model_.fuse(caption_embeddings[size_t(j)], batch[size_t(j)].caption.mask,
                                      video_embeddings[size_t(i)]);
      preds.push_back(model_.vtm_head().predict(neg, 1));
    }
    Var vtm = vtm_loss(preds);
    bundle.l_vtm = vtm->value.item();
    accumulate(scale(vtm, tc.effective_lambda2()));
  }

  if (lm_active) {
    Var lm_sum;
    for (int i = 0; i < b; ++i) {
      const auto& ex = batch[size_t(i)];
      Var question_emb = model_.encode_text(ex.question);
      FusedEvidence fused =
          model_.fuse(question_emb, ex.question.mask, video_embeddings[size_t(i)]);
      std::vector<int> ids = ex.cond_ids;
      ids.push_back(vocab.gen_id);
      ids.insert(ids.end(), ex.answer_ids.begin(), ex.answer_ids.end());
      std::vector<int> targets(ids.size());
      std::vector<bool> supervised(ids.size(), false);
      for (size_t t = 0; t + 1 < ids.size(); ++t) targets[t] = ids[t + 1];
      targets.back() = vocab.eos_id;
      for (size_t t = ex.cond_ids.size(); t < ids.size(); ++t) supervised[t] = true;
      Var logits = model_.agor().forward_logits(ids, video_embeddings[size_t(i)], fused);
      Var ex_loss = lm_loss(logits, targets, supervised);
      lm_sum = lm_sum ? add(lm_sum, ex_loss) : ex_loss;
    }
    Var lm = scale(lm_sum, 1.0 / b);
    bundle.l_lm = lm->value.item();
    accumulate(scale(lm, tc.lambda3));
  }

  bundle.total = total_loss(bundle.l_mcl, bundle.l_vtm, bundle.l_lm, tc);
  if (total) {
    backward(total);
    adamw_step(model_.tree(), opt_, tc, lr_schedule(std::min<int64_t>(step_ + 1, tc.steps), tc));
  }
  ++step_;
  return bundle;
}

LossBundle Trainer::run_step() { return train_step(load_batch(step_)); }

}  // namespace mcg
