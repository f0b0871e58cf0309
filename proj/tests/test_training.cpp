#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mcg/training.hpp"
#include "support/gradcheck.hpp"

using namespace mcg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("mcg_train_" + tag + "_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Tiny end-to-end fixture: 4-pair synthetic set, 8x8 frames, width-8 model.
struct TinyRun {
  fs::path dir;
  RunConfig cfg;
  std::unique_ptr<McgModel> model;
  std::unique_ptr<Trainer> trainer;

  explicit TinyRun(const std::string& tag, uint64_t seed = 5, int pairs = 4) {
    dir = temp_dir(tag);
    SyntheticSpec spec;
    spec.pairs = pairs;
    spec.frames = 6;
    spec.resolution = 8;
    spec.vocab_size = 40;
    auto data = make_synthetic_dataset(spec, 17, dir.string());

    cfg.train.stage = TrainStage::kPretrain;
    cfg.train.batch_size = 2;
    cfg.train.steps = 20;
    cfg.train.seed = seed;
    cfg.train.frames = 2;
    cfg.train.resolution = 8;
    cfg.model.d_x = cfg.model.d_y = cfg.model.d_p = cfg.model.d_m = 8;
    cfg.model.video_depth = cfg.model.text_depth = cfg.model.fusor_depth = cfg.model.gen_depth = 1;
    cfg.model.heads = 2;
    cfg.model.patch = 4;
    cfg.model.max_frames = 4;
    cfg.model.max_resolution = 8;
    cfg.model.max_text_len = 16;
    cfg.model.max_gen_len = 24;
    cfg.manifest_path = data.manifest_path;
    cfg.vocab_path = data.vocab_path;

    model = std::make_unique<McgModel>(cfg.model, Vocabulary::load(data.vocab_path),
                                       cfg.train.seed);
    trainer = std::make_unique<Trainer>(*model, cfg, load_manifest(data.manifest_path));
  }
  ~TinyRun() { fs::remove_all(dir); }
};

bool bundles_equal(const LossBundle& a, const LossBundle& b) {
  return a.l_icl == b.l_icl && a.l_tcl == b.l_tcl && a.l_mcl == b.l_mcl && a.l_vtm == b.l_vtm &&
         a.l_lm == b.l_lm && a.total == b.total;
}

}  // namespace

TEST_CASE("lr schedule warms up, peaks, and decays linearly") {
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.warmup_frac = 0.1;
  cfg.peak_lr = 1e-4;
  cfg.final_lr = 1e-5;
  CHECK(lr_schedule(0, cfg) == doctest::Approx(0.0));
  CHECK(lr_schedule(10, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(100, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_schedule(55, cfg) == doctest::Approx(5.5e-5).epsilon(1e-12));
  // Continuous and maximal at the warmup boundary.
  double prev = lr_schedule(0, cfg);
  for (int s = 1; s <= 100; ++s) {
    const double cur = lr_schedule(s, cfg);
    CHECK(std::fabs(cur - prev) < 1.1e-5);
    CHECK(cur <= 1e-4 + 1e-15);
    prev = cur;
  }
}

TEST_CASE("total loss weighting and the fine-tune override") {
  TrainConfig cfg;
  cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = 1.0;
  CHECK(total_loss(1, 2, 3, cfg) == doctest::Approx(6.0));

  cfg.stage = TrainStage::kFinetune;
  cfg.lambda3 = 0.7;
  CHECK(total_loss(123.0, 456.0, 3.0, cfg) == doctest::Approx(0.7 * 3.0));

  cfg.stage = TrainStage::kPretrain;
  cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = 0.0;
  CHECK(total_loss(1, 2, 3, cfg) == doctest::Approx(0.0));

  CHECK_THROWS_WITH_AS(total_loss(std::nan(""), 0, 0, TrainConfig{}),
                       doctest::Contains("l_mcl"), Error);
  CHECK_THROWS_WITH_AS(total_loss(0, std::nan(""), 0, TrainConfig{}),
                       doctest::Contains("l_vtm"), Error);
}

TEST_CASE("total loss is exactly linear in each lambda") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    TrainConfig cfg;
    cfg.lambda1 = rng.uniform();
    cfg.lambda2 = rng.uniform();
    cfg.lambda3 = rng.uniform();
    const double mcl = rng.normal(), vtm = rng.normal(), lm = rng.normal();
    const double base = total_loss(mcl, vtm, lm, cfg);
    TrainConfig bumped = cfg;
    bumped.lambda2 = cfg.lambda2 + 1.0;
    CHECK(total_loss(mcl, vtm, lm, bumped) - base == doctest::Approx(vtm).epsilon(1e-9));
  }
}

TEST_CASE("synthetic dataset is byte-deterministic with consistent answers") {
  auto d1 = temp_dir("synth1");
  auto d2 = temp_dir("synth2");
  SyntheticSpec spec;
  spec.pairs = 8;
  spec.frames = 6;
  spec.resolution = 16;
  spec.vocab_size = 40;
  auto a = make_synthetic_dataset(spec, 123, d1.string());
  auto b = make_synthetic_dataset(spec, 123, d2.string());
  CHECK(file_bytes(a.manifest_path) == file_bytes(b.manifest_path));
  CHECK(file_bytes(a.vocab_path) == file_bytes(b.vocab_path));

  auto records = load_manifest(a.manifest_path);
  REQUIRE(int(records.size()) == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(file_bytes(records[size_t(i)].video) ==
          file_bytes((d2 / "media" / (records[size_t(i)].id + ".mcgv")).string()));
  }

  // Pixel-level attribute decoding must agree with the manifest answers.
  for (const auto& rec : records) {
    MediaSource src = MediaSource::open(rec.video);
    auto first = src.frame(0);
    auto second = src.frame(1);
    const int res = src.width();
    auto centroid = [res](const std::vector<uint8_t>& f, double& cx, double& cy) {
      double sx = 0, sy = 0;
      int count = 0;
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const size_t at = (size_t(y) * res + x) * 3;
          if (f[at] || f[at + 1] || f[at + 2]) {
            sx += x;
            sy += y;
            ++count;
          }
        }
      cx = sx / count;
      cy = sy / count;
    };
    double x0, y0, x1, y1;
    centroid(first, x0, y0);
    centroid(second, x1, y1);
    const double dx = x1 - x0, dy = y1 - y0;
    std::string direction;
    double speed_px = 0.0;
    if (std::fabs(dx) > std::fabs(dy)) {
      direction = dx < 0 ? "left" : "right";
      speed_px = std::fabs(dx);
    } else {
      direction = dy < 0 ? "up" : "down";
      speed_px = std::fabs(dy);
    }
    const std::string speed = speed_px > 1.5 ? "fast" : "slow";
    const size_t at = (size_t(std::lround(y0)) * res + size_t(std::lround(x0))) * 3;
    const int r = first[at], g = first[at + 1], bl = first[at + 2];
    std::string color;
    if (r > 128 && g > 128 && bl > 128) color = "white";
    else if (r > 128 && g > 60 && g < 200 && bl < 60) color = "orange";
    else if (r > 128 && g > 128) color = "yellow";
    else if (r > 128 && bl > 128) color = "magenta";
    else if (g > 128 && bl > 128) color = "cyan";
    else if (r > 128) color = "red";
    else if (g > 128) color = "green";
    else color = "blue";

    if (rec.qtype == "Color") CHECK(*rec.answer == color);
    if (rec.qtype == "Motion") CHECK(*rec.answer == direction);
    if (rec.qtype == "Speed") CHECK(*rec.answer == speed);
    REQUIRE(rec.caption.has_value());
    CHECK(rec.caption->find(color) != std::string::npos);
    CHECK(rec.caption->find(direction) != std::string::npos);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("checkpoint round-trips bitwise and detects corruption") {
  TinyRun run("ckpt");
  for (int i = 0; i < 2; ++i) run.trainer->run_step();
  const auto path = (run.dir / "model.mcgc").string();
  save_checkpoint(path, run.model->tree(), &run.trainer->optimizer_state(),
                  run.trainer->step(), run.cfg.to_text(), run.model->vocab().to_text());

  auto loaded = load_checkpoint(path);
  CHECK(loaded.step == 2);
  CHECK(loaded.config_text == run.cfg.to_text());

  McgModel restored(run.cfg.model, Vocabulary::parse(loaded.vocab_text), 999);
  restore_parameters(restored.tree(), loaded.archive, /*strict=*/true);
  for (const auto& [name, var] : run.model->tree().entries()) {
    const Tensor& other = restored.tree().get(name)->value;
    REQUIRE(other.same_shape(var->value));
    for (size_t i = 0; i < other.size(); ++i) CHECK(other[i] == var->value[i]);
  }

  // Flip one payload byte: the checksum must catch it.
  std::string bytes = file_bytes(path);
  bytes[bytes.size() / 2] = char(bytes[bytes.size() / 2] ^ 0x40);
  const auto corrupt = (run.dir / "corrupt.mcgc").string();
  std::ofstream(corrupt, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
  CHECK_THROWS_WITH_AS(Archive::load(corrupt), doctest::Contains("checksum"), Error);

  // Truncation is also a checksum failure, never partial state.
  const auto trunc = (run.dir / "trunc.mcgc").string();
  std::ofstream(trunc, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size() / 2));
  CHECK_THROWS_WITH_AS(Archive::load(trunc), doctest::Contains("checksum"), Error);

  // Version bump is an explicit error.
  std::string vbytes = file_bytes(path);
  vbytes[4] = 9;
  std::string rest = vbytes.substr(0, vbytes.size() - 12);
  const auto vpath = (run.dir / "version.mcgc").string();
  {
    std::ofstream out(vpath, std::ios::binary);
    out.write(rest.data(), std::streamsize(rest.size()));
    out.write("CRCC", 4);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : rest) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    for (int i = 0; i < 8; ++i) out.put(char(h >> (8 * i)));
  }
  CHECK_THROWS_WITH_AS(Archive::load(vpath), doctest::Contains("version"), Error);
}

TEST_CASE("weight import reports matched and unmatched keys") {
  TinyRun run("import");
  const auto path = (run.dir / "weights.mcgc").string();
  Archive a;
  a.put_tensor("ivm.cls", Tensor::full(1, 8, 0.25));
  a.put_tensor("ivm.block9.missing", Tensor::ones(2, 2));
  a.put_tensor("iqm.final_ln.gain", Tensor::full(1, 8, 2.0));
  a.save(path);
  const std::string report = import_weights(run.model->tree(), path);
  CHECK(report.find("matched 2") != std::string::npos);
  CHECK(report.find("unmatched: ivm.block9.missing") != std::string::npos);
  CHECK(run.model->tree().get("ivm.cls")->value(0, 3) == doctest::Approx(0.25));
  CHECK(run.model->tree().get("iqm.final_ln.gain")->value(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("two seeded runs produce bitwise-identical loss trajectories") {
  TinyRun a("det_a", 42);
  TinyRun b("det_b", 42);
  for (int i = 0; i < 10; ++i) {
    const LossBundle la = a.trainer->run_step();
    const LossBundle lb = b.trainer->run_step();
    CHECK(bundles_equal(la, lb));
    CHECK(std::isfinite(la.total));
  }
  // Different seed diverges.
  TinyRun c("det_c", 43);
  TinyRun d("det_d", 42);
  bool all_equal = true;
  for (int i = 0; i < 3; ++i) {
    const LossBundle ld = d.trainer->run_step();
    const LossBundle lc = c.trainer->run_step();
    all_equal = all_equal && bundles_equal(ld, lc);
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("lm-only steps never touch contrastive-only parameters") {
  TinyRun run("lmonly");
  run.cfg.train.lambda1 = 0.0;
  run.cfg.train.lambda2 = 0.0;
  run.trainer = std::make_unique<Trainer>(*run.model, run.cfg,
                                          load_manifest(run.cfg.manifest_path));
  std::map<std::string, Tensor> before;
  for (const auto& name : run.model->tree().names_under("mcl."))
    before[name] = run.model->tree().get(name)->value;
  REQUIRE(before.size() >= 6);
  for (int i = 0; i < 3; ++i) {
    const LossBundle l = run.trainer->run_step();
    CHECK(l.l_icl == 0.0);
    CHECK(l.l_vtm == 0.0);
    CHECK(l.l_lm > 0.0);
  }
  for (const auto& [name, t] : before) {
    const Tensor& now = run.model->tree().get(name)->value;
    for (size_t i = 0; i < t.size(); ++i) CHECK(now[i] == t[i]);
  }
}

TEST_CASE("one joint backward feeds every component of the parameter tree") {
  TinyRun run("gradflow");
  auto batch = run.trainer->load_batch(0);
  // Gradients from the step's backward pass are left in place on return.
  run.trainer->train_step(batch);
  for (const std::string& prefix : {"ivm.", "iqm.", "cfor.", "agor.", "mcl."}) {
    bool any_nonzero = false;
    for (const auto& name : run.model->tree().names_under(prefix)) {
      const Var v = run.model->tree().get(name);
      if (!v->grad_touched) continue;
      for (size_t i = 0; i < v->grad.size(); ++i) any_nonzero = any_nonzero || v->grad[i] != 0.0;
    }
    INFO("component ", prefix);
    CHECK(any_nonzero);
  }
}

TEST_CASE("resuming from a checkpoint reproduces the unbroken run") {
  TinyRun gold("resume_gold", 7);
  std::vector<LossBundle> gold_losses;
  for (int i = 0; i < 6; ++i) gold_losses.push_back(gold.trainer->run_step());

  TinyRun part("resume_part", 7);
  for (int i = 0; i < 3; ++i) {
    const LossBundle l = part.trainer->run_step();
    CHECK(bundles_equal(l, gold_losses[size_t(i)]));
  }
  const auto path = (part.dir / "resume.mcgc").string();
  save_checkpoint(path, part.model->tree(), &part.trainer->optimizer_state(),
                  part.trainer->step(), part.cfg.to_text(), part.model->vocab().to_text());

  // Fresh model + trainer restored from the checkpoint.
  TinyRun cont("resume_cont", 7);
  auto loaded = load_checkpoint(path);
  restore_parameters(cont.model->tree(), loaded.archive, /*strict=*/true);
  cont.trainer->optimizer_state() = load_adamw_state(loaded.archive);
  cont.trainer->set_step(loaded.step);
  for (int i = 3; i < 6; ++i) {
    const LossBundle l = cont.trainer->run_step();
    CHECK(bundles_equal(l, gold_losses[size_t(i)]));
  }
}

TEST_CASE("temperatures stay positive through many optimizer steps") {
  TinyRun run("tau");
  for (int i = 0; i < 8; ++i) run.trainer->run_step();
  const double t1 = std::exp(run.model->tree().get("mcl.temp.log_tau1")->value.item());
  const double t2 = std::exp(run.model->tree().get("mcl.temp.log_tau2")->value.item());
  CHECK(t1 > 0.0);
  CHECK(t2 > 0.0);
}

TEST_CASE("vtm needs at least two examples per batch") {
  TinyRun run("smallbatch");
  auto batch = run.trainer->load_batch(0);
  batch.resize(1);
  CHECK_THROWS_WITH_AS(run.trainer->train_step(batch),
                       doctest::Contains("cannot form negatives"), Error);
}

TEST_CASE("classifier head: chance loss, unknown answers, and gradients") {
  ParameterTree tree;
  Rng rng(11);
  ClassifierHead head(tree, "chead", 6, {"yes"}, rng);  // 1 class + UNK -> K=2
  head.fc.weight->value.fill(0.0);
  head.fc.bias->value.fill(0.0);
  Var fus = leaf(init_normal(rng, 1, 6, 1.0));
  Var logits = head.logits(fus);
  CHECK(classifier_loss(logits, 0)->value.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  CHECK(head.index_of("yes") == 0);
  CHECK(head.index_of("never-seen") == head.unk_index());

  ParameterTree tree2;
  Rng rng2(13);
  ClassifierHead head2(tree2, "chead", 6, {"a", "b", "c"}, rng2);
  auto res = mcg::test::check_gradients({head2.fc.weight, head2.fc.bias, fus}, [&] {
    return classifier_loss(head2.logits(fus), 2);
  });
  CHECK(res.ok);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("adamw ignores untouched parameters but decays touched ones") {
  ParameterTree tree;
  Rng rng(17);
  Var used = tree.create("used", init_normal(rng, 2, 2, 1.0));
  Var unused = tree.create("unused", init_normal(rng, 2, 2, 1.0));
  const Tensor unused_before = unused->value;
  const Tensor used_before = used->value;

  tree.zero_grads();
  Var loss = sum_all(mul(used, used));
  backward(loss);
  TrainConfig cfg;
  AdamWState state;
  auto report = adamw_step(tree, state, cfg, 0.01);
  CHECK(report.updated == 1);
  CHECK(report.grad_norm > 0.0);
  for (size_t i = 0; i < unused_before.size(); ++i) CHECK(unused->value[i] == unused_before[i]);
  bool changed = false;
  for (size_t i = 0; i < used_before.size(); ++i) changed = changed || used->value[i] != used_before[i];
  CHECK(changed);
}

TEST_CASE("config parsing: stage defaults, unknown keys, round trip") {
  RunConfig cfg = RunConfig::parse("train.stage = pretrain\n");
  CHECK(cfg.train.frames == 4);
  CHECK(cfg.train.resolution == 224);
  RunConfig fine = RunConfig::parse("train.stage = finetune\n");
  CHECK(fine.train.frames == 8);
  CHECK(fine.train.resolution == 384);
  RunConfig overridden = RunConfig::parse("train.stage = finetune\ndata.frames = 4\n");
  CHECK(overridden.train.frames == 4);

  CHECK_THROWS_WITH_AS(RunConfig::parse("bogus.key = 1\n"), doctest::Contains("unknown key"),
                       Error);
  CHECK_THROWS_WITH_AS(RunConfig::parse("train.stage\n"), doctest::Contains("key = value"),
                       Error);

  RunConfig full;
  full.train.steps = 77;
  full.model.d_x = 24;
  full.manifest_path = "m.jsonl";
  RunConfig reparsed = RunConfig::parse(full.to_text());
  CHECK(reparsed.train.steps == 77);
  CHECK(reparsed.model.d_x == 24);
  CHECK(reparsed.manifest_path == "m.jsonl");
}
