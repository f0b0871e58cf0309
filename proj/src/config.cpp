#include "mcg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mcg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

struct KeyReader {
  std::map<std::string, std::string> pairs;

  bool take(const std::string& key, std::string& out) {
    auto it = pairs.find(key);
    if (it == pairs.end()) return false;
    out = it->second;
    pairs.erase(it);
    return true;
  }
  void str(const std::string& key, std::string& field) {
    std::string v;
    if (take(key, v)) field = v;
  }
  void num(const std::string& key, double& field) {
    std::string v;
    if (!take(key, v)) return;
    try {
      field = std::stod(v);
    } catch (...) {
      fail("config: bad number for " + key + ": " + v);
    }
  }
  void integer(const std::string& key, int& field) {
    std::string v;
    if (!take(key, v)) return;
    try {
      field = std::stoi(v);
    } catch (...) {
      fail("config: bad integer for " + key + ": " + v);
    }
  }
  void u64(const std::string& key, uint64_t& field) {
    std::string v;
    if (!take(key, v)) return;
    try {
      field = std::stoull(v);
    } catch (...) {
      fail("config: bad integer for " + key + ": " + v);
    }
  }
  void flag(const std::string& key, bool& field) {
    std::string v;
    if (!take(key, v)) return;
    if (v == "true" || v == "1")
      field = true;
    else if (v == "false" || v == "0")
      field = false;
    else
      fail("config: bad boolean for " + key + ": " + v);
  }
  void triple(const std::string& key, std::array<double, 3>& field) {
    std::string v;
    if (!take(key, v)) return;
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream in(v);
    if (!(in >> field[0] >> field[1] >> field[2]))
      fail("config: expected three comma-separated numbers for " + key);
  }
};

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  KeyReader r;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) fail("config line " + std::to_string(line_no) + ": empty key");
    if (r.pairs.count(key)) fail("config: duplicate key " + key);
    r.pairs[key] = value;
  }

  RunConfig cfg;
  std::string stage;
  bool frames_set = r.pairs.count("data.frames") > 0;
  bool res_set = r.pairs.count("data.resolution") > 0;
  if (r.take("train.stage", stage)) {
    if (stage == "pretrain")
      cfg.train.stage = TrainStage::kPretrain;
    else if (stage == "finetune")
      cfg.train.stage = TrainStage::kFinetune;
    else
      fail("config: train.stage must be pretrain or finetune");
  }
  r.integer("train.steps", cfg.train.steps);
  r.integer("train.batch_size", cfg.train.batch_size);
  r.u64("train.seed", cfg.train.seed);
  r.str("train.init_checkpoint", cfg.init_checkpoint);
  r.str("train.init_weights", cfg.init_weights);
  r.num("loss.lambda1", cfg.train.lambda1);
  r.num("loss.lambda2", cfg.train.lambda2);
  r.num("loss.lambda3", cfg.train.lambda3);
  r.num("loss.theta1", cfg.train.theta1);
  r.num("loss.theta2", cfg.train.theta2);
  r.num("loss.tau1_init", cfg.model.tau1_init);
  r.num("loss.tau2_init", cfg.model.tau2_init);
  std::string saliency;
  if (r.take("loss.saliency_provider", saliency)) {
    if (saliency == "uniform")
      cfg.model.saliency = SaliencyMode::kUniform;
    else if (saliency == "learned")
      cfg.model.saliency = SaliencyMode::kLearned;
    else
      fail("config: loss.saliency_provider must be uniform or learned");
  }
  r.num("sched.warmup_frac", cfg.train.warmup_frac);
  r.num("sched.peak_lr", cfg.train.peak_lr);
  r.num("sched.final_lr", cfg.train.final_lr);
  r.num("optim.weight_decay", cfg.train.weight_decay);
  r.num("optim.beta1", cfg.train.beta1);
  r.num("optim.beta2", cfg.train.beta2);
  r.num("optim.eps", cfg.train.adam_eps);
  r.num("optim.clip_norm", cfg.train.clip_norm);

  r.str("data.manifest", cfg.manifest_path);
  r.str("data.vocab", cfg.vocab_path);
  r.integer("data.frames", cfg.train.frames);
  r.integer("data.resolution", cfg.train.resolution);
  r.triple("image.mean", cfg.image_mean);
  r.triple("image.std", cfg.image_std);
  r.num("sampling.rho", cfg.sampling.edge_fraction);
  r.flag("sampling.allow_repeat", cfg.sampling.allow_repeat);

  r.integer("model.d_x", cfg.model.d_x);
  r.integer("model.d_y", cfg.model.d_y);
  r.integer("model.d_p", cfg.model.d_p);
  r.integer("model.d_m", cfg.model.d_m);
  r.integer("model.video_depth", cfg.model.video_depth);
  r.integer("model.text_depth", cfg.model.text_depth);
  r.integer("model.fusor_depth", cfg.model.fusor_depth);
  r.integer("model.gen_depth", cfg.model.gen_depth);
  r.integer("model.heads", cfg.model.heads);
  r.integer("model.patch", cfg.model.patch);
  r.integer("model.max_frames", cfg.model.max_frames);
  r.integer("model.max_resolution", cfg.model.max_resolution);
  r.integer("model.max_text_len", cfg.model.max_text_len);
  r.integer("model.max_gen_len", cfg.model.max_gen_len);
  r.flag("model.timesformer_residuals", cfg.model.timesformer_residuals);
  std::string cond;
  if (r.take("model.gen_conditioning", cond)) {
    if (cond == "video_and_fused")
      cfg.model.conditioning = GeneratorConditioning::kVideoAndFused;
    else if (cond == "fused_only")
      cfg.model.conditioning = GeneratorConditioning::kFusedOnly;
    else
      fail("config: model.gen_conditioning must be video_and_fused or fused_only");
  }

  std::string mode;
  if (r.take("decode.mode", mode)) {
    if (mode == "greedy")
      cfg.decode.mode = DecodeConfig::Mode::kGreedy;
    else if (mode == "beam")
      cfg.decode.mode = DecodeConfig::Mode::kBeam;
    else
      fail("config: decode.mode must be greedy or beam");
  }
  r.integer("decode.beam_width", cfg.decode.beam_width);
  r.integer("decode.max_len", cfg.decode.max_len);
  std::string neg;
  if (r.take("vtm.negative_mode", neg)) {
    if (neg == "uniform")
      cfg.negative_mode = NegativeMode::kUniform;
    else if (neg == "hard")
      cfg.negative_mode = NegativeMode::kHard;
    else
      fail("config: vtm.negative_mode must be uniform or hard");
  }
  r.str("checkpoint.out", cfg.checkpoint_out);
  r.integer("checkpoint.every", cfg.checkpoint_every);

  if (!r.pairs.empty()) fail("config: unknown key " + r.pairs.begin()->first);

  // Stage defaults for the sparse-sampling shape when unset.
  if (!frames_set) cfg.train.frames = cfg.train.stage == TrainStage::kFinetune ? 8 : 4;
  if (!res_set) cfg.train.resolution = cfg.train.stage == TrainStage::kFinetune ? 384 : 224;
  if (cfg.train.lambda1 < 0 || cfg.train.lambda2 < 0 || cfg.train.lambda3 < 0)
    fail("config: loss weights must be non-negative");
  if (cfg.decode.beam_width < 1 || cfg.decode.beam_width > 5)
    fail("config: decode.beam_width must be in [1,5]");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "train.stage = " << (train.stage == TrainStage::kPretrain ? "pretrain" : "finetune")
      << "\n";
  out << "train.steps = " << train.steps << "\n";
  out << "train.batch_size = " << train.batch_size << "\n";
  out << "train.seed = " << train.seed << "\n";
  if (!init_checkpoint.empty()) out << "train.init_checkpoint = " << init_checkpoint << "\n";
  if (!init_weights.empty()) out << "train.init_weights = " << init_weights << "\n";
  out << "loss.lambda1 = " << train.lambda1 << "\n";
  out << "loss.lambda2 = " << train.lambda2 << "\n";
  out << "loss.lambda3 = " << train.lambda3 << "\n";
  out << "loss.theta1 = " << train.theta1 << "\n";
  out << "loss.theta2 = " << train.theta2 << "\n";
  out << "loss.tau1_init = " << model.tau1_init << "\n";
  out << "loss.tau2_init = " << model.tau2_init << "\n";
  out << "loss.saliency_provider = "
      << (model.saliency == SaliencyMode::kUniform ? "uniform" : "learned") << "\n";
  out << "sched.warmup_frac = " << train.warmup_frac << "\n";
  out << "sched.peak_lr = " << train.peak_lr << "\n";
  out << "sched.final_lr = " << train.final_lr << "\n";
  out << "optim.weight_decay = " << train.weight_decay << "\n";
  out << "optim.beta1 = " << train.beta1 << "\n";
  out << "optim.beta2 = " << train.beta2 << "\n";
  out << "optim.eps = " << train.adam_eps << "\n";
  out << "optim.clip_norm = " << train.clip_norm << "\n";
  if (!manifest_path.empty()) out << "data.manifest = " << manifest_path << "\n";
  if (!vocab_path.empty()) out << "data.vocab = " << vocab_path << "\n";
  out << "data.frames = " << train.frames << "\n";
  out << "data.resolution = " << train.resolution << "\n";
  out << "image.mean = " << image_mean[0] << "," << image_mean[1] << "," << image_mean[2] << "\n";
  out << "image.std = " << image_std[0] << "," << image_std[1] << "," << image_std[2] << "\n";
  out << "sampling.rho = " << sampling.edge_fraction << "\n";
  out << "sampling.allow_repeat = " << (sampling.allow_repeat ? "true" : "false") << "\n";
  out << "model.d_x = " << model.d_x << "\n";
  out << "model.d_y = " << model.d_y << "\n";
  out << "model.d_p = " << model.d_p << "\n";
  out << "model.d_m = " << model.d_m << "\n";
  out << "model.video_depth = " << model.video_depth << "\n";
  out << "model.text_depth = " << model.text_depth << "\n";
  out << "model.fusor_depth = " << model.fusor_depth << "\n";
  out << "model.gen_depth = " << model.gen_depth << "\n";
  out << "model.heads = " << model.heads << "\n";
  out << "model.patch = " << model.patch << "\n";
  out << "model.max_frames = " << model.max_frames << "\n";
  out << "model.max_resolution = " << model.max_resolution << "\n";
  out << "model.max_text_len = " << model.max_text_len << "\n";
  out << "model.max_gen_len = " << model.max_gen_len << "\n";
  out << "model.timesformer_residuals = " << (model.timesformer_residuals ? "true" : "false")
      << "\n";
  out << "model.gen_conditioning = "
      << (model.conditioning == GeneratorConditioning::kVideoAndFused ? "video_and_fused"
                                                                      : "fused_only")
      << "\n";
  out << "decode.mode = " << (decode.mode == DecodeConfig::Mode::kGreedy ? "greedy" : "beam")
      << "\n";
  out << "decode.beam_width = " << decode.beam_width << "\n";
  out << "decode.max_len = " << decode.max_len << "\n";
  out << "vtm.negative_mode = " << (negative_mode == NegativeMode::kUniform ? "uniform" : "hard")
      << "\n";
  if (!checkpoint_out.empty()) out << "checkpoint.out = " << checkpoint_out << "\n";
  out << "checkpoint.every = " << checkpoint_every << "\n";
  return out.str();
}

double lr_schedule(int64_t step, const TrainConfig& cfg) {
  const int64_t total = cfg.steps;
  if (step < 0 || step > total) fail("lr_schedule: step out of range");
  const int64_t warmup = std::max<int64_t>(1, int64_t(std::llround(cfg.warmup_frac * double(total))));
  if (step <= warmup) return cfg.peak_lr * double(step) / double(warmup);
  return cfg.peak_lr +
         (cfg.final_lr - cfg.peak_lr) * double(step - warmup) / double(total - warmup);
}

}  // namespace mcg
