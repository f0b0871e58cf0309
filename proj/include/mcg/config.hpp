#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "mcg/contrastive.hpp"
#include "mcg/fusion.hpp"
#include "mcg/generator.hpp"
#include "mcg/model.hpp"

namespace mcg {

enum class TrainStage { kPretrain, kFinetune };

/// Loss weights and the optimization schedule (Eq. 11 plus the two-stage
/// recipe). The fine-tune stage forces lambda1 = lambda2 = 0.
struct TrainConfig {
  TrainStage stage = TrainStage::kPretrain;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0;
  double theta1 = 1.0, theta2 = 1.0;
  int batch_size = 16;
  int steps = 500;
  double warmup_frac = 0.1;
  double peak_lr = 1e-4;
  double final_lr = 1e-5;
  double weight_decay = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double clip_norm = 1.0;
  uint64_t seed = 1;
  int frames = 4;       // sparse sample count (stage defaults 4 / 8)
  int resolution = 224; // frame resolution (stage defaults 224 / 384)

  double effective_lambda1() const { return stage == TrainStage::kFinetune ? 0.0 : lambda1; }
  double effective_lambda2() const { return stage == TrainStage::kFinetune ? 0.0 : lambda2; }
};

/// Everything a run needs, parsed from a UTF-8 `key = value` file with
/// dotted keys. Unknown keys are errors. '#' starts a comment line.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  DecodeConfig decode;
  SamplingConfig sampling;
  NegativeMode negative_mode = NegativeMode::kUniform;
  std::array<double, 3> image_mean{0.485, 0.456, 0.406};
  std::array<double, 3> image_std{0.229, 0.224, 0.225};
  std::string manifest_path;
  std::string vocab_path;
  std::string checkpoint_out;
  int checkpoint_every = 0;  // 0 = only at the end
  std::string init_checkpoint;
  std::string init_weights;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string to_text() const;
};

/// Linear warmup to peak_lr over warmup_frac of the run, then linear
/// decay to final_lr at the last step.
double lr_schedule(int64_t step, const TrainConfig& cfg);

}  // namespace mcg
