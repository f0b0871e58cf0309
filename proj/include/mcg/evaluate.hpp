#pragma once

#include "mcg/metrics.hpp"
#include "mcg/training.hpp"

namespace mcg {

struct MetricsReport {
  double overall = 0.0;
  std::map<std::string, double> per_type;
  std::map<std::string, int> per_type_counts;
  double wups_0_9 = 0.0;
  double wups_0_0 = 0.0;
  int total = 0;
  int evaluated = 0;
  int failed = 0;
  /// Stable key order: overall, per_type.<tag>, wups_0_9, wups_0_0, counts.
  std::string to_json() const;
};

/// How records become normalized clips at evaluation time (eval-mode
/// head-tail sampling, deterministic).
struct EvalPipeline {
  int frames = 4;
  int resolution = 224;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std_dev{0.229, 0.224, 0.225};
  SamplingConfig sampling;
};

/// Runs generate_answer (open-ended) or score_choices (multi-choice) on
/// every record; records with unreadable media are counted as failed and
/// excluded with a warning.
MetricsReport evaluate(const std::vector<ManifestRecord>& records, const McgModel& model,
                       const EvalPipeline& pipeline, const DecodeConfig& decode,
                       const Taxonomy& taxonomy);

NormalizedClip load_eval_clip(const std::string& video_path, const EvalPipeline& pipeline);

}  // namespace mcg
