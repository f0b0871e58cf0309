#pragma once

#include <map>
#include <optional>

#include "mcg/checkpoint.hpp"
#include "mcg/config.hpp"
#include "mcg/manifest.hpp"

namespace mcg {

struct LossBundle {
  double l_icl = 0.0;
  double l_tcl = 0.0;
  double l_mcl = 0.0;
  double l_vtm = 0.0;
  double l_lm = 0.0;
  double total = 0.0;
};

/// lambda1 * MCL + lambda2 * VTM + lambda3 * LM; the fine-tune stage
/// zeroes the first two. Non-finite components abort the step.
double total_loss(double l_mcl, double l_vtm, double l_lm, const TrainConfig& cfg);

/// Decoupled-weight-decay adaptive-moment optimizer state. Only arrays
/// that actually received a gradient are updated (and decayed), so loss
/// paths that never touch a parameter leave it bit-identical.
struct AdamWState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::map<std::string, int64_t> step_count;
};

struct AdamWReport {
  double grad_norm = 0.0;   // before clipping
  size_t updated = 0;
};

AdamWReport adamw_step(ParameterTree& params, AdamWState& state, const TrainConfig& cfg,
                       double lr);

/// K-way classification head on the [FUS] row (the MCG-CH ablation).
/// Answers outside the closed set map to a trailing UNK class.
struct ClassifierHead {
  LinearLayer fc;
  std::vector<std::string> classes;  // without UNK; UNK index == classes.size()
  ClassifierHead() = default;
  ClassifierHead(ParameterTree& tree, const std::string& prefix, int dim,
                 std::vector<std::string> class_names, Rng& rng);
  int index_of(const std::string& answer) const;
  int unk_index() const { return int(classes.size()); }
  Var logits(const Var& fus_row) const { return fc.apply(fus_row); }
};

Var classifier_loss(const Var& logits, int class_index);

// ---- the deterministic synthetic dataset ----

struct SyntheticSpec {
  int pairs = 64;
  int frames = 12;
  int resolution = 32;
  int vocab_size = 120;  // padded with filler tokens up to this size
};

struct SyntheticDataset {
  std::string manifest_path;
  std::string vocab_path;
};

/// Renders moving-colored-square clips (color x direction x speed drawn
/// without replacement from an 8x4x2 enumeration) plus question/answer/
/// caption text, all byte-deterministic in the seed.
SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, uint64_t seed,
                                        const std::string& out_dir);

// ---- the training loop ----

/// One decoded example ready for the joint forward pass.
struct TrainExample {
  std::string id;
  NormalizedClip clip;
  TokenizedText caption;   // contrastive / matching text
  TokenizedText question;
  std::vector<int> cond_ids;    // question pieces for the generator
  std::vector<int> answer_ids;  // answer pieces (no controls)
};

class Trainer {
 public:
  Trainer(McgModel& model, const RunConfig& cfg, std::vector<ManifestRecord> records);

  /// Deterministic batch composition: epoch-shuffled record order and
  /// per-(epoch, record) sampling seeds derived from the run seed only.
  std::vector<TrainExample> load_batch(int64_t step) const;
  std::vector<int> batch_record_indices(int64_t step) const;

  /// Forward, backward, clip, update. Deterministic in (params, batch,
  /// seed). Throws on non-finite losses; rejects the update (with a
  /// diagnostic on stderr) on non-finite gradients.
  LossBundle train_step(const std::vector<TrainExample>& batch);

  LossBundle run_step();  // load_batch(step) + train_step
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  AdamWState& optimizer_state() { return opt_; }
  const RunConfig& config() const { return cfg_; }

  TrainExample load_example(const ManifestRecord& rec, uint64_t plan_seed,
                            SampleMode mode) const;

 private:
  McgModel& model_;
  RunConfig cfg_;
  std::vector<ManifestRecord> records_;
  AdamWState opt_;
  int64_t step_ = 0;
};

}  // namespace mcg
