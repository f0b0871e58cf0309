#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg {

/// Self-describing binary container used for checkpoints and weight
/// archives. Layout: magic "MCGC", u32 format version, u32 section
/// count, sections (name, dtype tag, shape, payload), then a "CRCC"
/// trailer with an FNV-1a-64 checksum of everything before it.
struct ArchiveSection {
  enum class Type : uint8_t { kF64 = 0, kI64 = 1, kText = 2 };
  Type type = Type::kF64;
  Tensor tensor;       // kF64
  int64_t integer = 0; // kI64
  std::string text;    // kText
};

class Archive {
 public:
  void put_tensor(const std::string& name, const Tensor& t);
  void put_int(const std::string& name, int64_t v);
  void put_text(const std::string& name, const std::string& v);

  bool has(const std::string& name) const { return sections_.count(name) > 0; }
  const Tensor& tensor(const std::string& name) const;
  int64_t integer(const std::string& name) const;
  const std::string& text(const std::string& name) const;
  const std::map<std::string, ArchiveSection>& sections() const { return sections_; }

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::map<std::string, ArchiveSection> sections_;
};

class ParameterTree;
struct AdamWState;

/// Checkpoint sections: param.<name> arrays, adam.{m,v,t}.<name>
/// optimizer state, meta.step, meta.config, meta.vocab.
void save_checkpoint(const std::string& path, const ParameterTree& params,
                     const AdamWState* opt_state, int64_t step, const std::string& config_text,
                     const std::string& vocab_text);

struct LoadedCheckpoint {
  Archive archive;
  int64_t step = 0;
  std::string config_text;
  std::string vocab_text;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies param.<name> sections into matching tree arrays. Returns a
/// human-readable report; strict mode fails on any mismatch.
std::string restore_parameters(ParameterTree& params, const Archive& archive, bool strict);

/// Rebuilds optimizer state from adam.{m,v,t}.* sections (empty when the
/// checkpoint carries none).
AdamWState load_adamw_state(const Archive& archive);

/// Best-effort import of a named-array archive (dotted-path keys, e.g.
/// ivm.block3.spatial.q.weight) into the tree; prints nothing, returns
/// the matched/unmatched report.
std::string import_weights(ParameterTree& params, const std::string& path);

}  // namespace mcg
