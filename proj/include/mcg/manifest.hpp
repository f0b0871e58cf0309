#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mcg {

/// One dataset example. Exactly one of {answer} / {answer_index +
/// choices} is present. `caption` is an optional pre-training text; when
/// absent the trainer falls back to "question answer".
struct ManifestRecord {
  std::string id;
  std::string video;  // path, resolved relative to the manifest location
  std::string question;
  std::optional<std::string> answer;
  std::optional<int> answer_index;
  std::vector<std::string> choices;
  std::string qtype;
  std::optional<std::string> caption;

  bool is_multi_choice() const { return answer_index.has_value(); }
  const std::string& gold_answer() const;
};

/// JSON-lines loader; validates field combinations, rejects duplicate
/// ids, and resolves video paths against the manifest directory.
std::vector<ManifestRecord> load_manifest(const std::string& path);

/// Serializes one record as a single JSON line (stable key order).
std::string manifest_line(const ManifestRecord& rec);

}  // namespace mcg
