#include "mcg/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mcg/tensor.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace mcg {

const std::string& ManifestRecord::gold_answer() const {
  if (answer) return *answer;
  if (answer_index && *answer_index >= 0 && *answer_index < int(choices.size()))
    return choices[size_t(*answer_index)];
  fail("manifest record " + id + " has no gold answer");
}

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<ManifestRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail("manifest line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    ManifestRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.video = j.at("video").get<std::string>();
      rec.question = j.at("question").get<std::string>();
      if (j.contains("answer")) rec.answer = j["answer"].get<std::string>();
      if (j.contains("answer_index")) rec.answer_index = j["answer_index"].get<int>();
      if (j.contains("choices")) rec.choices = j["choices"].get<std::vector<std::string>>();
      if (j.contains("qtype")) rec.qtype = j["qtype"].get<std::string>();
      if (j.contains("caption")) rec.caption = j["caption"].get<std::string>();
    } catch (const std::exception& e) {
      fail("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    const bool open_ended = rec.answer.has_value();
    const bool multi = rec.answer_index.has_value() || !rec.choices.empty();
    if (open_ended == multi)
      fail("manifest record " + rec.id +
           ": exactly one of answer / answer_index+choices must be present");
    if (multi) {
      if (!rec.answer_index || rec.choices.empty())
        fail("manifest record " + rec.id + ": multi-choice needs answer_index and choices");
      if (*rec.answer_index < 0 || *rec.answer_index >= int(rec.choices.size()))
        fail("manifest record " + rec.id + ": answer_index out of range");
    }
    if (!seen_ids.insert(rec.id).second) fail("manifest: duplicate id " + rec.id);
    if (!rec.video.empty() && !fs::path(rec.video).is_absolute())
      rec.video = (base / rec.video).string();
    records.push_back(std::move(rec));
  }
  return records;
}

std::string manifest_line(const ManifestRecord& rec) {
  ordered_json j;
  j["id"] = rec.id;
  j["video"] = rec.video;
  j["question"] = rec.question;
  if (rec.answer) j["answer"] = *rec.answer;
  if (rec.answer_index) {
    j["answer_index"] = *rec.answer_index;
    j["choices"] = rec.choices;
  }
  if (!rec.qtype.empty()) j["qtype"] = rec.qtype;
  if (rec.caption) j["caption"] = *rec.caption;
  return j.dump();
}

}  // namespace mcg
