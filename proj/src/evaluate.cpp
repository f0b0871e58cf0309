#include "mcg/evaluate.hpp"

#include <iostream>

#include <json.hpp>

using ordered_json = nlohmann::ordered_json;

namespace mcg {

std::string MetricsReport::to_json() const {
  ordered_json j;
  j["overall"] = overall;
  ordered_json types;
  for (const auto& [tag, acc] : per_type) types[tag] = acc;
  j["per_type"] = types;
  j["wups_0_9"] = wups_0_9;
  j["wups_0_0"] = wups_0_0;
  ordered_json counts;
  counts["total"] = total;
  counts["evaluated"] = evaluated;
  counts["failed"] = failed;
  ordered_json type_counts;
  for (const auto& [tag, n] : per_type_counts) type_counts[tag] = n;
  counts["per_type"] = type_counts;
  j["counts"] = counts;
  return j.dump(2);
}

NormalizedClip load_eval_clip(const std::string& video_path, const EvalPipeline& pipeline) {
  MediaSource src = MediaSource::open(video_path);
  FrameIndexPlan plan =
      head_tail_sample(src.meta(), pipeline.frames, SampleMode::kEval, 0, pipeline.sampling);
  return resize_normalize(decode_frames(src, plan), pipeline.resolution, pipeline.mean,
                          pipeline.std_dev);
}

MetricsReport evaluate(const std::vector<ManifestRecord>& records, const McgModel& model,
                       const EvalPipeline& pipeline, const DecodeConfig& decode,
                       const Taxonomy& taxonomy) {
  MetricsReport report;
  report.total = int(records.size());
  std::vector<std::string> predictions, golds;
  std::map<std::string, std::vector<double>> type_hits;
  std::vector<double> hits;

  for (const auto& rec : records) {
    NormalizedClip clip;
    try {
      clip = load_eval_clip(rec.video, pipeline);
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << rec.id << ": " << e.what() << "\n";
      ++report.failed;
      continue;
    }
    std::string pred;
    bool correct = false;
    if (rec.is_multi_choice()) {
      ChoiceResult choice = model.score_choices(clip, rec.question, rec.choices);
      pred = rec.choices[size_t(choice.best_index)];
      correct = choice.best_index == *rec.answer_index;
    } else {
      AnswerResult ans = model.generate_answer(clip, rec.question, decode);
      pred = ans.text;
      correct = answer_normalize(pred) == answer_normalize(rec.gold_answer());
    }
    ++report.evaluated;
    predictions.push_back(pred);
    golds.push_back(rec.gold_answer());
    const std::string tag = rec.qtype.empty() ? "untagged" : rec.qtype;
    type_hits[tag].push_back(correct ? 1.0 : 0.0);
    hits.push_back(correct ? 1.0 : 0.0);
  }

  if (report.evaluated > 0) {
    report.overall = pairwise_sum(hits) / double(report.evaluated);
    for (const auto& [tag, v] : type_hits) {
      report.per_type[tag] = pairwise_sum(v) / double(v.size());
      report.per_type_counts[tag] = int(v.size());
    }
    report.wups_0_9 = wups_at(predictions, golds, 0.9, taxonomy);
    report.wups_0_0 = wups_at(predictions, golds, 0.0, taxonomy);
  }
  return report;
}

}  // namespace mcg
