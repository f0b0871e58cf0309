#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace mcg {

/// Lowercase, strip punctuation, collapse whitespace, drop leading
/// articles (a/an/the). Used by both accuracy and WUPS.
std::string answer_normalize(const std::string& text);

/// Exact-match rate after normalization.
double top1_accuracy(const std::vector<std::string>& predictions,
                     const std::vector<std::string>& golds);

/// Directed acyclic is-a graph over lexical concepts with a word-sense
/// map. File format, one entry per line:
///   concept <name> <parent>|-       (- marks the root)
///   word <word> <concept> [...]
class Taxonomy {
 public:
  static Taxonomy parse(const std::string& text);
  static Taxonomy load(const std::string& path);
  /// The bundled ~50-node test taxonomy (root -> animal -> {dog, cat}...).
  static const Taxonomy& toy();

  bool has_word(const std::string& word) const { return senses_.count(word) > 0; }
  int depth_of(const std::string& concept_name) const;  // root depth 1
  size_t concept_count() const { return concepts_.size(); }

  /// Wu-Palmer similarity: max over sense pairs of
  /// 2 * depth(lcs) / (depth(a) + depth(b)). Unmappable words fall back
  /// to exact match (logged once per word on stderr).
  double wup(const std::string& a, const std::string& b) const;

 private:
  struct Concept {
    std::string name;
    std::vector<int> parents;
    int depth = 0;                 // longest root path, root = 1
    std::vector<int> ancestors;    // including self, sorted
  };
  std::vector<Concept> concepts_;
  std::map<std::string, int> concept_ids_;
  std::map<std::string, std::vector<int>> senses_;
  mutable std::set<std::string> warned_;
};

/// Token-set WUPS: per pair, min over gold tokens of the best predicted
/// match and symmetrically, with each pairwise wup below the threshold
/// down-weighted by 0.1; mean over the dataset. Empty predictions score 0.
double wups_at(const std::vector<std::string>& predictions,
               const std::vector<std::string>& golds, double threshold, const Taxonomy& taxonomy);

/// Order-independent pairwise summation (so parallel and serial
/// aggregation agree exactly).
double pairwise_sum(const std::vector<double>& values);

}  // namespace mcg
