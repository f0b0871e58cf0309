#include "mcg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "mcg/tensor.hpp"

namespace mcg {

std::string answer_normalize(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char raw : text) {
    const unsigned char u = static_cast<unsigned char>(raw);
    if (std::isalnum(u))
      lowered.push_back(char(std::tolower(u)));
    else
      lowered.push_back(' ');
  }
  std::istringstream in(lowered);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  size_t first = 0;
  while (first < tokens.size() &&
         (tokens[first] == "a" || tokens[first] == "an" || tokens[first] == "the"))
    ++first;
  // An all-article answer keeps its last word rather than vanishing.
  if (first == tokens.size() && !tokens.empty()) first = tokens.size() - 1;
  std::string out;
  for (size_t i = first; i < tokens.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i];
  }
  return out;
}

double top1_accuracy(const std::vector<std::string>& predictions,
                     const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) fail("top1_accuracy: length mismatch");
  if (predictions.empty()) return 0.0;
  std::vector<double> hits(predictions.size());
  for (size_t i = 0; i < predictions.size(); ++i)
    hits[i] = answer_normalize(predictions[i]) == answer_normalize(golds[i]) ? 1.0 : 0.0;
  return pairwise_sum(hits) / double(predictions.size());
}

Taxonomy Taxonomy::parse(const std::string& text) {
  Taxonomy t;
  std::istringstream in(text);
  std::string line;
  int root = -1;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "concept") {
      std::string name, parent;
      if (!(ls >> name >> parent)) fail("taxonomy: bad concept line: " + line);
      if (t.concept_ids_.count(name)) fail("taxonomy: duplicate concept " + name);
      Concept c;
      c.name = name;
      const int id = int(t.concepts_.size());
      if (parent == "-") {
        if (root >= 0) fail("taxonomy: multiple roots");
        root = id;
      } else {
        auto it = t.concept_ids_.find(parent);
        if (it == t.concept_ids_.end())
          fail("taxonomy: parent " + parent + " not declared before " + name);
        c.parents.push_back(it->second);
      }
      // Extra parents (multiple inheritance) may follow.
      std::string extra;
      while (ls >> extra) {
        auto it = t.concept_ids_.find(extra);
        if (it == t.concept_ids_.end()) fail("taxonomy: unknown parent " + extra);
        c.parents.push_back(it->second);
      }
      t.concept_ids_[name] = id;
      t.concepts_.push_back(std::move(c));
    } else if (kind == "word") {
      std::string word, concept_name;
      if (!(ls >> word >> concept_name)) fail("taxonomy: bad word line: " + line);
      do {
        auto it = t.concept_ids_.find(concept_name);
        if (it == t.concept_ids_.end()) fail("taxonomy: unknown concept " + concept_name);
        t.senses_[word].push_back(it->second);
      } while (ls >> concept_name);
    } else {
      fail("taxonomy: unknown directive " + kind);
    }
  }
  if (root < 0) fail("taxonomy: no root concept");

  // Longest-path depths + ancestor closures; declaration order is
  // topological because parents must precede children (cycle-free by
  // construction).
  for (size_t i = 0; i < t.concepts_.size(); ++i) {
    Concept& c = t.concepts_[i];
    std::set<int> anc{int(i)};
    if (c.parents.empty()) {
      c.depth = 1;
      if (int(i) != root) fail("taxonomy: concept " + c.name + " has no parent and is not root");
    } else {
      int best = 0;
      for (int p : c.parents) {
        best = std::max(best, t.concepts_[size_t(p)].depth);
        anc.insert(t.concepts_[size_t(p)].ancestors.begin(),
                   t.concepts_[size_t(p)].ancestors.end());
      }
      c.depth = best + 1;
    }
    c.ancestors.assign(anc.begin(), anc.end());
  }
  // Reachability: every concept's ancestor set must include the root.
  for (const Concept& c : t.concepts_)
    if (!std::binary_search(c.ancestors.begin(), c.ancestors.end(), root))
      fail("taxonomy: concept " + c.name + " unreachable from root");
  return t;
}

Taxonomy Taxonomy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open taxonomy file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const Taxonomy& Taxonomy::toy() {
  static const Taxonomy t = parse(R"(# bundled test taxonomy
concept root -
concept animal root
concept dog animal
concept cat animal
concept bird animal
concept horse animal
concept fish animal
concept person root
concept man person
concept woman person
concept child person
concept boy child
concept girl child
concept color root
concept red color
concept green color
concept blue color
concept yellow color
concept white color
concept black color
concept orange_color color
concept purple color
concept action root
concept run action
concept walk action
concept jump action
concept swim action
concept sit action
concept stand action
concept direction root
concept left direction
concept right direction
concept up direction
concept down direction
concept object root
concept ball object
concept table object
concept chair object
concept door object
concept fruit root
concept apple fruit
concept banana fruit
concept orange_fruit fruit
concept number root
concept one number
concept two number
concept three number
concept four number
concept five number
concept place root
concept park place
concept street place
concept room place
word dog dog
word puppy dog
word cat cat
word kitten cat
word bird bird
word horse horse
word fish fish
word man man
word woman woman
word child child
word boy boy
word girl girl
word person person
word red red
word green green
word blue blue
word yellow yellow
word white white
word black black
word orange orange_color orange_fruit
word purple purple
word running run
word run run
word walking walk
word walk walk
word jumping jump
word jump jump
word swimming swim
word swim swim
word sitting sit
word standing stand
word left left
word right right
word up up
word down down
word ball ball
word table table
word chair chair
word door door
word apple apple
word banana banana
word one one
word two two
word three three
word four four
word five five
word park park
word street street
word room room
)");
  return t;
}

int Taxonomy::depth_of(const std::string& concept_name) const {
  auto it = concept_ids_.find(concept_name);
  if (it == concept_ids_.end()) fail("taxonomy: unknown concept " + concept_name);
  return concepts_[size_t(it->second)].depth;
}

double Taxonomy::wup(const std::string& a, const std::string& b) const {
  if (a == b) return 1.0;
  const auto ia = senses_.find(a);
  const auto ib = senses_.find(b);
  if (ia == senses_.end() || ib == senses_.end()) {
    for (const std::string& w : {a, b})
      if (!senses_.count(w) && warned_.insert(w).second)
        std::cerr << "wup: word '" << w << "' not in taxonomy, using exact match\n";
    return 0.0;  // words differ (equality handled above)
  }
  double best = 0.0;
  for (int ca : ia->second)
    for (int cb : ib->second) {
      const Concept& na = concepts_[size_t(ca)];
      const Concept& nb = concepts_[size_t(cb)];
      // Deepest common ancestor over the two closures.
      int lcs_depth = 0;
      size_t x = 0, y = 0;
      while (x < na.ancestors.size() && y < nb.ancestors.size()) {
        if (na.ancestors[x] == nb.ancestors[y]) {
          lcs_depth = std::max(lcs_depth, concepts_[size_t(na.ancestors[x])].depth);
          ++x;
          ++y;
        } else if (na.ancestors[x] < nb.ancestors[y]) {
          ++x;
        } else {
          ++y;
        }
      }
      best = std::max(best, 2.0 * lcs_depth / double(na.depth + nb.depth));
    }
  return best;
}

namespace {

std::vector<std::string> answer_tokens(const std::string& text) {
  std::istringstream in(answer_normalize(text));
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

double wups_at(const std::vector<std::string>& predictions,
               const std::vector<std::string>& golds, double threshold,
               const Taxonomy& taxonomy) {
  if (predictions.size() != golds.size()) fail("wups_at: length mismatch");
  if (predictions.empty()) return 0.0;
  auto weighted = [&](const std::string& a, const std::string& b) {
    const double mu = taxonomy.wup(a, b);
    return mu < threshold ? 0.1 * mu : mu;
  };
  auto directed = [&](const std::vector<std::string>& from, const std::vector<std::string>& to) {
    // min over `from` tokens of the best match among `to` tokens.
    double worst = 1.0;
    for (const auto& f : from) {
      double best = 0.0;
      for (const auto& t : to) best = std::max(best, weighted(f, t));
      worst = std::min(worst, best);
    }
    return worst;
  };
  std::vector<double> scores(predictions.size());
  for (size_t i = 0; i < predictions.size(); ++i) {
    const auto pred = answer_tokens(predictions[i]);
    const auto gold = answer_tokens(golds[i]);
    if (pred.empty() || gold.empty()) {
      scores[i] = 0.0;
      continue;
    }
    scores[i] = std::min(directed(gold, pred), directed(pred, gold));
  }
  return pairwise_sum(scores) / double(scores.size());
}

double pairwise_sum(const std::vector<double>& values) {
  std::function<double(size_t, size_t)> rec = [&](size_t lo, size_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (size_t i = lo; i < hi; ++i) s += values[i];
      return s;
    }
    const size_t mid = lo + (hi - lo) / 2;
    return rec(lo, mid) + rec(mid, hi);
  };
  return values.empty() ? 0.0 : rec(0, values.size());
}

}  // namespace mcg
