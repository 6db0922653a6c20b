#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "ppsl/graph.hpp"

namespace ppsl {

struct Scores {
  double precision = 0;
  double recall = 0;
  double fscore = 0;
  double jaccard = 0;
};

/// Precision, recall, F-score and Jaccard of a predicted node set against the
/// truth. An empty prediction scores zero precision and F-score.
inline Scores score_pair(std::span<const NodeId> pred, std::span<const NodeId> truth) {
  std::vector<NodeId> p(pred.begin(), pred.end()), t(truth.begin(), truth.end());
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  if (t.empty()) throw Error("score_pair: empty ground truth");

  std::size_t inter = 0;
  for (auto i = p.begin(), j = t.begin(); i != p.end() && j != t.end();) {
    if (*i < *j)
      ++i;
    else if (*j < *i)
      ++j;
    else {
      ++inter, ++i, ++j;
    }
  }
  const double n = static_cast<double>(inter);
  Scores s;
  s.precision = p.empty() ? 0.0 : n / static_cast<double>(p.size());
  s.recall = n / static_cast<double>(t.size());
  // Harmonic mean of precision and recall, as one division.
  s.fscore = 2 * n / static_cast<double>(p.size() + t.size());
  s.jaccard = n / static_cast<double>(p.size() + t.size() - inter);
  return s;
}

inline double fscore(std::span<const NodeId> pred, std::span<const NodeId> truth) {
  return score_pair(pred, truth).fscore;
}

}  // namespace ppsl
