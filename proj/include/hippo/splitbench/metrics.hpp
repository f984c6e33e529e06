#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hippo/numcore/tensor.hpp"

namespace hippo {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// F1 = 2PR / (P + R), taken as 0 when P + R = 0.
inline double f1_from_counts(const ConfusionCounts& c) {
  const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

// Pools TP/FP/FN over every entry of two equally shaped binary matrices.
template <typename Real>
ConfusionCounts confusion_counts(const BasicTensor<Real>& predicted, const BasicTensor<Real>& truth) {
  if (predicted.shape() != truth.shape())
    throw ShapeError("micro_f1: predicted " + shape_string(predicted.shape()) + " vs truth " +
                     shape_string(truth.shape()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != Real(0), y = truth[i] != Real(0);
    if ((predicted[i] != Real(0) && predicted[i] != Real(1)) || (truth[i] != Real(0) && truth[i] != Real(1)))
      throw ValidationError("micro_f1: entries must be 0 or 1");
    c.tp += p && y;
    c.fp += p && !y;
    c.fn += !p && y;
  }
  return c;
}

template <typename Real>
double micro_f1(const BasicTensor<Real>& predicted, const BasicTensor<Real>& truth) {
  return f1_from_counts(confusion_counts(predicted, truth));
}

// Area under the precision-recall curve. Scores are visited in descending
// order; each block of equal scores is one threshold. Undefined (nullopt)
// without at least one positive and one negative.
inline std::optional<double> aupr(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("aupr: scores and labels differ in length");
  const std::size_t pos = std::size_t(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
  if (pos == 0 || pos == labels.size()) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      tp += labels[order[k]] != 0;
      ++seen;
      ++k;
    }
    const double recall = double(tp) / double(pos);
    area += (recall - prev_recall) * (double(tp) / double(seen));
    prev_recall = recall;
  }
  return area;
}

// |predicted ∩ annotated| / |annotated|.
inline double overlap_rate(const std::set<std::size_t>& predicted, const std::set<std::size_t>& annotated) {
  if (annotated.empty()) throw ValidationError("overlap_rate: annotated residue set is empty");
  std::size_t hit = 0;
  for (std::size_t r : annotated) hit += predicted.count(r);
  return double(hit) / double(annotated.size());
}

}  // namespace hippo
