#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hippo/splitbench/metrics.hpp"
#include "hippo/splitbench/split.hpp"

namespace hippo {

struct MetricReport {
  double micro_f1 = 0.0;
  double micro_f1_easy = 0.0;
  double micro_f1_hard = 0.0;
  std::map<std::string, std::optional<double>> per_type_aupr;  // nullopt: undefined for that type
  ConfusionCounts counts, counts_easy, counts_hard;
  std::size_t n_easy = 0, n_hard = 0;
};

inline constexpr double kDecisionThreshold = 0.5;

// Scores test rows. `probs` and `truth` are [rows x T]; `difficulty` has
// one tag per row (empty when not stratified).
template <typename Real>
MetricReport evaluate_predictions(const BasicTensor<Real>& probs, const BasicTensor<Real>& truth,
                                  const std::vector<Difficulty>& difficulty, const std::vector<std::string>& types,
                                  double threshold = kDecisionThreshold) {
  if (probs.shape() != truth.shape() || probs.rank() != 2) throw ShapeError("evaluate: probs and truth must be equal [rows x T]");
  const std::size_t rows = probs.dim(0), width = probs.dim(1);
  if (types.size() != width) throw ShapeError("evaluate: type names do not match label width");
  if (!difficulty.empty() && difficulty.size() != rows) throw ShapeError("evaluate: one difficulty tag per row");
  MetricReport r;
  for (std::size_t i = 0; i < rows; ++i) {
    ConfusionCounts c;
    for (std::size_t k = 0; k < width; ++k) {
      const bool p = double(probs(i, k)) >= threshold, y = truth(i, k) != Real(0);
      c.tp += p && y;
      c.fp += p && !y;
      c.fn += !p && y;
    }
    r.counts += c;
    if (difficulty.empty()) continue;
    if (difficulty[i] == Difficulty::kEasy) {
      r.counts_easy += c;
      ++r.n_easy;
    } else {
      r.counts_hard += c;
      ++r.n_hard;
    }
  }
  r.micro_f1 = f1_from_counts(r.counts);
  r.micro_f1_easy = f1_from_counts(r.counts_easy);
  r.micro_f1_hard = f1_from_counts(r.counts_hard);
  for (std::size_t k = 0; k < width; ++k) {
    std::vector<double> s(rows);
    std::vector<std::uint8_t> y(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      s[i] = double(probs(i, k));
      y[i] = truth(i, k) != Real(0);
    }
    r.per_type_aupr[types[k]] = aupr(s, y);
  }
  return r;
}

inline nlohmann::json counts_json(const ConfusionCounts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; }

inline nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["micro_f1"] = r.micro_f1;
  j["micro_f1_easy"] = r.micro_f1_easy;
  j["micro_f1_hard"] = r.micro_f1_hard;
  auto a = nlohmann::json::object();
  for (const auto& [type, v] : r.per_type_aupr) a[type] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  j["aupr"] = std::move(a);
  j["counts"] = {{"all", counts_json(r.counts)},
                 {"easy", counts_json(r.counts_easy)},
                 {"hard", counts_json(r.counts_hard)},
                 {"n_easy", r.n_easy},
                 {"n_hard", r.n_hard}};
  return j;
}

// Random-guess reference: every type of every row is predicted positive with
// that type's prevalence among the training edges.
template <typename Real>
BasicTensor<Real> prevalence_guess(const BasicTensor<Real>& train_labels, std::size_t rows, Rng rng) {
  if (train_labels.rank() != 2 || train_labels.dim(0) == 0) throw ValidationError("baseline: no training labels");
  const std::size_t width = train_labels.dim(1);
  std::vector<double> prevalence(width, 0.0);
  for (std::size_t i = 0; i < train_labels.dim(0); ++i)
    for (std::size_t k = 0; k < width; ++k) prevalence[k] += double(train_labels(i, k));
  for (auto& p : prevalence) p /= double(train_labels.dim(0));
  BasicTensor<Real> out({rows, width});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < width; ++k) out(i, k) = rng.bernoulli(prevalence[k]) ? Real(1) : Real(0);
  return out;
}

// Degree-based random guess for the `targets` edges: type k of pair (a, b)
// is drawn positive with probability (c_k(a) + c_k(b)) / (d(a) + d(b)), where
// d counts training edges at a protein and c_k those carrying type k. Pairs
// whose endpoints have no training edges use the training prevalence.
template <typename Real>
BasicTensor<Real> degree_guess(const std::vector<EdgeRecord>& edges, const std::vector<std::size_t>& train,
                               const std::vector<std::size_t>& targets, Rng rng) {
  if (train.empty()) throw ValidationError("baseline: no training labels");
  const std::size_t width = edges.at(train.front()).labels.size();
  struct Tally {
    double degree = 0.0;
    std::vector<double> typed;
  };
  std::map<std::string, Tally> tally;
  std::vector<double> prevalence(width, 0.0);
  for (std::size_t e : train) {
    const auto& r = edges.at(e);
    if (r.labels.size() != width) throw ShapeError("baseline: edges carry label vectors of different widths");
    for (const auto* id : {&r.a, &r.b}) {
      auto& t = tally[*id];
      t.typed.resize(width, 0.0);
      t.degree += 1.0;
      for (std::size_t k = 0; k < width; ++k) t.typed[k] += r.labels[k];
    }
    for (std::size_t k = 0; k < width; ++k) prevalence[k] += r.labels[k];
  }
  for (auto& p : prevalence) p /= double(train.size());
  BasicTensor<Real> out({targets.size(), width});
  const Tally none{0.0, std::vector<double>(width, 0.0)};
  auto find = [&](const std::string& id) -> const Tally& {
    auto it = tally.find(id);
    return it == tally.end() ? none : it->second;
  };
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& r = edges.at(targets[i]);
    const Tally& a = find(r.a);
    const Tally& b = find(r.b);
    const double d = a.degree + b.degree;
    for (std::size_t k = 0; k < width; ++k) {
      const double p = d > 0.0 ? (a.typed[k] + b.typed[k]) / d : prevalence[k];
      out(i, k) = rng.bernoulli(p) ? Real(1) : Real(0);
    }
  }
  return out;
}

}  // namespace hippo
