#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hippo/hierarchy/tree.hpp"
#include "hippo/numcore/ops.hpp"

namespace hippo {

// Contrastive pair loss -log softmax_{a != i}(f_i . f_a / tau)[p] for rows
// that are already unit-normalized. Always >= 0 because p is one of the
// candidates.
template <typename Real>
Real pair_loss(std::size_t i, std::size_t p, const BasicTensor<Real>& embeddings, Real tau) {
  if (!(tau > Real(0))) throw ParameterError("pair_loss: temperature must be positive");
  if (embeddings.rank() != 2 || embeddings.dim(0) < 2) throw ShapeError("pair_loss: need an [N x d] batch with N >= 2");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  if (i >= n || p >= n || i == p) throw ValidationError("pair_loss: invalid anchor/positive indices");
  auto sim = [&](std::size_t a) {
    Real s = 0;
    for (std::size_t k = 0; k < d; ++k) s += embeddings(i, k) * embeddings(a, k);
    return s / tau;
  };
  Real mx = -std::numeric_limits<Real>::infinity();
  for (std::size_t a = 0; a < n; ++a)
    if (a != i) mx = std::max(mx, sim(a));
  Real z = 0;
  for (std::size_t a = 0; a < n; ++a)
    if (a != i) z += std::exp(sim(a) - mx);
  return mx + std::log(z) - sim(p);
}

struct HcLevelSummary {
  double mean_pair_loss = 0.0;  // over constrained pair losses
  double max_pair_loss = 0.0;   // L_pair_max at this level
  std::size_t pairs = 0;
};

struct HcLossBreakdown {
  double total = 0.0;
  std::vector<HcLevelSummary> per_level;
  std::size_t constraint_activations = 0;
  bool no_positives = false;  // warning: no level had any positive pair
  // Per level: the floor applied (max constrained loss of the parent level)
  // and the raw and constrained losses of every (anchor, positive) pair in
  // anchor-then-positive order.
  std::vector<double> floors;
  std::vector<std::vector<double>> raw_pair_losses;
  std::vector<std::vector<double>> constrained_pair_losses;
};

// Number of recorded constrained pair losses that fall below their level's
// floor. Zero for every breakdown produced by hc_loss.
inline std::size_t constraint_violations(const HcLossBreakdown& b) {
  std::size_t bad = 0;
  for (std::size_t l = 0; l < b.constrained_pair_losses.size(); ++l)
    for (double v : b.constrained_pair_losses[l])
      if (v < b.floors[l]) ++bad;
  return bad;
}

// Hierarchical multi-label contrastive loss recorded on a tape.
//
// Rows of `embeddings` are L2-normalized first. For each level, root side
// first, every positive pair loss is raised to the floor L_pair_max(l-1), the
// largest constrained pair loss of the parent level (0 above the first
// level; inherited unchanged across a level without pairs). Anchor i adds
// lambda_l / (|L| |P_l(i)|) times the sum of its constrained losses; anchors
// without positives add nothing.
template <typename Real>
ad::Var hc_loss(ad::Tape<Real>& t, ad::Var embeddings, const std::vector<std::vector<LevelPairs>>& pairs,
                const std::vector<double>& level_weights, Real tau, HcLossBreakdown* breakdown = nullptr) {
  if (!(tau > Real(0))) throw ParameterError("hc_loss: temperature must be positive");
  const auto& ve = t.value(embeddings);
  if (ve.rank() != 2 || ve.dim(0) == 0) throw ValidationError("hc_loss: empty batch");
  const std::size_t n = ve.dim(0);
  const std::size_t levels = pairs.size();
  if (level_weights.size() != levels) throw ValidationError("hc_loss: one weight per level is required");

  HcLossBreakdown local;
  HcLossBreakdown& out = breakdown ? *breakdown : local;
  out = HcLossBreakdown{};
  out.per_level.resize(levels);
  out.floors.resize(levels);
  out.raw_pair_losses.resize(levels);
  out.constrained_pair_losses.resize(levels);

  bool any_pairs = false;
  for (const auto& level : pairs)
    for (const auto& lp : level) any_pairs = any_pairs || !lp.positives.empty();
  if (!any_pairs || n < 2) {
    out.no_positives = true;
    return t.constant(BasicTensor<Real>::scalar(Real(0)));
  }

  const ad::Var f = ad::l2_normalize_rows(t, embeddings);
  const ad::Var sim = ad::scale(t, ad::matmul(t, f, ad::transpose(t, f)), Real(1) / tau);
  std::vector<std::uint8_t> off_diag(n * n, 1);
  for (std::size_t i = 0; i < n; ++i) off_diag[i * n + i] = 0;
  const ad::Var lse = ad::logsumexp_rows(t, sim, off_diag);

  ad::Var floor = t.constant(BasicTensor<Real>::scalar(Real(0)));
  std::vector<ad::Var> terms;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<std::size_t> anchors, entries;
    std::vector<Real> weights;
    for (const auto& lp : pairs[l]) {
      if (lp.positives.empty()) continue;
      const Real w = Real(level_weights[l]) / (Real(levels) * Real(lp.positives.size()));
      for (std::size_t p : lp.positives) {
        if (lp.anchor >= n || p >= n || p == lp.anchor) throw ValidationError("hc_loss: invalid positive pair");
        anchors.push_back(lp.anchor);
        entries.push_back(lp.anchor * n + p);
        weights.push_back(w);
      }
    }
    out.floors[l] = double(t.value(floor)[0]);
    if (anchors.empty()) continue;

    const ad::Var raw = ad::sub(t, ad::gather(t, lse, anchors), ad::gather(t, sim, entries));
    const ad::Var constrained = ad::maximum_floor(t, raw, floor);
    terms.push_back(ad::weighted_sum(t, constrained, BasicTensor<Real>(Shape{weights.size()}, weights)));

    const auto& vr = t.value(raw);
    const auto& vc = t.value(constrained);
    auto& summary = out.per_level[l];
    summary.pairs = vr.size();
    double acc = 0.0;
    for (std::size_t k = 0; k < vr.size(); ++k) {
      out.raw_pair_losses[l].push_back(double(vr[k]));
      out.constrained_pair_losses[l].push_back(double(vc[k]));
      if (vr[k] < t.value(floor)[0]) ++out.constraint_activations;
      acc += double(vc[k]);
    }
    summary.mean_pair_loss = acc / double(vr.size());
    floor = ad::max_all(t, constrained);
    summary.max_pair_loss = double(t.value(floor)[0]);
  }
  const ad::Var total = ad::add_n(t, terms);
  out.total = double(t.value(total)[0]);
  return total;
}

// Evaluation on plain tensors. The batch is first reordered by protein id so
// the result is bit-identical under any permutation of the input; recorded
// pair losses follow that sorted order.
template <typename Real>
HcLossBreakdown hc_loss(const HierarchyTree& tree, const std::vector<std::string>& batch,
                        const BasicTensor<Real>& embeddings, Real tau) {
  if (batch.empty()) throw ValidationError("hc_loss: empty batch");
  if (embeddings.rank() != 2 || embeddings.dim(0) != batch.size())
    throw ShapeError("hc_loss: embeddings must have one row per batch member");
  std::vector<std::size_t> order(batch.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return batch[a] < batch[b]; });
  std::vector<std::string> sorted;
  BasicTensor<Real> rows(embeddings.shape());
  const std::size_t d = embeddings.dim(1);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && batch[order[r]] == sorted.back()) throw ValidationError("hc_loss: protein '" + sorted.back() + "' appears twice in the batch");
    sorted.push_back(batch[order[r]]);
    for (std::size_t k = 0; k < d; ++k) rows(r, k) = embeddings(order[r], k);
  }
  ad::Tape<Real> tape;
  HcLossBreakdown b;
  hc_loss(tape, tape.constant(rows), all_level_pairs(tree, sorted), tree.level_weights(), tau, &b);
  return b;
}

}  // namespace hippo
