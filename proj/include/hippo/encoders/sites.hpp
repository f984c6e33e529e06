#pragma once

#include <vector>

#include "hippo/numcore/tensor.hpp"

namespace hippo {

// Per-residue attention received: for every residue r, the mean over blocks
// and heads of sum_q A[q, r] taken over unmasked queries q, normalized to sum
// to 1. Masked residues score 0. `attention` is [blocks x heads x L x L].
template <typename Real>
std::vector<double> attention_site_scores(const BasicTensor<Real>& attention, std::vector<std::uint8_t> mask = {}) {
  if (attention.rank() != 4 || attention.dim(2) != attention.dim(3))
    throw ShapeError("attention_site_scores: expected [blocks x heads x L x L], got " + shape_string(attention.shape()));
  const std::size_t maps = attention.dim(0) * attention.dim(1), len = attention.dim(2);
  if (mask.empty()) mask.assign(len, 1);
  if (mask.size() != len) throw ShapeError("attention_site_scores: mask length");
  std::vector<double> score(len, 0.0);
  for (std::size_t m = 0; m < maps; ++m)
    for (std::size_t q = 0; q < len; ++q) {
      if (!mask[q]) continue;
      const Real* row = &attention[(m * len + q) * len];
      for (std::size_t r = 0; r < len; ++r)
        if (mask[r]) score[r] += double(row[r]);
    }
  double total = 0.0;
  for (std::size_t r = 0; r < len; ++r) total += score[r];
  if (total <= 0.0) throw ValidationError("attention_site_scores: every position is masked");
  for (auto& s : score) s /= total;
  return score;
}

// The `n` highest-scoring residues, ties broken toward the lower index.
inline std::vector<std::size_t> top_residues(const std::vector<double>& scores, std::size_t n) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(n, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace hippo
