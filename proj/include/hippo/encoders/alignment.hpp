#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hippo/numcore/ops.hpp"
#include "hippo/numcore/params.hpp"

namespace hippo {

struct AlignmentConfig {
  std::size_t proj_dim = 64;
  std::size_t match_hidden = 64;
  double tau = 0.07;
  double alpha = 0.25;
  double gamma = 2.0;
  double w_hc = 1.0;
  double w_sac = 1.0;
  double w_sam = 1.0;
  std::vector<double> level_weights{1.0, 1.0};

  void validate() const {
    if (proj_dim == 0 || match_hidden == 0) throw ParameterError("alignment: sizes must be positive");
    if (!(tau > 0.0)) throw ParameterError("alignment: tau must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alignment: alpha must lie in (0, 1)");
    if (!(gamma >= 0.0)) throw ParameterError("alignment: gamma must be non-negative");
    if (!(w_hc >= 0.0 && w_sac >= 0.0 && w_sam >= 0.0)) throw ParameterError("alignment: loss weights must be non-negative");
    for (double l : level_weights)
      if (!(l > 0.0)) throw ParameterError("alignment: level weights must be positive");
  }
};

// Projection heads ("proj.seq", "proj.ann") into a shared space and the
// match head ("match.") over concatenated projected pairs.
template <typename Real>
void init_alignment_heads(ParamSet<Real>& p, const AlignmentConfig& c, std::size_t seq_width, std::size_t ann_width,
                          const Rng& rng) {
  c.validate();
  using S = InitScheme;
  add_param(p, "proj.seq.w", {seq_width, c.proj_dim}, S::kUniformScaled, rng);
  add_param(p, "proj.seq.b", {c.proj_dim}, S::kZeros, rng);
  add_param(p, "proj.ann.w", {ann_width, c.proj_dim}, S::kUniformScaled, rng);
  add_param(p, "proj.ann.b", {c.proj_dim}, S::kZeros, rng);
  add_param(p, "match.w1", {2 * c.proj_dim, c.match_hidden}, S::kUniformScaled, rng);
  add_param(p, "match.b1", {c.match_hidden}, S::kZeros, rng);
  add_param(p, "match.w2", {c.match_hidden, 1}, S::kUniformScaled, rng);
  add_param(p, "match.b2", {1}, S::kZeros, rng);
}

// Symmetric InfoNCE over row-normalized [N x d] projections:
//   (1 / 2N) sum_i [ lse_j(s_ij) - s_ii + lse_j(s_ji) - s_ii ],  s = z_seq z_ann^T / tau.
template <typename Real>
ad::Var sac_loss(ad::Tape<Real>& t, ad::Var z_seq, ad::Var z_ann, Real tau) {
  if (!(tau > Real(0))) throw ParameterError("sac_loss: temperature must be positive");
  const auto& vs = t.value(z_seq);
  if (vs.rank() != 2 || vs.shape() != t.value(z_ann).shape()) throw ShapeError("sac_loss: projections must be equal [N x d]");
  const std::size_t n = vs.dim(0);
  const ad::Var s = ad::scale(t, ad::matmul(t, z_seq, ad::transpose(t, z_ann)), Real(1) / tau);
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = i * n + i;
  const ad::Var d = ad::gather(t, s, diag);
  const ad::Var rows = ad::sub(t, ad::logsumexp_rows(t, s), d);
  const ad::Var cols = ad::sub(t, ad::logsumexp_rows(t, ad::transpose(t, s)), d);
  return ad::scale(t, ad::add(t, ad::sum(t, rows), ad::sum(t, cols)), Real(1) / (Real(2) * Real(n)));
}

template <typename Real>
Real sac_loss(const BasicTensor<Real>& z_seq, const BasicTensor<Real>& z_ann, Real tau) {
  ad::Tape<Real> t;
  return t.value(sac_loss(t, t.constant(z_seq), t.constant(z_ann), tau)).item();
}

struct SamPair {
  std::size_t seq = 0;
  std::size_t ann = 0;
  std::uint8_t label = 0;

  friend bool operator==(const SamPair&, const SamPair&) = default;
};

// All N matching pairs, then one uniformly drawn mismatched annotation per
// sequence.
inline std::vector<SamPair> sam_pairs(std::size_t n, Rng& rng) {
  if (n < 2) throw ValidationError("sam_pairs: need at least two batch members for negatives");
  std::vector<SamPair> out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({i, i, 1});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = std::size_t(rng.uniform_int(n - 1));
    if (j >= i) ++j;
    out.push_back({i, j, 0});
  }
  return out;
}

// Match probability for each pair: sigmoid(MLP([z_seq_i ; z_ann_j])), [P x 1].
template <typename Real>
ad::Var match_probabilities(ad::Tape<Real>& t, const BoundParams<Real>& p, ad::Var z_seq, ad::Var z_ann,
                            const std::vector<SamPair>& pairs) {
  std::vector<std::size_t> si, ai;
  for (const auto& pr : pairs) {
    si.push_back(pr.seq);
    ai.push_back(pr.ann);
  }
  const ad::Var feats = ad::concat_cols(t, {ad::gather_rows(t, z_seq, si), ad::gather_rows(t, z_ann, ai)});
  const ad::Var hidden = ad::gelu(t, ad::linear(t, feats, p["match.w1"], p["match.b1"]));
  return ad::sigmoid(t, ad::linear(t, hidden, p["match.w2"], p["match.b2"]));
}

inline void check_focal_params(double alpha, double gamma) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("sam_loss: alpha must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw ParameterError("sam_loss: gamma must be non-negative");
}

// Focal matching loss averaged over pairs; probabilities are clamped to
// [1e-7, 1 - 1e-7].
template <typename Real>
ad::Var sam_loss(ad::Tape<Real>& t, const std::vector<SamPair>& pairs, ad::Var probs, Real alpha, Real gamma) {
  check_focal_params(double(alpha), double(gamma));
  if (pairs.empty() || t.value(probs).size() != pairs.size()) throw ShapeError("sam_loss: one probability per pair");
  BasicTensor<Real> y(t.value(probs).shape());
  for (std::size_t i = 0; i < pairs.size(); ++i) y[i] = Real(pairs[i].label);
  return ad::focal_loss(t, probs, std::move(y), alpha, gamma);
}

template <typename Real>
Real sam_loss(const std::vector<SamPair>& pairs, const std::vector<Real>& probs, Real alpha, Real gamma) {
  ad::Tape<Real> t;
  const ad::Var p = t.constant(BasicTensor<Real>(Shape{probs.size()}, probs));
  return t.value(sam_loss(t, pairs, p, alpha, gamma)).item();
}

}  // namespace hippo
