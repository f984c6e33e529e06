#pragma once

#include <string>
#include <vector>

#include "hippo/numcore/ops.hpp"
#include "hippo/numcore/params.hpp"

namespace hippo {

struct GinConfig {
  std::size_t n_blocks = 3;
  std::size_t hidden = 64;
  double eps = 0.0;  // self weight is (1 + eps)
  bool batch_norm = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const {
    if (n_blocks == 0) throw ParameterError("gin: n_blocks must be at least 1");
    if (hidden == 0) throw ParameterError("gin: hidden width must be positive");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ParameterError("gin: bn_momentum must lie in (0, 1]");
    if (!(bn_eps > 0.0)) throw ParameterError("gin: bn_eps must be positive");
  }
};

enum class PairCombine { kHadamard, kConcat };

inline const char* to_string(PairCombine c) { return c == PairCombine::kHadamard ? "hadamard" : "concat"; }

inline PairCombine parse_pair_combine(const std::string& s) {
  if (s == "hadamard") return PairCombine::kHadamard;
  if (s == "concat") return PairCombine::kConcat;
  throw ParameterError("unknown pair combine mode '" + s + "' (expected hadamard or concat)");
}

struct PairHeadConfig {
  PairCombine combine = PairCombine::kHadamard;
};

enum class GinMode { kTrain, kEval };

inline std::string gin_prefix(std::size_t block) { return "gin.b" + std::to_string(block) + "."; }

// Running batch-norm statistics live in the parameter set but are never
// optimized.
inline bool is_running_stat(const std::string& name) {
  auto ends = [&](const std::string& s) { return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0; };
  return ends(".running_mean") || ends(".running_var");
}

template <typename Real>
void init_gin(ParamSet<Real>& p, const GinConfig& c, std::size_t in_width, const Rng& rng) {
  c.validate();
  using S = InitScheme;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::string k = gin_prefix(b);
    add_param(p, k + "w1", {b == 0 ? in_width : c.hidden, c.hidden}, S::kUniformScaled, rng);
    add_param(p, k + "b1", {c.hidden}, S::kZeros, rng);
    add_param(p, k + "w2", {c.hidden, c.hidden}, S::kUniformScaled, rng);
    add_param(p, k + "b2", {c.hidden}, S::kZeros, rng);
    if (!c.batch_norm) continue;
    add_param(p, k + "bn.g", {c.hidden}, S::kOnes, rng);
    add_param(p, k + "bn.b", {c.hidden}, S::kZeros, rng);
    add_param(p, k + "bn.running_mean", {c.hidden}, S::kZeros, rng);
    add_param(p, k + "bn.running_var", {c.hidden}, S::kOnes, rng);
  }
}

template <typename Real>
void init_pair_head(ParamSet<Real>& p, const PairHeadConfig& c, std::size_t width, std::size_t n_types, const Rng& rng) {
  if (n_types == 0) throw ParameterError("pair head: need at least one interaction type");
  const std::size_t in = c.combine == PairCombine::kHadamard ? width : 2 * width;
  add_param(p, "head.w", {in, n_types}, InitScheme::kUniformScaled, rng);
  add_param(p, "head.b", {n_types}, InitScheme::kZeros, rng);
}

// Per block: h' = BatchNorm(ReLU(MLP((1 + eps) h_v + sum_{u in N(v)} h_u))),
// MLP = Linear -> ReLU -> Linear. Training mode normalizes with batch
// statistics (returned through `stats`), eval mode with the running ones.
template <typename Real>
ad::Var gin_forward(ad::Tape<Real>& t, const GinConfig& c, const BoundParams<Real>& bp, const ParamSet<Real>& params,
                    ad::Var x, const ad::Csr& adj, GinMode mode, std::vector<ad::BatchStats<Real>>* stats = nullptr) {
  if (stats) stats->assign(c.n_blocks, {});
  ad::Var h = x;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::string k = gin_prefix(b);
    const ad::Var agg = ad::gin_aggregate(t, h, adj, Real(c.eps));
    const ad::Var mlp = ad::linear(t, ad::relu(t, ad::linear(t, agg, bp[k + "w1"], bp[k + "b1"])), bp[k + "w2"], bp[k + "b2"]);
    h = ad::relu(t, mlp);
    if (!c.batch_norm) continue;
    if (mode == GinMode::kTrain)
      h = ad::batch_norm_train(t, h, bp[k + "bn.g"], bp[k + "bn.b"], Real(c.bn_eps), stats ? &(*stats)[b] : nullptr);
    else
      h = ad::batch_norm_eval(t, h, bp[k + "bn.g"], bp[k + "bn.b"], params[k + "bn.running_mean"],
                              params[k + "bn.running_var"], Real(c.bn_eps));
  }
  return h;
}

// running <- (1 - m) running + m batch, with the unbiased batch variance.
template <typename Real>
void update_running_stats(ParamSet<Real>& p, const GinConfig& c, const std::vector<ad::BatchStats<Real>>& stats,
                          std::size_t rows) {
  if (!c.batch_norm) return;
  if (stats.size() != c.n_blocks) throw ShapeError("update_running_stats: one entry per block");
  const double m = c.bn_momentum, unbias = rows > 1 ? double(rows) / double(rows - 1) : 1.0;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    auto& mean = p[gin_prefix(b) + "bn.running_mean"];
    auto& var = p[gin_prefix(b) + "bn.running_var"];
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] = Real((1.0 - m) * mean[j] + m * stats[b].mean[j]);
      var[j] = Real((1.0 - m) * var[j] + m * unbias * stats[b].var[j]);
    }
  }
}

// Combines [P x h] endpoint embeddings into [P x T] logits. Hadamard:
// FC(g_i * g_j). Concat: (FC([g_i ; g_j]) + FC([g_j ; g_i])) / 2.
template <typename Real>
ad::Var combine_pair(ad::Tape<Real>& t, const PairHeadConfig& c, const BoundParams<Real>& bp, ad::Var gi, ad::Var gj) {
  if (t.value(gi).shape() != t.value(gj).shape())
    throw ShapeError("pair_logits: embeddings " + shape_string(t.value(gi).shape()) + " and " +
                     shape_string(t.value(gj).shape()) + " differ");
  if (c.combine == PairCombine::kHadamard) return ad::linear(t, ad::mul(t, gi, gj), bp["head.w"], bp["head.b"]);
  const ad::Var ij = ad::linear(t, ad::concat_cols(t, {gi, gj}), bp["head.w"], bp["head.b"]);
  const ad::Var ji = ad::linear(t, ad::concat_cols(t, {gj, gi}), bp["head.w"], bp["head.b"]);
  return ad::scale(t, ad::add(t, ij, ji), Real(0.5));
}

template <typename Real>
ad::Var pair_logits(ad::Tape<Real>& t, const PairHeadConfig& c, const BoundParams<Real>& bp, ad::Var node_emb,
                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::size_t> is, js;
  for (const auto& [i, j] : pairs) is.push_back(i), js.push_back(j);
  return combine_pair(t, c, bp, ad::gather_rows(t, node_emb, is), ad::gather_rows(t, node_emb, js));
}

// Multi-label binary cross-entropy on logits. kSum is the plain double sum
// over edges and types; kMean divides by edges x types.
template <typename Real>
ad::Var bce_multilabel(ad::Tape<Real>& t, ad::Var logits, const BasicTensor<Real>& labels,
                       ad::Reduction reduction = ad::Reduction::kMean) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != Real(0) && labels[i] != Real(1)) throw ValidationError("bce_multilabel: labels must be 0 or 1");
  return ad::bce_with_logits(t, logits, labels, reduction);
}

template <typename Real>
Real bce_multilabel(const BasicTensor<Real>& logits, const BasicTensor<Real>& labels,
                    ad::Reduction reduction = ad::Reduction::kMean) {
  ad::Tape<Real> t;
  return t.value(bce_multilabel(t, t.constant(logits), labels, reduction)).item();
}

}  // namespace hippo
