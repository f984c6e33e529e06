#pragma once

// Finite-difference checks of every differentiable building block on small
// random double-precision fixtures. Shared by `hippo gradcheck` and the
// acceptance binary.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "hippo/encoders/alignment.hpp"
#include "hippo/encoders/annotation_encoder.hpp"
#include "hippo/encoders/sequence_encoder.hpp"
#include "hippo/hierarchy/hc_loss.hpp"
#include "hippo/numcore/gradcheck.hpp"
#include "hippo/ppinet/gin.hpp"
#include "hippo/ppinet/graph.hpp"

namespace hippo {

struct GradFixture {
  ScalarFn fn;
  ParamSet<double> point;
};

struct GradSuiteEntry {
  std::string op;
  std::size_t fixtures = 0;
  std::size_t failures = 0;
  double max_rel_err = 0.0;
  std::vector<std::string> diagnostics;
  bool passed() const { return fixtures > 0 && failures == 0; }
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  // Constrained pair losses below their level floor, over every hc_loss
  // fixture.
  std::size_t hc_constraint_violations = 0;
  bool passed() const {
    return hc_constraint_violations == 0 &&
           std::all_of(entries.begin(), entries.end(), [](const GradSuiteEntry& e) { return e.passed(); });
  }
};

namespace gradsuite {

inline Tensor random_tensor(Rng& rng, const Shape& shape, double scale = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

inline std::vector<std::pair<std::size_t, std::size_t>> random_pairs(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t a = rng.uniform_int(n);
    std::size_t b = rng.uniform_int(n - 1);
    if (b >= a) ++b;
    out.emplace_back(a, b);
  }
  return out;
}

// Two-level tree over n proteins spread across 2 clans of 2 families each.
inline HierarchyTree random_tree(Rng& rng, std::size_t n, std::vector<std::string>& ids) {
  HierarchyTree tree;
  ids.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t clan = rng.uniform_int(2), fam = rng.uniform_int(2);
    ids.push_back("p" + std::to_string(i));
    tree.add_leaf(ids.back(), {"C" + std::to_string(clan), "F" + std::to_string(clan) + std::to_string(fam)});
  }
  tree.set_level_weights({0.5 + rng.uniform(), 0.5 + rng.uniform()});
  return tree;
}

inline GradFixture hc_fixture(Rng& rng, std::size_t& violations) {
  const std::size_t n = 5 + rng.uniform_int(4), d = 3 + rng.uniform_int(4);
  std::vector<std::string> ids;
  const auto tree = random_tree(rng, n, ids);
  const auto pairs = all_level_pairs(tree, ids);
  const double tau = 0.3 + rng.uniform();
  GradFixture f;
  f.point.add("embeddings", random_tensor(rng, {n, d}));
  {
    ad::Tape<double> t;
    HcLossBreakdown b;
    hc_loss(t, t.constant(f.point[0]), pairs, tree.level_weights(), tau, &b);
    violations += constraint_violations(b);
  }
  f.fn = [pairs, w = tree.level_weights(), tau](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    return hc_loss(t, v[0], pairs, w, tau);
  };
  return f;
}

inline GradFixture sac_fixture(Rng& rng) {
  const std::size_t n = 2 + rng.uniform_int(7), d = 2 + rng.uniform_int(15);
  const double tau = 0.2 + rng.uniform();
  GradFixture f;
  f.point.add("z_seq", random_tensor(rng, {n, d}));
  f.point.add("z_ann", random_tensor(rng, {n, d}));
  f.fn = [tau](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    return sac_loss(t, ad::l2_normalize_rows(t, v[0]), ad::l2_normalize_rows(t, v[1]), tau);
  };
  return f;
}

inline GradFixture sam_fixture(Rng& rng) {
  const std::size_t n = 2 + rng.uniform_int(5);
  AlignmentConfig a;
  a.proj_dim = 2 + rng.uniform_int(5);
  a.match_hidden = 2 + rng.uniform_int(5);
  const double alpha = 0.1 + 0.8 * rng.uniform(), gamma = 3.0 * rng.uniform();
  GradFixture f;
  init_alignment_heads(f.point, a, 3, 3, rng.split(1));
  f.point.add("zs", random_tensor(rng, {n, a.proj_dim}));
  f.point.add("za", random_tensor(rng, {n, a.proj_dim}));
  Rng pair_rng = rng.split(2);
  const auto pairs = sam_pairs(n, pair_rng);
  const ParamSet<double> shape = f.point;
  f.fn = [shape, pairs, alpha, gamma](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    const BoundParams<double> bp(shape, v);
    return sam_loss(t, pairs, match_probabilities(t, bp, bp["zs"], bp["za"], pairs), alpha, gamma);
  };
  return f;
}

inline GradFixture bce_fixture(Rng& rng) {
  const std::size_t m = 1 + rng.uniform_int(8), k = 1 + rng.uniform_int(6), h = 2 + rng.uniform_int(6);
  const PairHeadConfig head{rng.bernoulli(0.5) ? PairCombine::kConcat : PairCombine::kHadamard};
  const auto reduction = rng.bernoulli(0.5) ? ad::Reduction::kSum : ad::Reduction::kMean;
  GradFixture f;
  init_pair_head(f.point, head, h, k, rng.split(1));
  f.point["head.b"] = random_tensor(rng, {k});
  const std::size_t nodes = 2 + rng.uniform_int(7);
  f.point.add("g", random_tensor(rng, {nodes, h}));
  const auto pairs = random_pairs(rng, nodes, m);
  Tensor y({m, k});
  for (auto& v : y.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const ParamSet<double> shape = f.point;
  f.fn = [shape, head, pairs, y, reduction](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    const BoundParams<double> bp(shape, v);
    return bce_multilabel(t, pair_logits(t, head, bp, bp["g"], pairs), y, reduction);
  };
  return f;
}

inline GradFixture sequence_fixture(Rng& rng) {
  SequenceEncoderConfig c;
  c.d_model = rng.bernoulli(0.5) ? 8 : 12;
  c.n_blocks = 1 + rng.uniform_int(2);
  c.n_heads = 2;
  c.conv_narrow = 3;
  c.conv_wide = 5;
  c.ff_width = 8 + rng.uniform_int(9);
  c.max_len = 64;
  const std::size_t len = 3 + rng.uniform_int(6);
  GradFixture f;
  init_sequence_encoder(f.point, c, rng.split(1));
  // Biases away from zero. Layer-norm affine terms stay at (1, 0): a random
  // shift common to all positions adds nothing the key weights can see (score
  // gradients sum to zero per row), so their gradients shrink into the
  // round-off band of the central difference.
  for (std::size_t i = 0; i < f.point.size(); ++i)
    if (f.point[i].rank() == 1 && f.point.name(i).find(".ln") == std::string::npos)
      f.point[i] = random_tensor(rng, f.point[i].shape(), 0.5);
  std::vector<std::size_t> tokens(len);
  for (auto& tk : tokens) tk = rng.uniform_int(kUnknownToken + 1);
  const Tensor probe = random_tensor(rng, {len, c.d_model});
  const ParamSet<double> shape = f.point;
  f.fn = [shape, c, tokens, probe](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    return ad::weighted_sum(t, encode_sequence(t, c, BoundParams<double>(shape, v), tokens).states, probe);
  };
  return f;
}

inline GradFixture annotation_fixture(Rng& rng) {
  const std::size_t n = 1 + rng.uniform_int(8);
  const AnnotationEncoderConfig c{2 + rng.uniform_int(15), 2 + rng.uniform_int(15), 2 + rng.uniform_int(15)};
  GradFixture f;
  init_annotation_encoder(f.point, c, rng.split(1));
  for (std::size_t i = 0; i < f.point.size(); ++i)
    if (f.point[i].rank() == 1) f.point[i] = random_tensor(rng, f.point[i].shape(), 0.5);
  Tensor kw({n, c.vocab_size});
  for (auto& v : kw.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const Tensor probe = random_tensor(rng, {n, c.d_model});
  const ParamSet<double> shape = f.point;
  f.fn = [shape, kw, probe](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    return ad::weighted_sum(t, encode_annotations(t, BoundParams<double>(shape, v), t.constant(kw)), probe);
  };
  return f;
}

// Sets every pre-ReLU bias so the threshold falls midway between the two
// middle distinct values of its column. With no column entirely active, batch
// normalization cannot absorb a bias shift, so no gradient entry is
// identically zero, and no entry sits on a kink.
inline void straddle_relu_biases(ParamSet<double>& p, const GinConfig& c, const Tensor& x, const ad::Csr& adj) {
  auto center = [](const Tensor& z, Tensor& bias) {
    for (std::size_t j = 0; j < z.dim(1); ++j) {
      std::vector<double> col(z.dim(0));
      for (std::size_t i = 0; i < col.size(); ++i) col[i] = z(i, j);
      std::sort(col.begin(), col.end());
      col.erase(std::unique(col.begin(), col.end()), col.end());
      const std::size_t m = std::max<std::size_t>(col.size() / 2, 1);
      bias[j] = col.size() > 1 ? -0.5 * (col[m - 1] + col[m]) : 1.0 - col[0];
    }
  };
  ad::Tape<double> t;
  ad::Var h = t.constant(x);
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::string k = gin_prefix(b);
    const ad::Var agg = ad::gin_aggregate(t, h, adj, c.eps);
    center(t.value(ad::matmul(t, agg, t.constant(p[k + "w1"]))), p[k + "b1"]);
    const ad::Var a = ad::relu(t, ad::linear(t, agg, t.constant(p[k + "w1"]), t.constant(p[k + "b1"])));
    center(t.value(ad::matmul(t, a, t.constant(p[k + "w2"]))), p[k + "b2"]);
    const ad::Var r = ad::relu(t, ad::linear(t, a, t.constant(p[k + "w2"]), t.constant(p[k + "b2"])));
    h = c.batch_norm ? ad::batch_norm_train(t, r, t.constant(p[k + "bn.g"]), t.constant(p[k + "bn.b"]), c.bn_eps) : r;
  }
}

inline GradFixture gin_fixture(Rng& rng) {
  const std::size_t n = 4 + rng.uniform_int(5), d = 2 + rng.uniform_int(4);
  GinConfig c;
  c.n_blocks = 1 + rng.uniform_int(2);
  c.hidden = 3 + rng.uniform_int(4);
  c.eps = rng.uniform(-0.5, 0.5);
  GradFixture f;
  init_gin(f.point, c, d, rng.split(1));
  for (std::size_t i = 0; i < f.point.size(); ++i) {
    f.point[i] = random_tensor(rng, f.point[i].shape(), 0.8);
    if (is_running_stat(f.point.name(i)))
      for (auto& v : f.point[i].data()) v = 0.5 + std::abs(v);
  }
  const Tensor x = random_tensor(rng, {n, d});
  const ad::Csr adj = build_adjacency(n, random_pairs(rng, n, n + 2));
  straddle_relu_biases(f.point, c, x, adj);
  f.point.add("x", x);
  const Tensor probe = random_tensor(rng, {n, c.hidden});
  const ParamSet<double> shape = f.point;
  f.fn = [shape, c, adj, probe](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
    const BoundParams<double> bp(shape, v);
    return ad::weighted_sum(t, gin_forward(t, c, bp, shape, bp["x"], adj, GinMode::kTrain), probe);
  };
  return f;
}

}  // namespace gradsuite

inline const std::vector<std::string>& gradient_suite_ops() {
  static const std::vector<std::string> ops = {"hc_loss",         "sac_loss",           "sam_loss",   "bce_multilabel",
                                               "encode_sequence", "encode_annotations", "gin_forward"};
  return ops;
}

// Runs `fixtures` random fixtures per op; op streams are independent, so the
// fixtures of one op do not depend on which others are run.
inline GradSuiteReport run_gradient_suite(std::uint64_t seed, std::size_t fixtures = 5, double h = 1e-5,
                                          double tol = 1e-4) {
  GradSuiteReport report;
  const Rng base = Rng(seed).split(hash_tag("gradsuite"));
  for (const auto& op : gradient_suite_ops()) {
    GradSuiteEntry e;
    e.op = op;
    Rng rng = base.split(hash_tag(op));
    for (std::size_t k = 0; k < fixtures; ++k) {
      Rng fr = rng.split(k);
      GradFixture f;
      if (op == "hc_loss") f = gradsuite::hc_fixture(fr, report.hc_constraint_violations);
      else if (op == "sac_loss") f = gradsuite::sac_fixture(fr);
      else if (op == "sam_loss") f = gradsuite::sam_fixture(fr);
      else if (op == "bce_multilabel") f = gradsuite::bce_fixture(fr);
      else if (op == "encode_sequence") f = gradsuite::sequence_fixture(fr);
      else if (op == "encode_annotations") f = gradsuite::annotation_fixture(fr);
      else f = gradsuite::gin_fixture(fr);
      const auto r = grad_check(op, f.fn, f.point, h, tol);
      ++e.fixtures;
      e.max_rel_err = std::max(e.max_rel_err, r.max_rel_err);
      if (!r.passed) {
        ++e.failures;
        std::string why = "fixture " + std::to_string(k) + ": max_rel_err " + std::to_string(r.max_rel_err);
        if (!r.diagnostic.empty()) why += " (" + r.diagnostic + ")";
        for (const auto& [name, err] : r.per_parameter_errors)
          if (err > tol) why += " " + name + "=" + std::to_string(err);
        e.diagnostics.push_back(why);
      }
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace hippo
