#include <cmath>

#include <gtest/gtest.h>

#include "hippo/dataio/synth.hpp"
#include "hippo/gradsuite.hpp"
#include "hippo/numcore/gradcheck.hpp"
#include "hippo/ppinet/train.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace hippo {
namespace {

using ad::Tape;
using ad::Var;

std::vector<std::pair<std::size_t, std::size_t>> random_pairs(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t a = rng.uniform_int(n);
    std::size_t b = rng.uniform_int(n - 1);
    if (b >= a) ++b;
    out.emplace_back(a, b);
  }
  return out;
}

// GIN parameters with every tensor randomized, running statistics included.
ParamSet<double> random_gin(Rng& rng, const GinConfig& c, std::size_t in) {
  ParamSet<double> p;
  init_gin(p, c, in, rng.split(17));
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = testing_support::random_tensor(rng, p[i].shape(), 0.8);
    if (p.name(i).find("running_var") != std::string::npos)
      for (auto& v : p[i].data()) v = 0.5 + std::abs(v);
  }
  return p;
}

TEST(BuildGraph, DegreesAndSortedNodes) {
  const std::vector<EdgeRecord> edges = {{"b", "c", {1}}, {"a", "b", {0}}};
  const Tensor emb = Tensor::matrix(3, 1, {3, 1, 2});  // rows for ids c, a, b
  const auto g = build_graph<double>(edges, {"c", "a", "b"}, emb, {0, 1});
  EXPECT_EQ(g.ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(g.degrees(), (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_EQ(g.features(0, 0), 1.0);
  EXPECT_EQ(g.features(2, 0), 3.0);
  EXPECT_EQ(g.edges[0].i, 1u);
  EXPECT_EQ(g.edges[0].j, 2u);
  EXPECT_EQ(g.n_types, 1u);
}

TEST(BuildGraph, DuplicateRowsCollapse) {
  const std::vector<EdgeRecord> edges = {{"a", "b", {1}}, {"a", "b", {1}}};
  const auto g = build_graph<double>(edges, {"a", "b"}, Tensor::zeros({2, 2}), {0, 1});
  EXPECT_EQ(g.degrees(), (std::vector<std::size_t>{1, 1}));
}

TEST(BuildGraph, MissingEmbeddingNamesProtein) {
  const std::vector<EdgeRecord> edges = {{"a", "zeta", {1}}};
  try {
    build_graph<double>(edges, {"a"}, Tensor::zeros({1, 2}), {0});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("zeta"), std::string::npos);
  }
}

TEST(BuildGraph, AdjacencyOnlyFromMessageEdges) {
  const std::vector<EdgeRecord> edges = {{"a", "b", {1}}, {"b", "c", {1}}, {"a", "c", {1}}};
  const auto g = build_graph<double>(edges, {"a", "b", "c"}, Tensor::zeros({3, 1}), {0, 1});
  EXPECT_EQ(g.edges.size(), 3u);
  EXPECT_TRUE(adjacency_matches(g, {0, 1}));
  EXPECT_FALSE(adjacency_matches(g, {0, 1, 2}));
  EXPECT_EQ(g.degrees(), (std::vector<std::size_t>{1, 2, 1}));
}

TEST(BuildGraph, RandomGraphsAreSymmetricAndSorted) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(30);
    const auto pairs = random_pairs(rng, n, rng.uniform_int(3 * n));
    const auto csr = build_adjacency(n, pairs);
    ASSERT_TRUE(adjacency_valid(csr));
    // Exhaustive: u in N(v) iff (u, v) or (v, u) was listed.
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t u = 0; u < n; ++u) {
        const bool listed = std::any_of(pairs.begin(), pairs.end(), [&](auto p) {
          return (p.first == u && p.second == v) || (p.first == v && p.second == u);
        });
        const bool stored = std::binary_search(csr.index.begin() + std::ptrdiff_t(csr.offset[v]),
                                               csr.index.begin() + std::ptrdiff_t(csr.offset[v + 1]), u);
        ASSERT_EQ(listed, stored);
      }
  }
  EXPECT_THROW(build_adjacency(2, {{1, 1}}), ValidationError);
}

TEST(GinForward, EdgelessGraphActsPerNode) {
  Rng rng(2);
  GinConfig c;
  c.n_blocks = 2;
  c.hidden = 5;
  const auto p = random_gin(rng, c, 4);
  Tensor x = testing_support::random_tensor(rng, {6, 4});
  const ad::Csr empty = build_adjacency(6, {});
  auto run = [&](const Tensor& in) {
    Tape<double> t;
    const auto bp = bind_params(t, p, false);
    return t.value(gin_forward(t, c, bp, p, t.constant(in), empty, GinMode::kEval));
  };
  const Tensor base = run(x);
  Tensor changed = x;
  for (std::size_t k = 0; k < 4; ++k) changed(2, k) += 1.0;
  const Tensor out = run(changed);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 5; ++k)
      if (i != 2) EXPECT_EQ(out(i, k), base(i, k));
  // Row 0 by hand: BN(ReLU(MLP(x))) per block.
  std::vector<double> h(x.data().begin(), x.data().begin() + 4);
  for (std::size_t b = 0; b < 2; ++b) {
    const std::string k = gin_prefix(b);
    std::vector<double> a(5), m(5);
    for (std::size_t j = 0; j < 5; ++j) {
      a[j] = p[k + "b1"][j];
      for (std::size_t i = 0; i < h.size(); ++i) a[j] += h[i] * p[k + "w1"](i, j);
      a[j] = std::max(a[j], 0.0);
    }
    for (std::size_t j = 0; j < 5; ++j) {
      m[j] = p[k + "b2"][j];
      for (std::size_t i = 0; i < 5; ++i) m[j] += a[i] * p[k + "w2"](i, j);
      const double r = std::max(m[j], 0.0);
      m[j] = p[k + "bn.g"][j] * (r - p[k + "bn.running_mean"][j]) / std::sqrt(p[k + "bn.running_var"][j] + c.bn_eps) +
             p[k + "bn.b"][j];
    }
    h = m;
  }
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(base(0, j), h[j], 1e-12);
}

TEST(GinForward, PathGraphCenterSumsItsNeighborhood) {
  GinConfig c;
  c.n_blocks = 1;
  c.hidden = 2;
  c.batch_norm = false;
  ParamSet<double> p;
  init_gin(p, c, 2, Rng(1));
  p["gin.b0.w1"] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  p["gin.b0.w2"] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor x = Tensor::matrix(3, 2, {1, 2, 10, 20, 100, 200});  // a, b, c
  const ad::Csr path = build_adjacency(3, {{0, 1}, {1, 2}});
  Tape<double> t;
  const auto bp = bind_params(t, p, false);
  const auto& out = t.value(gin_forward(t, c, bp, p, t.constant(x), path, GinMode::kTrain));
  EXPECT_EQ(out(1, 0), 111.0);
  EXPECT_EQ(out(1, 1), 222.0);
  EXPECT_EQ(out(0, 0), 11.0);
}

TEST(GinForward, EpsilonWeightsTheSelfTerm) {
  const Tensor x = Tensor::matrix(2, 1, {3, 5});
  Tape<double> t;
  const auto& out = t.value(ad::gin_aggregate(t, t.constant(x), build_adjacency(2, {{0, 1}}), 0.5));
  EXPECT_EQ(out(0, 0), 1.5 * 3 + 5);
  EXPECT_EQ(out(1, 0), 1.5 * 5 + 3);
}

TEST(GinForward, TrainModeReportsBatchStatistics) {
  Rng rng(3);
  GinConfig c;
  c.n_blocks = 2;
  c.hidden = 4;
  auto p = random_gin(rng, c, 3);
  const Tensor x = testing_support::random_tensor(rng, {7, 3});
  const ad::Csr adj = build_adjacency(7, random_pairs(rng, 7, 9));
  Tape<double> t;
  std::vector<ad::BatchStats<double>> stats;
  const auto bp = bind_params(t, p, false);
  const auto& out = t.value(gin_forward(t, c, bp, p, t.constant(x), adj, GinMode::kTrain, &stats));
  ASSERT_EQ(stats.size(), 2u);
  // Batch-normalized columns have mean bn.b.
  for (std::size_t j = 0; j < 4; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < 7; ++i) mean += out(i, j);
    EXPECT_NEAR(mean / 7, p["gin.b1.bn.b"][j], 1e-9);
  }
  const auto before = p["gin.b0.bn.running_var"];
  update_running_stats(p, c, stats, 7);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(p["gin.b0.bn.running_var"][j], 0.9 * before[j] + 0.1 * stats[0].var[j] * 7.0 / 6.0, 1e-15);
}

TEST(GinForward, PermutationEquivarianceIsExact) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(19), d = 1 + rng.uniform_int(6);
    GinConfig c;
    c.n_blocks = 1 + rng.uniform_int(3);
    c.hidden = 1 + rng.uniform_int(8);
    c.eps = trial % 2 ? 0.0 : rng.uniform(0.0, 0.5);
    const auto p = random_gin(rng, c, d);
    const Tensor x = testing_support::random_tensor(rng, {n, d});
    const auto pairs = random_pairs(rng, n, rng.uniform_int(3 * n));
    const auto perm = rng.permutation(n);  // new index of old node v is perm[v]
    Tensor px({n, d});
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < d; ++k) px(perm[v], k) = x(v, k);
    std::vector<std::pair<std::size_t, std::size_t>> ppairs;
    for (auto [a, b] : pairs) ppairs.emplace_back(perm[a], perm[b]);
    for (auto mode : {GinMode::kTrain, GinMode::kEval}) {
      Tape<double> t;
      const auto bp = bind_params(t, p, false);
      const Tensor out = t.value(gin_forward(t, c, bp, p, t.constant(x), build_adjacency(n, pairs), mode));
      const Tensor pout = t.value(gin_forward(t, c, bp, p, t.constant(px), build_adjacency(n, ppairs), mode));
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t k = 0; k < c.hidden; ++k) ASSERT_EQ(pout(perm[v], k), out(v, k)) << "trial " << trial;
    }
  }
}

using gradsuite::straddle_relu_biases;

TEST(GinForward, PassesGradCheck) {
  Rng rng(5);
  for (int fixture = 0; fixture < 5; ++fixture) {
    const std::size_t n = 4 + rng.uniform_int(5), d = 3;
    GinConfig c;
    c.n_blocks = 2;
    c.hidden = 4;
    auto p = random_gin(rng, c, d);
    const Tensor x = testing_support::random_tensor(rng, {n, d});
    const ad::Csr adj = build_adjacency(n, random_pairs(rng, n, n + 2));
    straddle_relu_biases(p, c, x, adj);
    p.add("x", x);
    const Tensor probe = testing_support::random_tensor(rng, {n, 4});
    const auto report = grad_check(
        "gin_forward",
        [&](Tape<double>& t, const std::vector<Var>& v) {
          const BoundParams<double> bp(p, v);
          return ad::weighted_sum(t, gin_forward(t, c, bp, p, bp["x"], adj, GinMode::kTrain), probe);
        },
        p);
    EXPECT_TRUE(report.passed) << report.max_rel_err;
  }
}

TEST(PairLogits, HadamardIsSymmetricAndZeroGivesBias) {
  Rng rng(6);
  ParamSet<double> p;
  init_pair_head(p, PairHeadConfig{}, 4, 3, Rng(1));
  p["head.b"] = testing_support::random_tensor(rng, {3});
  p.add("g", testing_support::random_tensor(rng, {3, 4}));
  for (std::size_t k = 0; k < 4; ++k) p["g"](2, k) = 0.0;
  Tape<double> t;
  const auto bp = bind_params(t, p, false);
  const auto& out = t.value(pair_logits(t, PairHeadConfig{}, bp, bp["g"], {{0, 1}, {1, 0}, {0, 2}}));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(out(0, k), out(1, k));
    EXPECT_EQ(out(2, k), p["head.b"][k]);
  }
}

TEST(PairLogits, ConcatModeIsSymmetrized) {
  Rng rng(7);
  const PairHeadConfig head{PairCombine::kConcat};
  for (int trial = 0; trial < 20; ++trial) {
    ParamSet<double> p;
    init_pair_head(p, head, 5, 4, rng.split(std::uint64_t(trial)));
    p.add("g", testing_support::random_tensor(rng, {2, 5}));
    Tape<double> t;
    const auto bp = bind_params(t, p, false);
    const auto& out = t.value(pair_logits(t, head, bp, bp["g"], {{0, 1}, {1, 0}}));
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out(0, k), out(1, k), 1e-12);
  }
}

TEST(PairLogits, WidthMismatchRejected) {
  ParamSet<double> p;
  init_pair_head(p, PairHeadConfig{}, 4, 2, Rng(1));
  Tape<double> t;
  const auto bp = bind_params(t, p, false);
  EXPECT_THROW(combine_pair(t, PairHeadConfig{}, bp, t.constant(Tensor::zeros({1, 4})), t.constant(Tensor::zeros({1, 3}))),
               ShapeError);
  EXPECT_THROW(parse_pair_combine("dot"), ParameterError);
}

TEST(BceMultilabel, UniformPredictionGivesMTLn2) {
  const Tensor logits = Tensor::zeros({7, 5});
  Rng rng(8);
  Tensor y({7, 5});
  for (auto& v : y.data()) v = rng.bernoulli(0.3);
  EXPECT_NEAR(bce_multilabel(logits, y, ad::Reduction::kSum), 35 * std::log(2.0), 1e-9);
}

TEST(BceMultilabel, ConfidentCorrectIsNearZero) {
  const Tensor y = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor logits = Tensor::matrix(2, 2, {40, -40, -40, 40});
  EXPECT_LT(bce_multilabel(logits, y, ad::Reduction::kSum), 1e-6);
}

TEST(BceMultilabel, MatchesDoubleLoopOracleAndReductionsAgree) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(8), k = 1 + rng.uniform_int(5);
    const Tensor z = testing_support::random_tensor(rng, {m, k}, 3.0);
    Tensor y({m, k});
    for (auto& v : y.data()) v = rng.bernoulli(0.5);
    const double sum = bce_multilabel(z, y, ad::Reduction::kSum);
    EXPECT_NEAR(sum, oracle::bce_sum(z, y), 1e-12);
    EXPECT_NEAR(sum, double(m * k) * bce_multilabel(z, y, ad::Reduction::kMean), 1e-12);
  }
  EXPECT_THROW(bce_multilabel(Tensor::zeros({1, 1}), Tensor::matrix(1, 1, {0.5})), ValidationError);
}

TEST(BceMultilabel, PassesGradCheckThroughPairHead) {
  Rng rng(10);
  for (int fixture = 0; fixture < 5; ++fixture) {
    const PairHeadConfig head{fixture % 2 ? PairCombine::kConcat : PairCombine::kHadamard};
    ParamSet<double> p;
    init_pair_head(p, head, 4, 3, rng.split(std::uint64_t(fixture)));
    p["head.b"] = testing_support::random_tensor(rng, {3});
    p.add("g", testing_support::random_tensor(rng, {6, 4}));
    const auto pairs = random_pairs(rng, 6, 5);
    Tensor y({5, 3});
    for (auto& v : y.data()) v = rng.bernoulli(0.5);
    const auto report = grad_check(
        "bce_multilabel",
        [&](Tape<double>& t, const std::vector<Var>& v) {
          const BoundParams<double> bp(p, v);
          return bce_multilabel(t, pair_logits(t, head, bp, bp["g"], pairs), y, ad::Reduction::kSum);
        },
        p);
    EXPECT_TRUE(report.passed) << report.max_rel_err;
  }
}

class PpiTraining : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthSpec spec;
    spec.n_proteins = 60;
    spec.n_families = 6;
    spec.n_clans = 2;
    spec.n_types = 3;
    spec.compat_density = 0.3;
    corpus = synth_generate(spec);
    split = make_split(corpus.edges.edges, SplitMethod::kRandom, 0.2, 0.2, 3);
    std::vector<std::string> ids;
    for (const auto& p : corpus.proteins) ids.push_back(p.id);
    Rng rng(11);
    graph = build_graph(corpus.edges.edges, ids, testing_support::random_tensor(rng, {ids.size(), 6}), split.train);
    gin.n_blocks = 2;
    gin.hidden = 8;
    model = init_ppi_model<double>(gin, PairHeadConfig{}, 6, 3, 5);
  }

  SynthCorpus corpus;
  SplitSpec split;
  PpiGraph<double> graph;
  GinConfig gin;
  PpiModel<double> model;
};

TEST_F(PpiTraining, ZeroEpochsReturnInitialParameters) {
  PpiTrainConfig cfg;
  cfg.epochs = 0;
  const auto r = train_ppi(model, graph, split, cfg);
  EXPECT_EQ(r.model.params, model.params);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_TRUE(r.log.empty());
}

TEST_F(PpiTraining, FirstEpochLowersTrainingLoss) {
  PpiTrainConfig cfg;
  cfg.epochs = 1;
  const auto r = train_ppi(model, graph, split, cfg);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_LT(r.log[0].train_loss, r.initial_loss);
}

TEST_F(PpiTraining, BestEpochParametersAreReturned) {
  PpiTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_edges = 16;
  const std::vector<double> scores = {0.1, 0.9, 0.3, 0.9};
  ParamSet<double> at_epoch2;
  const auto r = train_ppi(model, graph, split, cfg, [&](std::size_t epoch, const PpiModel<double>& m) {
    if (epoch == 2) at_epoch2 = m.params;
    return scores[epoch - 1];
  });
  EXPECT_EQ(r.best_epoch, 2u);
  EXPECT_EQ(r.best_score, 0.9);
  EXPECT_EQ(r.model.params, at_epoch2);
}

TEST_F(PpiTraining, RunsAreDeterministic) {
  PpiTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_edges = 20;
  const auto a = train_ppi(model, graph, split, cfg), b = train_ppi(model, graph, split, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_score, b.log[i].val_score);
  }
  EXPECT_EQ(a.model.params, b.model.params);
}

TEST_F(PpiTraining, RefusesLeakyAdjacencyAndEmptyTrain) {
  std::vector<std::size_t> all(corpus.edges.edges.size());
  std::iota(all.begin(), all.end(), 0);
  const auto leaky = build_graph(corpus.edges.edges, graph.ids, graph.features, all);
  EXPECT_THROW(train_ppi(model, leaky, split, PpiTrainConfig{}), ValidationError);
  SplitSpec empty = split;
  empty.train.clear();
  EXPECT_THROW(train_ppi(model, graph, empty, PpiTrainConfig{}), ValidationError);
}

TEST_F(PpiTraining, RunningStatisticsAreNotOptimizedButTrack) {
  PpiTrainConfig cfg;
  cfg.epochs = 2;
  const auto r = train_ppi(model, graph, split, cfg);
  EXPECT_NE(r.model.params["gin.b0.bn.running_mean"], model.params["gin.b0.bn.running_mean"]);
  EXPECT_NE(r.model.params["gin.b0.w1"], model.params["gin.b0.w1"]);
}

TEST_F(PpiTraining, PredictionContract) {
  const auto probs = predict(model, graph, std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {0, 1}, {1, 0}, {4, 9}});
  ASSERT_EQ(probs.shape(), (Shape{4, 3}));
  for (double v : probs.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(probs(0, k), probs(1, k));
    EXPECT_EQ(probs(0, k), probs(2, k));
  }
  EXPECT_THROW(predict(model, graph, std::vector<std::pair<std::string, std::string>>{{graph.ids[0], "nobody"}}),
               ValidationError);
  const std::vector<std::pair<std::size_t, std::size_t>> one = {{0, 1}};
  const std::string tsv = emit_predictions(graph, one, predict(model, graph, one), {"x", "y", "z"});
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "protein_a\tprotein_b\tp_x\tp_y\tp_z");
}

TEST_F(PpiTraining, AnnotationEncoderTunesWhenUnfrozen) {
  SequenceEncoderConfig seq;
  seq.d_model = 8;
  seq.n_blocks = 1;
  seq.n_heads = 2;
  seq.ff_width = 8;
  AlignmentConfig align;
  align.proj_dim = 3;
  align.match_hidden = 4;
  const auto pre = init_pretrain_model<double>(seq, align, corpus.keyword_vocab.size(), 2);
  auto g = graph;
  std::vector<std::vector<std::uint8_t>> kw;
  for (const auto& id : g.ids)
    for (const auto& p : corpus.proteins)
      if (p.id == id) kw.push_back(p.keywords);
  g.keywords = keyword_matrix<double>(kw, corpus.keyword_vocab.size());
  auto tuned = init_ppi_model<double>(gin, PairHeadConfig{}, 6, 3, 5, &pre);
  PpiTrainConfig cfg;
  cfg.epochs = 2;
  const auto r = train_ppi(tuned, g, split, cfg);
  EXPECT_NE(r.model.params["ann.w1"], pre.params["ann.w1"]);
  EXPECT_THROW(train_ppi(tuned, graph, split, cfg), ValidationError);  // no keywords attached
}

}  // namespace
}  // namespace hippo
