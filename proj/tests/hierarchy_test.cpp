#include <cmath>

#include <gtest/gtest.h>

#include "hippo/hierarchy/cluster_report.hpp"
#include "hippo/hierarchy/hc_loss.hpp"
#include "hippo/numcore/gradcheck.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace hippo {
namespace {

HierarchyTree tree_from(const oracle::RandomTree& rt) {
  HierarchyTree tree;
  for (std::size_t i = 0; i < rt.ids.size(); ++i) tree.add_leaf(rt.ids[i], rt.paths[i]);
  return tree;
}

Tensor unit_rows(Tensor x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double n = 0;
    for (std::size_t k = 0; k < x.cols(); ++k) n += x(i, k) * x(i, k);
    for (std::size_t k = 0; k < x.cols(); ++k) x(i, k) /= std::sqrt(n);
  }
  return x;
}

TEST(HierarchyTree, RejectsFamilyUnderTwoClans) {
  HierarchyTree tree;
  tree.add_leaf("P1", {"C1", "F1"});
  try {
    tree.add_leaf("P2", {"C2", "F1"});
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("F1"), std::string::npos);
  }
}

TEST(HierarchyTree, RejectsDuplicateProteinAndBadWeights) {
  HierarchyTree tree;
  tree.add_leaf("P1", {"C1", "F1"});
  EXPECT_THROW(tree.add_leaf("P1", {"C1", "F1"}), ValidationError);
  EXPECT_THROW(tree.set_level_weights({1.0, 0.0}), ParameterError);
  EXPECT_THROW(tree.set_level_weights({1.0}), ValidationError);
}

TEST(PositivesAtLevel, SameFamilyIsFamilyLevelOnly) {
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  tree.add_leaf("B", {"C1", "F1"});
  const std::vector<std::string> batch{"A", "B"};
  EXPECT_EQ(positives_at_level(tree, batch, 0, 1), (std::vector<std::size_t>{1}));
  EXPECT_TRUE(positives_at_level(tree, batch, 0, 0).empty());
}

TEST(PositivesAtLevel, SingletonFamilyPositivesAtClanOnly) {
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  tree.add_leaf("B", {"C1", "F2"});
  tree.add_leaf("C", {"C1", "F2"});
  const std::vector<std::string> batch{"A", "B", "C"};
  EXPECT_TRUE(positives_at_level(tree, batch, 0, 1).empty());
  EXPECT_EQ(positives_at_level(tree, batch, 0, 0), (std::vector<std::size_t>{1, 2}));
}

TEST(PositivesAtLevel, UnknownProteinIsError) {
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  EXPECT_THROW(positives_at_level(tree, {"A", "Z"}, 0, 0), ValidationError);
}

TEST(PositivesAtLevel, MatchesBruteForceLcaOnRandomTrees) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + std::size_t(rng.uniform_int(11));
    const auto rt = oracle::random_tree(rng, n);
    const auto tree = tree_from(rt);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < 2; ++l)
        ASSERT_EQ(positives_at_level(tree, rt.ids, i, l), oracle::lca_positives(rt.paths, i, l));
  }
}

TEST(PairLoss, ClosedFormThreeMembers) {
  // f_i.f_p = 1, f_i.f_a = 0.
  const Tensor f = Tensor::matrix(3, 2, {1, 0, 1, 0, 0, 1});
  EXPECT_NEAR(pair_loss<double>(0, 1, f, 1.0), std::log(std::exp(1.0) + 1.0) - 1.0, 1e-15);
  EXPECT_NEAR(pair_loss<double>(0, 1, f, 1.0), 0.313262, 1e-6);
}

TEST(PairLoss, UniformSimilaritiesGiveLn2) {
  const Tensor f = Tensor::matrix(3, 1, {1, 1, 1});
  EXPECT_NEAR(pair_loss<double>(0, 2, f, 0.3), std::log(2.0), 1e-15);
}

TEST(PairLoss, MatchesNaiveSoftmax) {
  Rng rng(3);
  const Tensor f = unit_rows(testing_support::random_tensor(rng, {5, 4}));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t p = 0; p < 5; ++p) {
      if (p == i) continue;
      double denom = 0, num = 0;
      for (std::size_t a = 0; a < 5; ++a) {
        if (a == i) continue;
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += f(i, k) * f(a, k);
        denom += std::exp(s / 0.5);
        if (a == p) num = std::exp(s / 0.5);
      }
      EXPECT_NEAR(pair_loss<double>(i, p, f, 0.5), -std::log(num / denom), 1e-12);
    }
}

TEST(PairLoss, NonPositiveTemperatureRejected) {
  const Tensor f = Tensor::matrix(2, 1, {1, 1});
  EXPECT_THROW(pair_loss<double>(0, 1, f, 0.0), ParameterError);
}

TEST(HcLoss, SingleLevelSinglePairCollapses) {
  HierarchyTree tree({"family"});
  tree.set_level_weights({2.5});
  tree.add_leaf("A", {"F1"});
  tree.add_leaf("B", {"F1"});
  const Tensor emb = Tensor::matrix(2, 2, {0.3, 0.4, 1.0, -2.0});
  const auto b = hc_loss<double>(tree, {"A", "B"}, emb, 0.5);
  // N = 2: the positive is the only candidate, so l(i, p) = 0.
  EXPECT_NEAR(b.total, 0.0, 1e-15);
  HierarchyTree three({"family"});
  three.set_level_weights({2.5});
  three.add_leaf("A", {"F1"});
  three.add_leaf("B", {"F1"});
  three.add_leaf("C", {"F2"});
  const Tensor e3 = unit_rows(Tensor::matrix(3, 2, {0.3, 0.4, 1.0, -2.0, -1.0, 0.2}));
  const auto b3 = hc_loss<double>(three, {"A", "B", "C"}, e3, 0.5);
  EXPECT_NEAR(b3.total, 2.5 * (pair_loss<double>(0, 1, e3, 0.5) + pair_loss<double>(1, 0, e3, 0.5)), 1e-14);
}

TEST(HcLoss, OneAnchorOnePositiveIsWeightedPairLoss) {
  const Tensor e3 = unit_rows(Tensor::matrix(3, 2, {0.3, 0.4, 1.0, -2.0, -1.0, 0.2}));
  ad::Tape<double> t;
  const std::vector<std::vector<LevelPairs>> pairs{{LevelPairs{0, 0, {1}}}};
  const auto v = hc_loss(t, t.constant(e3), pairs, {1.7}, 0.5);
  EXPECT_NEAR(t.value(v).item(), 1.7 * pair_loss<double>(0, 1, e3, 0.5), 1e-14);
}

TEST(HcLoss, NoPositivesIsZeroWithFlag) {
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  tree.add_leaf("B", {"C2", "F2"});
  const auto b = hc_loss<double>(tree, {"A", "B"}, Tensor::matrix(2, 2, {1, 0, 0, 1}), 0.5);
  EXPECT_EQ(b.total, 0.0);
  EXPECT_TRUE(b.no_positives);
}

TEST(HcLoss, EmptyBatchRejected) {
  HierarchyTree tree;
  EXPECT_THROW(hc_loss<double>(tree, {}, Tensor::matrix(1, 1, {1}), 0.5), ValidationError);
}

TEST(HcLoss, MatchesBruteForceEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6;
    const auto rt = oracle::random_tree(rng, n);
    auto tree = tree_from(rt);
    const std::vector<double> lambda{0.5 + rng.uniform(), 0.5 + rng.uniform()};
    tree.set_level_weights(lambda);
    const Tensor emb = testing_support::random_tensor(rng, {n, 3});
    const auto b = hc_loss<double>(tree, rt.ids, emb, 0.5);
    EXPECT_NEAR(b.total, oracle::hc_loss(rt.paths, emb, 0.5, lambda), 1e-10);
    EXPECT_EQ(constraint_violations(b), 0u);
    EXPECT_GE(b.total, 0.0);
  }
}

TEST(HcLoss, ConstraintFloorRaisesFamilyLosses) {
  // Clan-level pairs are far apart, family-level pairs close: the floor binds.
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  tree.add_leaf("B", {"C1", "F1"});
  tree.add_leaf("C", {"C1", "F2"});
  tree.add_leaf("D", {"C2", "F3"});
  const Tensor emb = Tensor::matrix(4, 2, {1, 0, 1, 0.01, -1, 0.2, 0.2, 1});
  const auto b = hc_loss<double>(tree, {"A", "B", "C", "D"}, emb, 0.5);
  EXPECT_GT(b.constraint_activations, 0u);
  EXPECT_EQ(constraint_violations(b), 0u);
  for (double v : b.constrained_pair_losses[1]) EXPECT_GE(v, b.per_level[0].max_pair_loss);
}

TEST(HcLoss, PermutationInvariantExactly) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rt = oracle::random_tree(rng, 7);
    const auto tree = tree_from(rt);
    const Tensor emb = testing_support::random_tensor(rng, {7, 4});
    const auto perm = rng.permutation(7);
    std::vector<std::string> ids;
    Tensor pe({7, 4});
    for (std::size_t r = 0; r < 7; ++r) {
      ids.push_back(rt.ids[perm[r]]);
      for (std::size_t k = 0; k < 4; ++k) pe(r, k) = emb(perm[r], k);
    }
    EXPECT_EQ(hc_loss<double>(tree, ids, pe, 0.5).total, hc_loss<double>(tree, rt.ids, emb, 0.5).total);
  }
}

TEST(HcLoss, UniformSimilarityIndependentOfTemperature) {
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  tree.add_leaf("B", {"C1", "F1"});
  tree.add_leaf("C", {"C1", "F2"});
  const Tensor emb = Tensor::matrix(3, 2, {1, 1, 1, 1, 1, 1});
  const double a = hc_loss<double>(tree, {"A", "B", "C"}, emb, 0.07).total;
  const double b = hc_loss<double>(tree, {"A", "B", "C"}, emb, 3.0).total;
  EXPECT_NEAR(a, b, 1e-12);
  // Clan: (ln2 + ln2 + ln2) / 2; family: (ln2 + ln2) / 2.
  EXPECT_NEAR(a, 2.5 * std::log(2.0), 1e-12);
}

TEST(HcLoss, PassesGradCheck) {
  Rng rng(21);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto rt = oracle::random_tree(rng, 6);
    const auto tree = tree_from(rt);
    const auto pairs = all_level_pairs(tree, rt.ids);
    ParamSet<double> point;
    point.add("embeddings", testing_support::random_tensor(rng, {6, 3}));
    const auto report = grad_check(
        "hc_loss",
        [&](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
          return hc_loss(t, v[0], pairs, tree.level_weights(), 0.5);
        },
        point);
    EXPECT_TRUE(report.passed) << report.max_rel_err << " " << report.diagnostic;
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST(ClusterReport, SeparatedClustersHaveHighSilhouette) {
  Rng rng(4);
  HierarchyTree tree;
  std::vector<std::string> ids;
  Tensor emb({20, 2});
  for (std::size_t i = 0; i < 20; ++i) {
    ids.push_back("P" + std::to_string(i));
    tree.add_leaf(ids.back(), {"C1", i < 10 ? "F1" : "F2"});
    emb(i, 0) = (i < 10 ? -10.0 : 10.0) + 0.3 * rng.normal();
    emb(i, 1) = 0.3 * rng.normal();
  }
  const auto report = embedding_cluster_report(emb, ids, tree, 1);
  ASSERT_TRUE(report.silhouette.has_value());
  EXPECT_GT(*report.silhouette, 0.9);
  ASSERT_FALSE(embedding_cluster_report(emb, ids, tree, 0).silhouette.has_value());
}

TEST(ClusterReport, OneSamplePerFamilyIsUndefined) {
  HierarchyTree tree;
  tree.add_leaf("A", {"C1", "F1"});
  tree.add_leaf("B", {"C1", "F2"});
  tree.add_leaf("C", {"C1", "F3"});
  const auto r = embedding_cluster_report(Tensor::matrix(3, 2, {0, 1, 2, 3, 5, 4}), {"A", "B", "C"}, tree, 1);
  EXPECT_FALSE(r.silhouette.has_value());
}

TEST(ClusterReport, IdenticalEmbeddingsAreUndefined) {
  EXPECT_FALSE(silhouette_score(Tensor(Shape{4, 2}, 1.0), {"a", "a", "b", "b"}).has_value());
}

TEST(ClusterReport, PermutationOnlyReordersRows) {
  Rng rng(9);
  HierarchyTree tree;
  std::vector<std::string> ids;
  const Tensor emb = testing_support::random_tensor(rng, {8, 5});
  for (std::size_t i = 0; i < 8; ++i) {
    ids.push_back("P" + std::to_string(i));
    tree.add_leaf(ids.back(), {"C1", "F" + std::to_string(i % 3)});
  }
  const auto base = embedding_cluster_report(emb, ids, tree, 1);
  const auto perm = rng.permutation(8);
  Tensor pe({8, 5});
  std::vector<std::string> pids;
  for (std::size_t r = 0; r < 8; ++r) {
    pids.push_back(ids[perm[r]]);
    for (std::size_t k = 0; k < 5; ++k) pe(r, k) = emb(perm[r], k);
  }
  const auto permuted = embedding_cluster_report(pe, pids, tree, 1);
  for (std::size_t r = 0; r < 8; ++r) {
    EXPECT_EQ(permuted.rows[r].id, base.rows[perm[r]].id);
    EXPECT_NEAR(permuted.rows[r].pc1, base.rows[perm[r]].pc1, 1e-9);
    EXPECT_NEAR(permuted.rows[r].pc2, base.rows[perm[r]].pc2, 1e-9);
    EXPECT_EQ(permuted.rows[r].label, base.rows[perm[r]].label);
  }
  EXPECT_NEAR(*permuted.silhouette, *base.silhouette, 1e-12);
  EXPECT_EQ(cluster_report_csv(base).substr(0, 16), "id,pc1,pc2,label");
}

}  // namespace
}  // namespace hippo
