#include <gtest/gtest.h>

#include "hippo/gradsuite.hpp"

namespace hippo {
namespace {

TEST(GradientSuite, EveryOpPassesOnFreshSeeds) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto report = run_gradient_suite(seed);
    ASSERT_EQ(report.entries.size(), gradient_suite_ops().size());
    for (const auto& e : report.entries) {
      EXPECT_EQ(e.fixtures, 5u) << e.op;
      EXPECT_TRUE(e.passed()) << e.op << " seed " << seed << ": "
                              << (e.diagnostics.empty() ? "" : e.diagnostics.front());
      EXPECT_LE(e.max_rel_err, 1e-4) << e.op;
    }
    EXPECT_EQ(report.hc_constraint_violations, 0u);
    EXPECT_TRUE(report.passed());
  }
}

TEST(GradientSuite, SameSeedSameErrors) {
  const auto a = run_gradient_suite(9, 2);
  const auto b = run_gradient_suite(9, 2);
  for (std::size_t i = 0; i < a.entries.size(); ++i) EXPECT_EQ(a.entries[i].max_rel_err, b.entries[i].max_rel_err);
}

TEST(GradientSuite, TightToleranceReportsFailures) {
  const auto r = run_gradient_suite(1, 1, 1e-5, 1e-30);
  EXPECT_FALSE(r.passed());
  for (const auto& e : r.entries)
    if (!e.passed()) EXPECT_FALSE(e.diagnostics.empty());
}

}  // namespace
}  // namespace hippo
