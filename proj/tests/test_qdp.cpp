#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "qtd/qdp.hpp"
#include "qtd/random.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using qtd::FiniteDistribution;
using qtd::InterpolationParams;
using qtd::Mrp;
using qtd::QuantileTable;

TEST(QdpStep, SelfLoopFixedPointForAnyLambda) {
  const Mrp mrp = qtd::testing::bundled_mrp("selfloop");
  const QuantileTable fp(1, 3, 2.0);
  for (double l : {0.0, 0.3, 1.0}) {
    EXPECT_EQ(qtd::qdp_step_discrete(mrp, fp, InterpolationParams(1, 3, l)), fp);
  }
}

TEST(QdpStep, FourAtomTarget) {
  const Mrp mrp({{0, 1}, {0, 1}}, {FiniteDistribution({{0, 0.25}, {1, 0.25}, {2, 0.25}, {3, 0.25}}),
                                   FiniteDistribution::dirac(0)},
                0.9, {false, true});
  const QuantileTable t(2, 2);
  const auto lo = qtd::qdp_step_discrete(mrp, t, InterpolationParams(2, 2, 0.0));
  const auto hi = qtd::qdp_step_discrete(mrp, t, InterpolationParams(2, 2, 1.0));
  EXPECT_EQ(lo(0, 0), 0.0);
  EXPECT_EQ(lo(0, 1), 2.0);
  EXPECT_EQ(hi(0, 0), 1.0);
  EXPECT_EQ(hi(0, 1), 3.0);
}

TEST(QdpStep, ContinuousRewardsRejectedByDiscreteStep) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig3_gaussian");
  EXPECT_THROW(qtd::qdp_step_discrete(mrp, QuantileTable(2, 1)), qtd::UnsupportedModelError);
  EXPECT_THROW(qtd::qdp_step_continuous(mrp, QuantileTable(2, 1), 0.0), qtd::DomainError);
}

TEST(QdpStep, ContinuousMedianOfStandardNormal) {
  const Mrp mrp({{0, 1}, {0, 1}}, {qtd::gaussian(0, 1), FiniteDistribution::dirac(0)}, 0.5, {false, true});
  const auto out = qtd::qdp_step_continuous(mrp, QuantileTable(2, 1), 1e-10);
  EXPECT_NEAR(out(0, 0), 0.0, 1e-10);
  EXPECT_EQ(out(1, 0), 0.0);
}

TEST(QdpStep, ContinuousMatchesDiscreteWithoutFlatRegions) {
  qtd::Rng rng(41);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Mrp fin = qtd::testing::random_finite_mrp(rng, 3, 3, 0.6);
    std::vector<std::vector<double>> p;
    std::vector<qtd::RewardModel> r;
    for (std::size_t x = 0; x < fin.num_states(); ++x) {
      p.push_back(fin.row(x));
      r.emplace_back(qtd::as_cdf(std::get<FiniteDistribution>(fin.reward(x))));
    }
    const Mrp cont(p, r, fin.discount());
    const std::size_t m = 1 + rng() % 3;
    QuantileTable t(fin.num_states(), m);
    for (double& v : t.flat()) v = 4.0 * rng.uniform() - 2.0;
    const auto a = qtd::qdp_step_discrete(fin, t);
    const auto b = qtd::qdp_step_continuous(cont, t, 1e-12);
    const auto tau = qtd::tau_levels(m);
    for (std::size_t x = 0; x < fin.num_states(); ++x) {
      const auto target = qtd::bellman_target_finite(fin, t, x);
      for (std::size_t i = 0; i < m; ++i) {
        if (qtd::inv_cdf(target, tau[i]) != qtd::right_inv_cdf(target, tau[i])) continue;
        ASSERT_NEAR(a(x, i), b(x, i), 1e-10);
        ++compared;
      }
    }
  }
  EXPECT_GT(compared, 300);
}

TEST(QdpStep, OutputsSortedPerState) {
  qtd::Rng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const Mrp mrp = qtd::testing::random_finite_mrp(rng, 4, 4, 0.8);
    const std::size_t m = 1 + rng() % 5;
    QuantileTable t(mrp.num_states(), m);
    for (double& v : t.flat()) v = 10.0 * rng.uniform() - 5.0;
    InterpolationParams l(mrp.num_states(), m);
    for (double& v : l.flat()) v = rng.uniform();
    const auto out = qtd::qdp_step_discrete(mrp, t, l);
    for (std::size_t x = 0; x < out.num_states(); ++x) ASSERT_TRUE(std::is_sorted(out.row(x).begin(), out.row(x).end()));
  }
}

TEST(QdpOracle, DiscreteStepMatchesBruteForce) {
  qtd::Rng rng(43);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = qtd::testing::random_rational_mrp(rng);
    const Mrp mrp = r.build();
    const std::size_t n = r.trans.size();
    const std::size_t m = 1 + rng() % 3;
    QuantileTable t(n, m);
    for (double& v : t.flat()) v = 0.5 * static_cast<double>(static_cast<int>(rng() % 13) - 6);
    InterpolationParams l(n, m);
    for (double& v : l.flat()) v = trial % 2 ? static_cast<double>(rng() % 2) : rng.uniform();
    ASSERT_EQ(qtd::qdp_step_discrete(mrp, t, l), qtd::testing::brute_force_step(r, t, l)) << "trial " << trial;
  }
}

TEST(QdpSolve, TwoStateDiracExactTwenty) {
  const Mrp mrp = qtd::testing::bundled_mrp("example63");
  const auto res = qtd::qdp_solve(mrp, InterpolationParams(2, 2));
  EXPECT_EQ(res.table(0, 1), 20.0);
  EXPECT_TRUE(qtd::is_qdp_fixed_point(mrp, res.table));
}

TEST(QdpSolve, SelfLoopGeometricConvergence) {
  const Mrp mrp = qtd::testing::bundled_mrp("selfloop");
  const auto res = qtd::qdp_solve(mrp, InterpolationParams(1, 3), QuantileTable(1, 3), 1e-8);
  for (double v : res.table.flat()) EXPECT_NEAR(v, 2.0, 1e-8);
  EXPECT_LE(res.iterations, 30);
}

TEST(QdpSolve, InitAtFixedPointTakesOneIteration) {
  const Mrp mrp = qtd::testing::bundled_mrp("example63");
  const auto fp = qtd::qdp_solve(mrp, InterpolationParams(2, 2)).table;
  const auto again = qtd::qdp_solve(mrp, InterpolationParams(2, 2), fp);
  EXPECT_EQ(again.iterations, 1);
  EXPECT_EQ(again.table, fp);
}

TEST(QdpSolve, NonConvergenceCarriesLastTable) {
  const Mrp mrp = qtd::testing::bundled_mrp("example63");
  try {
    qtd::qdp_solve(mrp, InterpolationParams(2, 2), QuantileTable(2, 2), 1e-10, 3);
    FAIL() << "expected non-convergence";
  } catch (const qtd::NonConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 3);
    EXPECT_EQ(e.last_table().num_states(), 2u);
    EXPECT_GT(e.last_table()(0, 1), 0.0);
  }
}

TEST(QdpSolve, LambdaConsistencyUnderSmoothRewards) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig3_gaussian");
  const auto a = qtd::qdp_solve(mrp, InterpolationParams(2, 1, 0.0)).table;
  const auto b = qtd::qdp_solve(mrp, InterpolationParams(2, 1, 1.0)).table;
  EXPECT_LE(qtd::sup_distance(a, b), 1e-9);
}

TEST(QdpSolve, ChainLastStateMatchesNormalQuantiles) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig2_chain");
  const auto res = qtd::qdp_solve(mrp, InterpolationParams(5, 5));
  // Phi^{-1}(0.1), Phi^{-1}(0.3) to 16 digits.
  const double want[] = {-1.2815515655446004, -0.5244005127080407, 0.0, 0.5244005127080407, 1.2815515655446004};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(res.table(3, i), want[i], 1e-9);
  for (std::size_t x = 0; x < 5; ++x) EXPECT_TRUE(std::is_sorted(res.table.row(x).begin(), res.table.row(x).end()));
  for (double v : res.table.row(4)) EXPECT_EQ(v, 0.0);
}

TEST(QdpProperty, SuccessiveIteratesContract) {
  for (const char* name : {"fig3_dirac", "fig3_det_half", "example63", "selfloop"}) {
    const Mrp mrp = qtd::testing::bundled_mrp(name);
    for (std::size_t m : {1u, 2u, 5u}) {
      InterpolationParams l(mrp.num_states(), m, 0.5);
      QuantileTable prev(mrp.num_states(), m, 7.0);
      QuantileTable cur = qtd::qdp_step_discrete(mrp, prev, l);
      for (int k = 0; k < 40; ++k) {
        const QuantileTable next = qtd::qdp_step_discrete(mrp, cur, l);
        const double before = qtd::wbar_inf(cur, prev);
        const double after = qtd::wbar_inf(next, cur);
        if (before > 1e-9) {
          ASSERT_LE(after, mrp.discount() * before + 1e-12) << name << " m=" << m << " k=" << k;
        }
        prev = cur;
        cur = next;
      }
    }
  }
}

TEST(FixedPoint, Membership) {
  const Mrp self = qtd::testing::bundled_mrp("selfloop");
  auto fp = qtd::qdp_solve(self, InterpolationParams(1, 3)).table;
  EXPECT_TRUE(qtd::is_qdp_fixed_point(self, fp));
  fp(0, 1) += 1.0;
  EXPECT_FALSE(qtd::is_qdp_fixed_point(self, fp));

  const Mrp half = qtd::testing::bundled_mrp("fig3_det_half");
  for (unsigned bits = 0; bits < 4; ++bits) {
    const auto c = qtd::qdp_solve(half, InterpolationParams::corner(2, 1, bits)).table;
    EXPECT_TRUE(qtd::is_qdp_fixed_point(half, c)) << bits;
  }
  const auto lo = qtd::qdp_solve(half, InterpolationParams(2, 1, 0.0)).table;
  const auto hi = qtd::qdp_solve(half, InterpolationParams(2, 1, 1.0)).table;
  EXPECT_EQ(lo(0, 0), 1.0);
  EXPECT_EQ(lo(1, 0), -2.0);
  EXPECT_EQ(hi(0, 0), 4.0);
  EXPECT_EQ(hi(1, 0), 1.0);
}

}  // namespace
