#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "qtd/dynamics.hpp"
#include "qtd/qdp.hpp"
#include "qtd/qtd.hpp"
#include "qtd/random.hpp"
#include "support.hpp"

namespace {

using qtd::FiniteDistribution;
using qtd::InterpolationParams;
using qtd::Mrp;
using qtd::QuantileTable;
using qtd::StepSchedule;
using qtd::Transition;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TEST(StepSchedule, Values) {
  const auto p = StepSchedule::polynomial(0.5, 0.7);
  EXPECT_EQ(p(0), 0.5);
  EXPECT_DOUBLE_EQ(p(9), 0.5 / std::pow(10.0, 0.7));
  EXPECT_TRUE(p.convergent_in_theory());
  const auto c = StepSchedule::constant(0.01);
  EXPECT_EQ(c(12345), 0.01);
  EXPECT_FALSE(c.convergent_in_theory());
  EXPECT_THROW(StepSchedule::polynomial(0.5, 0.5), qtd::ValidationError);
  EXPECT_THROW(StepSchedule::polynomial(0.0, 0.7), qtd::ValidationError);
  EXPECT_THROW(StepSchedule::constant(0.0), qtd::ValidationError);
}

TEST(QtdUpdate, Examples) {
  const auto t = QuantileTable::from_rows({{0}, {0}});
  const auto out = qtd::qtd_update(t, Transition{0, 1.0, 1}, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.05);
  EXPECT_EQ(out(1, 0), 0.0);

  const auto high = QuantileTable::from_rows({{10, 20, 30}, {0, 0, 0}});
  const auto moved = qtd::qtd_update(high, Transition{0, 0.0, 1}, 0.3, 0.5);
  const auto tau = qtd::tau_levels(3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(moved(0, i) - high(0, i), 0.3 * (tau[i] - 1.0), 1e-12);

  EXPECT_EQ(qtd::qtd_update(high, Transition{0, 0.0, 1}, 0.0, 0.5), high);
  EXPECT_THROW(qtd::qtd_update(high, Transition{0, 0.0, 1}, -0.1, 0.5), qtd::DomainError);
}

TEST(QtdUpdate, TiesCountAsNotBelow) {
  // Target exactly equals theta: the strict indicator is 0, increment alpha tau.
  const auto t = QuantileTable::from_rows({{1.0}});
  const auto out = qtd::qtd_update(t, Transition{0, 0.5, 0}, 1.0, 0.5);
  EXPECT_EQ(out(0, 0), 1.5);
}

TEST(QtdProperty, BoundedIncrements) {
  qtd::Rng rng(51);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 4;
    const std::size_t m = 1 + rng() % 6;
    QuantileTable t(n, m);
    for (double& v : t.flat()) v = 6.0 * rng.uniform() - 3.0;
    const Transition tr{rng() % n, 4.0 * rng.uniform() - 2.0, rng() % n};
    const double alpha = rng.uniform();
    const auto out = qtd::qtd_update(t, tr, alpha, 0.9);
    const auto tau = qtd::tau_levels(m);
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t i = 0; i < m; ++i) {
        const double d = out(x, i) - t(x, i);
        if (x != tr.state) {
          ASSERT_EQ(d, 0.0);
          continue;
        }
        ASSERT_GE(d, -alpha * (1.0 - tau[i]) - 1e-15);
        ASSERT_LE(d, alpha * tau[i] + 1e-15);
      }
    }
  }
}

TEST(QtdProperty, SelfTransitionUsesPreUpdateRow) {
  // x' = x: every indicator must read the pre-update row.
  qtd::Rng rng(52);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + rng() % 5;
    std::vector<double> row(m);
    for (double& v : row) v = std::round(8.0 * rng.uniform()) / 4.0;
    const auto t = QuantileTable::from_rows({row});
    const Transition tr{0, 0.25 * static_cast<double>(rng() % 5), 0};
    const auto out = qtd::qtd_update(t, tr, 0.2, 0.5);
    QuantileTable manual(1, m);
    const auto tau = qtd::tau_levels(m);
    for (std::size_t i = 0; i < m; ++i) {
      int below = 0;
      for (std::size_t j = 0; j < m; ++j) below += tr.reward + 0.5 * row[j] - row[i] < 0.0 ? 1 : 0;
      manual(0, i) = row[i] + 0.2 * (tau[i] - below * (1.0 / static_cast<double>(m)));
    }
    ASSERT_EQ(out, manual);

    // Reordering the row permutes the below-counts with it.
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::rotate(perm.begin(), perm.begin() + 1, perm.end());
    std::vector<double> shuffled(m);
    for (std::size_t i = 0; i < m; ++i) shuffled[i] = row[perm[i]];
    const auto out2 = qtd::qtd_update(QuantileTable::from_rows({shuffled}), tr, 0.2, 0.5);
    for (std::size_t i = 0; i < m; ++i) {
      ASSERT_NEAR(out2(0, i) - shuffled[i] - 0.2 * tau[i], out(0, perm[i]) - row[perm[i]] - 0.2 * tau[perm[i]], 1e-12);
    }
  }
}

TEST(McQuantileUpdate, Examples) {
  const auto t = QuantileTable::from_rows({{0, 1, 2}});
  const auto tau = qtd::tau_levels(3);
  const auto up = qtd::mc_quantile_update(t, 0, 5.0, 0.1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(up(0, i) - t(0, i), 0.1 * tau[i], 1e-12);
  const auto down = qtd::mc_quantile_update(t, 0, -5.0, 0.1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(down(0, i) - t(0, i), 0.1 * (tau[i] - 1.0), 1e-12);
}

TEST(McQuantileUpdate, ConstantStreamConverges) {
  const auto sched = StepSchedule::polynomial(0.5, 0.7);
  QuantileTable t(1, 1);
  for (std::uint64_t k = 0; k < 10000; ++k) t = qtd::mc_quantile_update(t, 0, 3.0, sched(k));
  EXPECT_NEAR(t(0, 0), 3.0, 0.01);
}

TEST(RunSynchronous, ZeroStepsEchoesInit) {
  const Mrp mrp = qtd::testing::bundled_mrp("example63");
  const auto init = QuantileTable::from_rows({{1, 2}, {3, 4}});
  const auto rec = qtd::run_synchronous(mrp, StepSchedule::constant(0.1), 0, init, qtd::Rng(1), 10, 7);
  EXPECT_EQ(rec.final, init);
  ASSERT_EQ(rec.snapshots.size(), 1u);
  EXPECT_EQ(rec.snapshots[0].step, 0u);
  EXPECT_EQ(rec.seed, 7u);
}

TEST(RunSynchronous, SnapshotsStrictlyIncreasing) {
  const Mrp mrp = qtd::testing::bundled_mrp("example63");
  const auto rec = qtd::run_synchronous(mrp, StepSchedule::constant(0.1), 95, QuantileTable(2, 2), qtd::Rng(1), 10);
  ASSERT_EQ(rec.snapshots.size(), 11u);
  for (std::size_t k = 1; k < rec.snapshots.size(); ++k) EXPECT_LT(rec.snapshots[k - 1].step, rec.snapshots[k].step);
  EXPECT_EQ(rec.snapshots.back().step, 95u);
  EXPECT_EQ(rec.snapshots.back().table, rec.final);
}

TEST(RunSynchronous, DiracSelfLoopStaysNearFixedPoint) {
  const Mrp mrp = qtd::testing::bundled_mrp("selfloop");
  const auto fp = qtd::qdp_solve(mrp, InterpolationParams(1, 3)).table;
  const auto sched = StepSchedule::polynomial(0.5, 0.7);
  const auto rec = qtd::run_synchronous(mrp, sched, 2000, fp, qtd::Rng(3), 1);
  for (const auto& s : rec.snapshots) EXPECT_LE(qtd::sup_distance(s.table, fp), sched(0) + 1e-12) << s.step;
}

TEST(RunSynchronous, TerminalRowsUntouched) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig2_chain");
  QuantileTable init(5, 5, 1.0);
  const auto rec = qtd::run_synchronous(mrp, StepSchedule::constant(0.05), 200, init, qtd::Rng(4), 0);
  for (double v : rec.final.row(4)) EXPECT_EQ(v, 1.0);
  EXPECT_NE(rec.final.row(0)[0], 1.0);
}

TEST(RunSynchronous, Deterministic) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig3_gaussian");
  const auto a = qtd::run_synchronous(mrp, StepSchedule::polynomial(0.5, 0.7), 5000, QuantileTable(2, 3), qtd::Rng(9), 500);
  const auto b = qtd::run_synchronous(mrp, StepSchedule::polynomial(0.5, 0.7), 5000, QuantileTable(2, 3), qtd::Rng(9), 500);
  ASSERT_EQ(a.snapshots.size(), b.snapshots.size());
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) EXPECT_EQ(a.snapshots[k].table, b.snapshots[k].table);
  const auto c = qtd::run_synchronous(mrp, StepSchedule::polynomial(0.5, 0.7), 5000, QuantileTable(2, 3), qtd::Rng(10), 500);
  EXPECT_NE(a.final, c.final);
}

TEST(RunAsynchronous, SingleStateMatchesSynchronous) {
  const Mrp mrp({{1.0}}, {FiniteDistribution({{0, 0.5}, {1, 0.5}})}, 0.5);
  const auto sched = StepSchedule::polynomial(0.5, 0.7);
  const auto init = QuantileTable(1, 4);
  const auto sync = qtd::run_synchronous(mrp, sched, 3000, init, qtd::Rng(5), 100);
  for (const auto& src : {qtd::StateSource::iid(), qtd::StateSource::trajectory()}) {
    const auto async = qtd::run_asynchronous(mrp, sched, 3000, init, qtd::Rng(5), src, 100);
    ASSERT_EQ(async.snapshots.size(), sync.snapshots.size());
    for (std::size_t k = 0; k < sync.snapshots.size(); ++k) EXPECT_EQ(async.snapshots[k].table, sync.snapshots[k].table);
  }
}

TEST(RunAsynchronous, IidWeightsControlVisitProportions) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig3_dirac");
  const auto run = qtd::run_asynchronous_detailed(mrp, StepSchedule::constant(0.01), 100000, QuantileTable(2, 1),
                                                  qtd::Rng(6), qtd::StateSource::iid({0.3, 0.7}), 0);
  EXPECT_NEAR(run.visits[0] / 1e5, 0.3, 0.01);
  EXPECT_NEAR(run.visits[1] / 1e5, 0.7, 0.01);
}

TEST(RunAsynchronous, SourceValidation) {
  const Mrp split({{1, 0}, {0, 1}}, {FiniteDistribution::dirac(0), FiniteDistribution::dirac(1)}, 0.5);
  const auto sched = StepSchedule::constant(0.1);
  EXPECT_THROW(qtd::run_asynchronous(split, sched, 10, QuantileTable(2, 1), qtd::Rng(1), qtd::StateSource::trajectory(), 0),
               qtd::ValidationError);
  EXPECT_NO_THROW(qtd::run_asynchronous(split, sched, 10, QuantileTable(2, 1), qtd::Rng(1), qtd::StateSource::iid(), 0));
  EXPECT_THROW(qtd::run_asynchronous(split, sched, 10, QuantileTable(2, 1), qtd::Rng(1), qtd::StateSource::iid({1.0, 0.0}), 0),
               qtd::ValidationError);
  EXPECT_THROW(qtd::run_asynchronous(split, sched, 10, QuantileTable(2, 1), qtd::Rng(1), qtd::StateSource::iid({1.0}), 0),
               qtd::ValidationError);
}

TEST(RunAsynchronous, TrajectoryModeRestartsAfterTerminal) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig2_chain");
  const auto run = qtd::run_asynchronous_detailed(mrp, StepSchedule::constant(0.01), 20000, QuantileTable(5, 2),
                                                  qtd::Rng(7), qtd::StateSource::trajectory(), 0);
  for (std::size_t x = 0; x < 4; ++x) EXPECT_GT(run.visits[x], 1000u) << x;
  EXPECT_EQ(run.visits[4], 0u);
}

TEST(TdRun, DeterministicMatchesValueFunction) {
  const Mrp mrp({{0, 1}, {1, 0}}, {FiniteDistribution::dirac(2), FiniteDistribution::dirac(-1)}, 0.5);
  const auto v = qtd::td_run(mrp, StepSchedule::polynomial(0.5, 0.7), 20000, {0.0, 0.0}, qtd::Rng(8));
  const auto want = qtd::value_function(mrp);
  for (std::size_t x = 0; x < 2; ++x) EXPECT_NEAR(v[x], want[x], 1e-3);
}

TEST(TdRun, ZeroRewardsStayZero) {
  const Mrp mrp({{0.5, 0.5}, {0.5, 0.5}}, {FiniteDistribution::dirac(0), FiniteDistribution::dirac(0)}, 0.9);
  EXPECT_EQ(qtd::td_run(mrp, StepSchedule::constant(0.3), 1000, {0.0, 0.0}, qtd::Rng(1)), (std::vector<double>{0, 0}));
  EXPECT_THROW(qtd::td_run(mrp, StepSchedule::constant(0.3), 1, {0.0}, qtd::Rng(1)), qtd::ValidationError);
}

TEST(TdRun, ChainValuesNearZero) {
  const Mrp mrp = qtd::testing::bundled_mrp("fig2_chain");
  const auto v = qtd::td_run(mrp, StepSchedule::polynomial(0.5, 0.7), 100000, std::vector<double>(5, 0.0), qtd::Rng(9));
  for (double value : v) EXPECT_LT(std::fabs(value), 0.1);
}

double median_final_distance(const std::string& config, bool async) {
  const auto cfg = qtd::testing::bundled_config(config);
  const Mrp mrp = qtd::cli::build_mrp(cfg);
  const qtd::FixedPointSet fps(mrp, cfg.m, qtd::Rng(0));
  const auto sched = StepSchedule::polynomial(0.5, 0.7);
  std::vector<double> d;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const QuantileTable init(mrp.num_states(), cfg.m);
    const auto rec = async ? qtd::run_asynchronous(mrp, sched, 200000, init, qtd::Rng(seed), qtd::StateSource::iid(), 0)
                           : qtd::run_synchronous(mrp, sched, 200000, init, qtd::Rng(seed), 0);
    d.push_back(fps.distance(rec.final));
  }
  return median(d);
}

TEST(QtdConvergence, GaussianSynchronous) { EXPECT_LT(median_final_distance("fig3_gaussian", false), 0.05); }

TEST(QtdConvergence, GaussianAsynchronous) { EXPECT_LT(median_final_distance("fig3_gaussian", true), 0.05); }

TEST(QtdConvergence, DeterministicRewards) { EXPECT_LT(median_final_distance("fig3_dirac", false), 0.1); }

TEST(QtdConvergence, SetValuedLimit) { EXPECT_LT(median_final_distance("fig3_det_half", false), 0.1); }

}  // namespace
