#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "qtd/bellman.hpp"
#include "qtd/errors.hpp"
#include "qtd/mdp.hpp"
#include "qtd/qdp.hpp"
#include "qtd/quantile_rep.hpp"
#include "qtd/random.hpp"

namespace qtd {

inline constexpr double kDefaultDt = 0.01;
inline constexpr double kDefaultHorizon = 200.0;

/// Row (x, i) holds tau_i - P(R + gamma theta(X', J) < theta(x, i)).
/// Terminal rows are never learned and hold 0.
inline StateMatrix expected_update(const Mrp& mrp, const QuantileTable& table) {
  detail::require_shapes(mrp, table);
  const auto tau = tau_levels(table.m());
  StateMatrix g(table.num_states(), table.m());
  for (std::size_t x = 0; x < table.num_states(); ++x) {
    if (mrp.terminal(x)) continue;
    const TargetCdf target = bellman_target_cdf(mrp, table, x);
    for (std::size_t i = 0; i < table.m(); ++i) g(x, i) = tau[i] - target.eval_left(table(x, i));
  }
  return g;
}

struct IntervalMapValue {
  double lo;
  double hi;

  bool contains(double v, double tol = 0.0) const { return lo - tol <= v && v <= hi + tol; }
};

/// [tau_i - F(theta(x, i)), tau_i - F(theta(x, i)-)] for the Bellman target F at x.
inline IntervalMapValue di_interval(const Mrp& mrp, const QuantileTable& table, std::size_t x, std::size_t i) {
  detail::require_shapes(mrp, table);
  if (x >= table.num_states() || i >= table.m()) throw ValidationError("coordinate out of range");
  const double tau = tau_levels(table.m())[i];
  const TargetCdf target = bellman_target_cdf(mrp, table, x);
  const double t = table(x, i);
  return {tau - target.eval(t), tau - target.eval_left(t)};
}

struct TimedTable {
  double t;
  QuantileTable table;
};

/// Forward Euler on the mean dynamics. Records t = 0 and every `record_every`-th step,
/// always including the last one.
inline std::vector<TimedTable> euler_integrate(const Mrp& mrp, const QuantileTable& init, double dt = kDefaultDt,
                                               double horizon = kDefaultHorizon, std::size_t record_every = 1) {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  if (!(horizon >= 0.0)) throw DomainError("horizon must be non-negative");
  if (record_every == 0) record_every = 1;
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  std::vector<TimedTable> out;
  out.reserve(steps / record_every + 2);
  QuantileTable theta = init;
  out.push_back({0.0, theta});
  for (std::size_t k = 1; k <= steps; ++k) {
    const StateMatrix g = expected_update(mrp, theta);
    for (std::size_t c = 0; c < theta.size(); ++c) theta.flat()[c] += dt * g.flat()[c];
    if (k % record_every == 0 || k == steps) out.push_back({static_cast<double>(k) * dt, theta});
  }
  return out;
}

/// max_{x, i} |theta(x, i) - fixed_point(x, i)|.
inline double lyapunov_simple(const QuantileTable& table, const QuantileTable& fixed_point) {
  return sup_distance(table, fixed_point);
}

struct FixedPointSetOptions {
  std::size_t lambda_samples = 16;
  // Every corner is enumerated up to this many coordinates.
  std::size_t exhaustive_limit = 12;
  // Corner coordinates drawn at random beyond the exhaustive limit.
  std::size_t random_corner_bits = 4;
  // Pattern search over lambda from the closest candidate (small problems only).
  bool refine = true;
  double refine_min_step = 1.0 / 4096.0;
  double qdp_tol = 1e-10;
  QdpOptions qdp;
};

/// A sample of fixed points {theta_lambda} covering the lambda cube.
class FixedPointSet {
 public:
  struct Member {
    InterpolationParams lambda;
    QuantileTable table;
  };

  FixedPointSet(Mrp mrp, std::size_t m, const Rng& rng, FixedPointSetOptions opts = {})
      : mrp_(std::move(mrp)), m_(m), opts_(opts) {
    if (opts_.lambda_samples == 0) throw DomainError("lambda_samples must be at least 1");
    const std::size_t n = mrp_.num_states();
    const std::size_t dim = n * m;
    Rng draw = rng;
    std::vector<InterpolationParams> lambdas;
    lambdas.emplace_back(n, m, 0.0);
    lambdas.emplace_back(n, m, 1.0);
    if (dim <= opts_.exhaustive_limit) {
      for (unsigned long long bits = 1; bits + 1 < (1ULL << dim); ++bits) {
        lambdas.push_back(InterpolationParams::corner(n, m, bits));
      }
    } else {
      std::vector<std::size_t> coords(dim);
      for (std::size_t k = 0; k < dim; ++k) coords[k] = k;
      const std::size_t bits = std::min(opts_.random_corner_bits, dim);
      for (std::size_t k = 0; k < bits; ++k) {
        std::swap(coords[k], coords[k + static_cast<std::size_t>(draw() % (dim - k))]);
      }
      for (unsigned long long pattern = 1; pattern < (1ULL << bits); ++pattern) {
        InterpolationParams l(n, m, 0.0);
        for (std::size_t k = 0; k < bits; ++k) {
          if ((pattern >> k) & 1ULL) l.flat()[coords[k]] = 1.0;
        }
        lambdas.push_back(std::move(l));
      }
    }
    for (std::size_t s = 0; s < opts_.lambda_samples; ++s) {
      InterpolationParams l(n, m, 0.0);
      for (double& v : l.flat()) v = draw.uniform();
      lambdas.push_back(std::move(l));
    }
    QuantileTable warm(n, m);
    for (auto& l : lambdas) {
      QuantileTable t = solve(l, warm);
      if (members_.empty()) warm = t;
      members_.push_back({std::move(l), std::move(t)});
    }
    for (std::size_t a = 0; a < members_.size(); ++a) {
      for (std::size_t b = a + 1; b < members_.size(); ++b) {
        diameter_ = std::max(diameter_, sup_distance(members_[a].table, members_[b].table));
      }
    }
  }

  const std::vector<Member>& members() const noexcept { return members_; }
  const Mrp& mrp() const noexcept { return mrp_; }

  /// Largest sup-norm distance between two members.
  double diameter() const noexcept { return diameter_; }

  /// Upper bound on inf_lambda ||table - theta_lambda||_inf.
  double distance(const QuantileTable& table) const {
    detail::require_shapes(mrp_, table);
    if (table.m() != m_) throw ValidationError("table has a different number of quantiles");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < members_.size(); ++k) {
      const double d = sup_distance(table, members_[k].table);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    const bool small = table.size() <= opts_.exhaustive_limit;
    if (!opts_.refine || !small || diameter_ <= 10.0 * opts_.qdp_tol) return best_d;

    InterpolationParams lambda = members_[best].lambda;
    QuantileTable theta = members_[best].table;
    if (auto own = self_consistent_lambda(table)) {
      QuantileTable t = solve(*own, theta);
      const double d = sup_distance(table, t);
      if (d < best_d) {
        best_d = d;
        lambda = std::move(*own);
        theta = std::move(t);
      }
    }
    const std::size_t dim = lambda.size();
    // Moves along +-e_a and, in low dimension, +-e_a +- e_b (the sup norm has ridges coordinate moves cannot cross).
    std::vector<std::vector<std::pair<std::size_t, double>>> moves;
    for (std::size_t a = 0; a < dim; ++a) {
      for (double da : {-1.0, 1.0}) moves.push_back({{a, da}});
    }
    if (dim <= 4) {
      for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t b = a + 1; b < dim; ++b) {
          for (double da : {-1.0, 1.0}) {
            for (double db : {-1.0, 1.0}) moves.push_back({{a, da}, {b, db}});
          }
        }
      }
    }
    for (double step = 0.5; step >= opts_.refine_min_step; step *= 0.5) {
      bool improved = true;
      while (improved && best_d > 0.0) {
        improved = false;
        for (const auto& move : moves) {
          InterpolationParams trial = lambda;
          for (const auto& [c, dir] : move) trial.flat()[c] = std::clamp(trial.flat()[c] + dir * step, 0.0, 1.0);
          if (trial == lambda) continue;
          QuantileTable t = solve(trial, theta);
          const double d = sup_distance(table, t);
          if (d < best_d) {
            best_d = d;
            lambda = std::move(trial);
            theta = std::move(t);
            improved = true;
          }
        }
      }
    }
    return best_d;
  }

 private:
  // lambda(x, i) placing table(x, i) between the least and greatest tau_i-quantile of its own
  // Bellman target. A table in the fixed-point set is the fixed point for this lambda.
  std::optional<InterpolationParams> self_consistent_lambda(const QuantileTable& table) const {
    if (!mrp_.all_finite_rewards()) return std::nullopt;
    const auto tau = tau_levels(m_);
    InterpolationParams lambda(table.num_states(), m_);
    for (std::size_t x = 0; x < table.num_states(); ++x) {
      const FiniteDistribution target = bellman_target_finite(mrp_, table, x);
      for (std::size_t i = 0; i < m_; ++i) {
        const double lo = inv_cdf(target, tau[i]);
        const double hi = right_inv_cdf(target, tau[i]);
        lambda(x, i) = hi > lo ? std::clamp((table(x, i) - lo) / (hi - lo), 0.0, 1.0) : 0.0;
      }
    }
    return lambda;
  }

  QuantileTable solve(const InterpolationParams& lambda, const QuantileTable& init) const {
    return qdp_solve(mrp_, lambda, init, opts_.qdp_tol, 100000, opts_.qdp).table;
  }

  Mrp mrp_;
  std::size_t m_;
  FixedPointSetOptions opts_;
  std::vector<Member> members_;
  double diameter_ = 0.0;
};

/// min over sampled lambda of ||table - theta_lambda||_inf; an upper bound on the exact minimum.
inline double lyapunov_general(const Mrp& mrp, const QuantileTable& table, std::size_t lambda_samples, const Rng& rng) {
  FixedPointSetOptions opts;
  opts.lambda_samples = lambda_samples;
  return FixedPointSet(mrp, table.m(), rng, opts).distance(table);
}

struct FieldRow {
  double c1;
  double c2;
  double g1;
  double g2;
};

struct GridAxis {
  double lo;
  double hi;
  std::size_t n;

  double at(std::size_t k) const {
    return n <= 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  }
};

/// Expected update over a grid of the two free coordinates of a table with X * m = 2.
inline std::vector<FieldRow> expected_update_field(const Mrp& mrp, std::size_t m, const GridAxis& ax,
                                                   const GridAxis& ay) {
  if (mrp.num_states() * m != 2) throw ValidationError("field dumps need exactly two coordinates (states x m = 2)");
  if (ax.n == 0 || ay.n == 0) throw ValidationError("grid axes need at least one point");
  std::vector<FieldRow> rows;
  rows.reserve(ax.n * ay.n);
  QuantileTable theta(mrp.num_states(), m);
  for (std::size_t a = 0; a < ax.n; ++a) {
    for (std::size_t b = 0; b < ay.n; ++b) {
      theta.flat()[0] = ax.at(a);
      theta.flat()[1] = ay.at(b);
      const StateMatrix g = expected_update(mrp, theta);
      rows.push_back({theta.flat()[0], theta.flat()[1], g.flat()[0], g.flat()[1]});
    }
  }
  return rows;
}

}  // namespace qtd
