#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "qtd/distributions.hpp"
#include "qtd/dynamics.hpp"
#include "qtd/errors.hpp"
#include "qtd/format.hpp"
#include "qtd/mdp.hpp"
#include "qtd/qdp.hpp"
#include "qtd/quantile_rep.hpp"
#include "qtd/random.hpp"
#include "qtd/reward.hpp"

namespace qtd {

/// Smallest horizon H with gamma^H r_abs / (1 - gamma) <= eps.
inline int truncation_horizon(double gamma, double r_abs, double eps) {
  if (!(eps > 0.0)) throw DomainError("truncation error must be positive");
  if (gamma == 0.0 || r_abs == 0.0) return 1;
  const double h = std::ceil(std::log(eps * (1.0 - gamma) / r_abs) / std::log(gamma));
  return std::max(1, static_cast<int>(h));
}

/// Worst-case |G - G_H| for a return truncated after H steps.
inline double truncation_error(double gamma, double r_abs, int horizon) {
  return std::pow(gamma, horizon) * r_abs / (1.0 - gamma);
}

/// [R_min, R_max] over the non-terminal reward supports, or nullopt if some model is unbounded.
inline std::optional<std::pair<double, double>> reward_range(const Mrp& mrp) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  bool any_terminal = false;
  for (std::size_t x = 0; x < mrp.num_states(); ++x) {
    if (mrp.terminal(x)) {
      any_terminal = true;
      continue;
    }
    const auto s = reward_bounded_support(mrp.reward(x));
    if (!s) return std::nullopt;
    lo = std::min(lo, s->first);
    hi = std::max(hi, s->second);
  }
  // Episodes that end contribute zero rewards from then on.
  if (any_terminal || lo > hi) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  return std::pair{lo, hi};
}

namespace detail {

inline std::vector<double> return_samples(const Mrp& mrp, std::size_t x, int horizon, std::size_t n, const Rng& rng) {
  std::vector<double> samples(n);
  for (std::size_t k = 0; k < n; ++k) {
    Rng stream = rng.split(k);
    samples[k] = sample_return(mrp, x, horizon, stream);
  }
  return samples;
}

}  // namespace detail

/// Empirical distribution of sum_{t < horizon} gamma^t R_t over n independent trajectories from x.
inline FiniteDistribution monte_carlo_returns(const Mrp& mrp, std::size_t x, int horizon, std::size_t n_samples,
                                              const Rng& rng) {
  if (x >= mrp.num_states()) throw ValidationError("state index out of range");
  if (n_samples == 0) throw DomainError("need at least one Monte Carlo sample");
  if (horizon < 0) throw DomainError("horizon must be non-negative");
  return FiniteDistribution::empirical(detail::return_samples(mrp, x, horizon, n_samples, rng));
}

/// Per-state Monte Carlo return samples, reusable across bound checks on the same MRP.
struct GroundTruth {
  std::vector<std::vector<double>> samples;  // [state]
  int horizon = 0;
  double truncation = 0.0;
};

inline GroundTruth monte_carlo_ground_truth(const Mrp& mrp, std::size_t n_samples, const Rng& rng,
                                            double eps = 1e-6) {
  const auto range = reward_range(mrp);
  if (!range) throw UnsupportedModelError("ground truth needs bounded rewards to size the horizon");
  const double r_abs = std::max(std::fabs(range->first), std::fabs(range->second));
  if (n_samples == 0) throw DomainError("need at least one Monte Carlo sample");
  GroundTruth g;
  g.horizon = truncation_horizon(mrp.discount(), r_abs, eps);
  g.truncation = truncation_error(mrp.discount(), r_abs, g.horizon);
  for (std::size_t x = 0; x < mrp.num_states(); ++x) {
    auto s = detail::return_samples(mrp, x, g.horizon, n_samples, rng.split(x));
    std::sort(s.begin(), s.end());
    g.samples.push_back(std::move(s));
  }
  return g;
}

struct BoundReport {
  double measured_w1 = 0.0;
  std::vector<double> w1_per_state;
  double bound = 0.0;          // tightest applicable bound
  double bound_general = 0.0;  // (V_max - V_min) / (2 m (1 - gamma))
  std::optional<double> bound_k;
  std::size_t m = 0;
  double gamma = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  std::optional<int> k;
  double mc_margin = 0.0;  // 3 sigma of the bootstrap distribution of measured_w1
  double truncation = 0.0;
  std::size_t n_samples = 0;
  int horizon = 0;
  int qdp_iterations = 0;

  bool holds() const { return measured_w1 <= bound + mc_margin + truncation; }
};

struct BoundOptions {
  std::size_t bootstrap_resamples = 20;
  double qdp_tol = 1e-10;
  QdpOptions qdp;
};

/// Measures max_x w1(eta_lambda(x), MC ground truth at x) against the fixed-point quality bounds.
inline BoundReport check_w1_bound(const Mrp& mrp, std::size_t m, const InterpolationParams& lambda,
                                  const GroundTruth& truth, const Rng& rng, const BoundOptions& opts = {}) {
  const auto range = reward_range(mrp);
  if (!range) throw UnsupportedModelError("bound check needs bounded reward supports");
  if (truth.samples.size() != mrp.num_states()) throw ValidationError("ground truth does not match the MRP");
  const double gamma = mrp.discount();
  BoundReport rep;
  rep.m = m;
  rep.gamma = gamma;
  rep.v_min = range->first / (1.0 - gamma);
  rep.v_max = range->second / (1.0 - gamma);
  rep.bound_general = (rep.v_max - rep.v_min) / (2.0 * static_cast<double>(m) * (1.0 - gamma));
  rep.bound = rep.bound_general;
  if (auto k = mrp.deterministic_after_k()) {
    rep.k = k;
    rep.bound_k = rep.bound_general * (1.0 - std::pow(gamma, *k));
    rep.bound = std::min(rep.bound, *rep.bound_k);
  }
  rep.horizon = truth.horizon;
  rep.n_samples = truth.samples.front().size();
  // Rounding in the summed returns is charged to the truncation allowance.
  const double scale = std::max(std::fabs(rep.v_min), std::fabs(rep.v_max));
  rep.truncation = truth.truncation + 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale);

  const auto fp = qdp_solve(mrp, lambda, QuantileTable(mrp.num_states(), m), opts.qdp_tol, 100000, opts.qdp);
  rep.qdp_iterations = fp.iterations;
  std::vector<FiniteDistribution> approx;
  for (std::size_t x = 0; x < mrp.num_states(); ++x) approx.push_back(to_distribution(fp.table, x));

  for (std::size_t x = 0; x < mrp.num_states(); ++x) {
    const double d = wasserstein1(approx[x], FiniteDistribution::empirical(truth.samples[x]));
    rep.w1_per_state.push_back(d);
    rep.measured_w1 = std::max(rep.measured_w1, d);
  }

  if (opts.bootstrap_resamples >= 2) {
    std::vector<double> stats;
    Rng boot = rng.split(0xb0075742ULL);
    std::vector<double> resample(rep.n_samples);
    for (std::size_t b = 0; b < opts.bootstrap_resamples; ++b) {
      double worst = 0.0;
      for (std::size_t x = 0; x < mrp.num_states(); ++x) {
        const auto& s = truth.samples[x];
        for (double& v : resample) v = s[static_cast<std::size_t>(boot() % s.size())];
        worst = std::max(worst, wasserstein1(approx[x], FiniteDistribution::empirical(resample)));
      }
      stats.push_back(worst);
    }
    long double mean = 0.0L;
    for (double v : stats) mean += v;
    mean /= static_cast<long double>(stats.size());
    long double var = 0.0L;
    for (double v : stats) var += (v - mean) * (v - mean);
    var /= static_cast<long double>(stats.size() - 1);
    rep.mc_margin = 3.0 * std::sqrt(static_cast<double>(var));
  }
  return rep;
}

/// Convenience form that draws the ground truth itself.
inline BoundReport check_w1_bound(const Mrp& mrp, std::size_t m, const InterpolationParams& lambda,
                                  std::size_t n_samples, const Rng& rng, const BoundOptions& opts = {},
                                  double eps = 1e-6) {
  if (!reward_range(mrp)) throw UnsupportedModelError("bound check needs bounded reward supports");
  const GroundTruth truth = monte_carlo_ground_truth(mrp, n_samples, rng.split(1), eps);
  return check_w1_bound(mrp, m, lambda, truth, rng.split(2), opts);
}

/// The worst-case factor max(tau_1, max_i (tau_{i+1} - tau_i) / 2, 1 - tau_m) of the bound.
inline double bound_factor(std::span<const double> tau) {
  if (tau.empty()) throw DomainError("need at least one quantile level");
  double f = std::max(tau.front(), 1.0 - tau.back());
  for (std::size_t i = 0; i + 1 < tau.size(); ++i) f = std::max(f, (tau[i + 1] - tau[i]) / 2.0);
  return f;
}

/// Same computation as lyapunov_general, under its diagnostic name.
inline double distance_to_fixed_point_set(const Mrp& mrp, const QuantileTable& table, std::size_t lambda_samples,
                                          const Rng& rng) {
  return lyapunov_general(mrp, table, lambda_samples, rng);
}

struct BackupEdge {
  std::size_t source_state;
  std::size_t source_i;
  double reward;
  double weight;
};

struct BackupDiagram {
  std::size_t num_states = 0;
  std::size_t m = 0;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<BackupEdge>> edges;
  std::vector<bool> resolved;  // row-major [state][i]

  bool is_resolved(std::size_t x, std::size_t i) const { return resolved.at(x * m + i); }
};

/// Target atoms r + gamma theta(x', j) that coincide with theta(x, i) at a fixed point.
///
/// Matching is bitwise unless `tolerance` > 0. Terminal states have no
/// incoming atoms and stay unresolved.
inline BackupDiagram backup_diagram(const Mrp& mrp, const QuantileTable& fixed_point, double tolerance = 0.0) {
  detail::require_shapes(mrp, fixed_point);
  if (!mrp.all_finite_rewards()) throw ValidationError("back-up diagrams need finitely supported rewards");
  if (!is_qdp_fixed_point(mrp, fixed_point)) throw ValidationError("table is not a QDP fixed point");
  const std::size_t m = fixed_point.m();
  const double gamma = mrp.discount();
  BackupDiagram d;
  d.num_states = mrp.num_states();
  d.m = m;
  d.resolved.assign(d.num_states * m, false);
  for (std::size_t x = 0; x < d.num_states; ++x) {
    if (mrp.terminal(x)) continue;
    const auto outcomes = enumerate_transitions(mrp, x);
    for (std::size_t i = 0; i < m; ++i) {
      const double theta = fixed_point(x, i);
      std::vector<BackupEdge> list;
      for (const auto& o : outcomes) {
        for (std::size_t j = 0; j < m; ++j) {
          const double atom = o.reward + gamma * fixed_point(o.next_state, j);
          const bool hit = tolerance > 0.0 ? std::fabs(atom - theta) <= tolerance : atom == theta;
          if (hit) list.push_back({o.next_state, j, o.reward, o.probability / static_cast<double>(m)});
        }
      }
      d.resolved[x * m + i] = !list.empty();
      if (!list.empty()) d.edges.emplace(std::pair{x, i}, std::move(list));
    }
  }
  return d;
}

/// CSV with header `x,i,source_x,source_i,reward,weight`; indices are 1-based.
inline void write_backup_csv(std::ostream& os, const BackupDiagram& d) {
  os << "x,i,source_x,source_i,reward,weight\n";
  for (const auto& [key, list] : d.edges) {
    for (const auto& e : list) {
      os << key.first + 1 << ',' << key.second + 1 << ',' << e.source_state + 1 << ',' << e.source_i + 1 << ','
         << format_double(e.reward) << ',' << format_double(e.weight) << '\n';
    }
  }
}

/// One `key value` pair per line.
inline void write_bound_report(std::ostream& os, const BoundReport& r) {
  os << "measured_w1 " << format_double(r.measured_w1) << '\n';
  for (std::size_t x = 0; x < r.w1_per_state.size(); ++x) {
    os << "w1_state_" << x + 1 << ' ' << format_double(r.w1_per_state[x]) << '\n';
  }
  os << "bound " << format_double(r.bound) << '\n';
  os << "bound_general " << format_double(r.bound_general) << '\n';
  if (r.bound_k) os << "bound_k " << format_double(*r.bound_k) << '\n';
  if (r.k) os << "k " << *r.k << '\n';
  os << "m " << r.m << '\n';
  os << "gamma " << format_double(r.gamma) << '\n';
  os << "v_min " << format_double(r.v_min) << '\n';
  os << "v_max " << format_double(r.v_max) << '\n';
  os << "mc_margin " << format_double(r.mc_margin) << '\n';
  os << "truncation " << format_double(r.truncation) << '\n';
  os << "n_samples " << r.n_samples << '\n';
  os << "horizon " << r.horizon << '\n';
  os << "holds " << (r.holds() ? "true" : "false") << '\n';
}

}  // namespace qtd
