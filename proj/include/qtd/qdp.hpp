#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "qtd/bellman.hpp"
#include "qtd/distributions.hpp"
#include "qtd/errors.hpp"
#include "qtd/mdp.hpp"
#include "qtd/quantile_rep.hpp"

namespace qtd {

inline constexpr double kDefaultQdpTolerance = 1e-10;
inline constexpr double kDefaultBisectionTolerance = 1e-8;

/// Thrown by qdp_solve when max_iters is exhausted; carries the last iterate.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, QuantileTable last, int iterations)
      : Error(what), last_(std::move(last)), iterations_(iterations) {}
  const QuantileTable& last_table() const noexcept { return last_; }
  int iterations() const noexcept { return iterations_; }

 private:
  QuantileTable last_;
  int iterations_;
};

namespace detail {

inline void require_shapes(const Mrp& mrp, const QuantileTable& table) {
  if (table.num_states() != mrp.num_states()) throw ValidationError("table does not match the MRP state count");
}

inline void require_shapes(const QuantileTable& table, const InterpolationParams& lambda) {
  if (lambda.num_states() != table.num_states() || lambda.m() != table.m()) {
    throw ValidationError("interpolation parameters do not match the table shape");
  }
}

struct Bracket {
  double lo;  // pred(lo) is false
  double hi;  // pred(hi) is true
};

// Finds lo < hi with !pred(lo) and pred(hi) for a monotone predicate by geometric expansion.
template <typename Pred>
Bracket find_bracket(Pred&& pred, double lo, double hi) {
  if (!(lo < hi)) {
    lo -= 1.0;
    hi += 1.0;
  }
  double width = hi - lo;
  for (int k = 0; k <= 60; ++k) {
    const bool lo_ok = !pred(lo);
    const bool hi_ok = pred(hi);
    if (lo_ok && hi_ok) return {lo, hi};
    if (!lo_ok) lo -= width;
    if (!hi_ok) hi += width;
    width *= 2.0;
  }
  throw NumericError("root bracket not found within 60 doublings");
}

// Shrinks a bracket of a monotone predicate to width <= tol; returns its midpoint.
template <typename Pred>
double bisect(Pred&& pred, Bracket b, double tol) {
  while (b.hi - b.lo > tol) {
    const double mid = b.lo + 0.5 * (b.hi - b.lo);
    if (mid <= b.lo || mid >= b.hi) break;
    if (pred(mid)) {
      b.hi = mid;
    } else {
      b.lo = mid;
    }
  }
  return b.lo + 0.5 * (b.hi - b.lo);
}

// Reinterprets a double through its shortest round-trip decimal form, so that
// inputs written as 0.9 are treated as 9/10 in extended precision.
inline long double decimal_value(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf) - 1, v);
  if (res.ec != std::errc{}) return v;
  *res.ptr = '\0';
  return std::strtold(buf, nullptr);
}

}  // namespace detail

/// One synchronous QDP sweep for finitely supported rewards: theta'(x, .) = Pi^lambda(T theta)(x).
inline QuantileTable qdp_step_discrete(const Mrp& mrp, const QuantileTable& table, const InterpolationParams& lambda) {
  detail::require_shapes(mrp, table);
  detail::require_shapes(table, lambda);
  if (!mrp.all_finite_rewards()) throw UnsupportedModelError("discrete QDP step needs finitely supported rewards");
  QuantileTable out(table.num_states(), table.m());
  for (std::size_t x = 0; x < table.num_states(); ++x) {
    const auto row = project(bellman_target_finite(mrp, table, x), table.m(), lambda.row(x));
    std::copy(row.begin(), row.end(), out.row(x).begin());
  }
  return out;
}

inline QuantileTable qdp_step_discrete(const Mrp& mrp, const QuantileTable& table) {
  return qdp_step_discrete(mrp, table, InterpolationParams(table.num_states(), table.m()));
}

/// One synchronous QDP sweep through the target CDFs, solving
/// eval(theta') = tau_i by bisection to bracket width <= tol.
///
/// With lambda = 0 the least root is returned; lambda(x, i) > 0 interpolates
/// towards the greatest root inf { t : eval(t) > tau_i }.
inline QuantileTable qdp_step_continuous(const Mrp& mrp, const QuantileTable& table, double tol,
                                         const InterpolationParams* lambda = nullptr) {
  detail::require_shapes(mrp, table);
  if (lambda != nullptr) detail::require_shapes(table, *lambda);
  if (!(tol > 0.0)) throw DomainError("bisection tolerance must be positive");
  const std::size_t m = table.m();
  const auto tau = tau_levels(m);
  QuantileTable out(table.num_states(), m);
  for (std::size_t x = 0; x < table.num_states(); ++x) {
    if (mrp.terminal(x)) continue;
    const TargetCdf target = bellman_target_cdf(mrp, table, x);
    double lo;
    double hi;
    if (target.support_hint) {
      lo = target.support_hint->first;
      hi = target.support_hint->second;
    } else {
      const auto r = table.row(x);
      lo = mrp.discount() * *std::min_element(r.begin(), r.end()) - 1.0;
      hi = mrp.discount() * *std::max_element(r.begin(), r.end()) + 1.0;
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double level = tau[i];
      auto reaches = [&](double t) { return target.eval(t) >= level - kLevelTolerance; };
      const double least = detail::bisect(reaches, detail::find_bracket(reaches, lo, hi), tol);
      const double lam = lambda != nullptr ? (*lambda)(x, i) : 0.0;
      if (lam == 0.0) {
        out(x, i) = least;
        continue;
      }
      auto exceeds = [&](double t) { return target.eval(t) > level + kLevelTolerance; };
      const double greatest = detail::bisect(exceeds, detail::find_bracket(exceeds, lo, hi), tol);
      out(x, i) = (1.0 - lam) * least + lam * greatest;
    }
  }
  return out;
}

struct QdpOptions {
  double bisection_tol = kDefaultBisectionTolerance;
  // Snap finite-reward fixed points to the solution of their local affine system.
  bool polish = true;
};

/// The exact step when every reward is finitely supported, the bisection step otherwise.
inline QuantileTable qdp_step(const Mrp& mrp, const QuantileTable& table, const InterpolationParams& lambda,
                              const QdpOptions& opts = {}) {
  if (mrp.all_finite_rewards()) return qdp_step_discrete(mrp, table, lambda);
  return qdp_step_continuous(mrp, table, opts.bisection_tol, &lambda);
}

struct QdpResult {
  QuantileTable table;
  int iterations = 0;
};

namespace detail {

// Source atom (successor, index, reward) of the least / greatest tau-quantile at each coordinate.
struct Selection {
  std::size_t y;
  std::size_t j;
  double reward;
};

inline std::optional<Selection> select_atom(const Mrp& mrp, const QuantileTable& table, std::size_t x,
                                            double location) {
  for (const auto& o : enumerate_transitions(mrp, x)) {
    for (std::size_t j = 0; j < table.m(); ++j) {
      if (o.reward + mrp.discount() * table(o.next_state, j) == location) return Selection{o.next_state, j, o.reward};
    }
  }
  return std::nullopt;
}

// Solves theta = c + gamma A theta for the affine map that the discrete step
// realises around `table`, in extended precision from decimal inputs.
inline std::optional<QuantileTable> affine_fixed_point(const Mrp& mrp, const QuantileTable& table,
                                                       const InterpolationParams& lambda) {
  const std::size_t n = table.num_states();
  const std::size_t m = table.m();
  const std::size_t dim = n * m;
  if (dim > 2048) return std::nullopt;
  using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  const long double gamma = decimal_value(mrp.discount());
  MatrixL a = MatrixL::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  VectorL c = VectorL::Zero(static_cast<Eigen::Index>(dim));
  const auto tau = tau_levels(m);
  for (std::size_t x = 0; x < n; ++x) {
    if (mrp.terminal(x)) continue;
    const FiniteDistribution target = bellman_target_finite(mrp, table, x);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(x * m + i);
      const long double lam = lambda(x, i);
      auto add = [&](double location, long double weight) {
        if (weight == 0.0L) return true;
        const auto sel = select_atom(mrp, table, x, location);
        if (!sel) return false;
        c(row) += weight * decimal_value(sel->reward);
        a(row, static_cast<Eigen::Index>(sel->y * m + sel->j)) -= weight * gamma;
        return true;
      };
      if (!add(inv_cdf(target, tau[i]), 1.0L - lam)) return std::nullopt;
      if (!add(right_inv_cdf(target, tau[i]), lam)) return std::nullopt;
    }
  }
  const VectorL sol = a.partialPivLu().solve(c);
  QuantileTable out(n, m);
  for (std::size_t k = 0; k < dim; ++k) {
    const auto v = static_cast<double>(sol(static_cast<Eigen::Index>(k)));
    if (!std::isfinite(v)) return std::nullopt;
    out.flat()[k] = v;
  }
  return out;
}

inline double residual(const Mrp& mrp, const QuantileTable& table, const InterpolationParams& lambda) {
  return sup_distance(qdp_step_discrete(mrp, table, lambda), table);
}

// Replaces a tolerance-converged iterate by the rounded affine fixed point,
// relaxed onto a bitwise-stationary point of the floating-point step.
inline QuantileTable polish(const Mrp& mrp, const QuantileTable& converged, const InterpolationParams& lambda,
                            double tol_inf) {
  auto candidate = affine_fixed_point(mrp, converged, lambda);
  if (!candidate) return converged;
  for (int k = 0; k < 64; ++k) {
    QuantileTable next = qdp_step_discrete(mrp, *candidate, lambda);
    if (next == *candidate) break;
    candidate = std::move(next);
  }
  if (sup_distance(*candidate, converged) > tol_inf) return converged;
  double scale = 1.0;
  for (double v : candidate->flat()) scale = std::max(scale, std::fabs(v));
  const double noise = 8.0 * std::numeric_limits<double>::epsilon() * scale;
  if (residual(mrp, *candidate, lambda) > std::max(noise, residual(mrp, converged, lambda))) return converged;
  return *candidate;
}

}  // namespace detail

/// Iterates the QDP step until successive iterates differ by at most
/// tol_inf (1 - gamma) / gamma, which places the result within tol_inf of the
/// fixed point in w-bar-infinity.
inline QdpResult qdp_solve(const Mrp& mrp, const InterpolationParams& lambda, const QuantileTable& init,
                           double tol_inf = kDefaultQdpTolerance, int max_iters = 100000,
                           const QdpOptions& opts = {}) {
  detail::require_shapes(mrp, init);
  detail::require_shapes(init, lambda);
  if (!(tol_inf > 0.0)) throw DomainError("QDP tolerance must be positive");
  const double gamma = mrp.discount();
  const double threshold =
      gamma == 0.0 ? std::numeric_limits<double>::infinity() : tol_inf * (1.0 - gamma) / gamma;
  // Bisection noise must stay below the stopping threshold.
  QdpOptions step_opts = opts;
  if (std::isfinite(threshold)) step_opts.bisection_tol = std::min(opts.bisection_tol, 0.25 * threshold);
  QuantileTable current = init;
  for (int k = 1; k <= max_iters; ++k) {
    QuantileTable next = qdp_step(mrp, current, lambda, step_opts);
    const double diff = sup_distance(next, current);
    current = std::move(next);
    if (diff <= threshold) {
      if (opts.polish && mrp.all_finite_rewards()) current = detail::polish(mrp, current, lambda, tol_inf);
      return {std::move(current), k};
    }
  }
  throw NonConvergenceError("QDP did not converge within " + std::to_string(max_iters) + " iterations",
                            std::move(current), max_iters);
}

inline QdpResult qdp_solve(const Mrp& mrp, const InterpolationParams& lambda, double tol_inf = kDefaultQdpTolerance,
                           int max_iters = 100000, const QdpOptions& opts = {}) {
  return qdp_solve(mrp, lambda, QuantileTable(mrp.num_states(), lambda.m()), tol_inf, max_iters, opts);
}

/// Whether every theta(x, i) is a tau_i-quantile of its Bellman target:
/// eval_left(theta) - tol <= tau_i <= eval(theta) + tol.
inline bool is_qdp_fixed_point(const Mrp& mrp, const QuantileTable& table, double tol = 1e-12) {
  detail::require_shapes(mrp, table);
  const auto tau = tau_levels(table.m());
  for (std::size_t x = 0; x < table.num_states(); ++x) {
    const TargetCdf target = bellman_target_cdf(mrp, table, x);
    for (std::size_t i = 0; i < table.m(); ++i) {
      const double t = table(x, i);
      if (!(target.eval_left(t) - tol <= tau[i] && tau[i] <= target.eval(t) + tol)) return false;
    }
  }
  return true;
}

}  // namespace qtd
