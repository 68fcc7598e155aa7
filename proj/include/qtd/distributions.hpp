#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qtd/errors.hpp"

namespace qtd {

/// Probabilities must sum to one within this tolerance.
inline constexpr double kProbabilityTolerance = 1e-12;

// Cumulative masses within this distance of a level count as equal to it, so
// rounded sums such as 3 * (1/6) still hit the level 1/2.
inline constexpr double kLevelTolerance = 1e-12;

/// A probability distribution on the reals with finitely many atoms.
///
/// Atoms are kept sorted by location with duplicate locations merged, so the
/// cumulative scans behind the quantile queries are unambiguous. The last
/// cumulative value is pinned to exactly 1.
class FiniteDistribution {
 public:
  struct Atom {
    double location;
    double probability;
  };

  explicit FiniteDistribution(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ValidationError("finite distribution needs at least one atom");
    long double total = 0.0L;
    for (const auto& a : atoms) {
      if (!std::isfinite(a.location)) throw ValidationError("atom location is not finite");
      if (!(a.probability > 0.0) || !std::isfinite(a.probability)) {
        throw ValidationError("atom probability must be positive, got " + std::to_string(a.probability));
      }
      total += a.probability;
    }
    if (std::fabs(static_cast<double>(total - 1.0L)) > kProbabilityTolerance) {
      throw ValidationError("atom probabilities sum to " + std::to_string(static_cast<double>(total)) +
                            ", expected 1");
    }
    std::stable_sort(atoms.begin(), atoms.end(),
                     [](const Atom& a, const Atom& b) { return a.location < b.location; });
    atoms_ = merge_sorted(std::move(atoms));
    build_cumulative();
  }

  static FiniteDistribution dirac(double location) { return FiniteDistribution({{location, 1.0}}); }

  /// Equally weighted atoms at `locations` (duplicates merged with summed mass).
  static FiniteDistribution equal_weights(std::span<const double> locations) {
    if (locations.empty()) throw ValidationError("finite distribution needs at least one atom");
    std::vector<double> sorted(locations.begin(), locations.end());
    return from_sorted_samples(std::move(sorted), /*already_sorted=*/false);
  }

  /// Empirical distribution of `samples`; probabilities are count / n.
  static FiniteDistribution empirical(std::vector<double> samples) {
    if (samples.empty()) throw ValidationError("empirical distribution needs at least one sample");
    return from_sorted_samples(std::move(samples), /*already_sorted=*/false);
  }

  std::span<const Atom> atoms() const noexcept { return atoms_; }
  std::span<const double> cumulative() const noexcept { return cumulative_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  double min() const noexcept { return atoms_.front().location; }
  double max() const noexcept { return atoms_.back().location; }

  double mean() const noexcept {
    long double s = 0.0L;
    for (const auto& a : atoms_) s += static_cast<long double>(a.location) * a.probability;
    return static_cast<double>(s);
  }

  friend bool operator==(const FiniteDistribution& a, const FiniteDistribution& b) {
    if (a.atoms_.size() != b.atoms_.size()) return false;
    for (std::size_t k = 0; k < a.atoms_.size(); ++k) {
      if (a.atoms_[k].location != b.atoms_[k].location ||
          a.atoms_[k].probability != b.atoms_[k].probability) {
        return false;
      }
    }
    return true;
  }

 private:
  FiniteDistribution() = default;

  static std::vector<Atom> merge_sorted(std::vector<Atom> atoms) {
    std::vector<Atom> merged;
    merged.reserve(atoms.size());
    for (const auto& a : atoms) {
      if (!merged.empty() && merged.back().location == a.location) {
        merged.back().probability += a.probability;
      } else {
        merged.push_back(a);
      }
    }
    return merged;
  }

  static FiniteDistribution from_sorted_samples(std::vector<double> samples, bool already_sorted) {
    for (double s : samples) {
      if (!std::isfinite(s)) throw ValidationError("sample is not finite");
    }
    if (!already_sorted) std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    FiniteDistribution d;
    std::size_t k = 0;
    while (k < samples.size()) {
      std::size_t e = k + 1;
      while (e < samples.size() && samples[e] == samples[k]) ++e;
      d.atoms_.push_back({samples[k], static_cast<double>(e - k) / n});
      k = e;
    }
    d.build_cumulative();
    return d;
  }

  void build_cumulative() {
    cumulative_.resize(atoms_.size());
    long double run = 0.0L;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      run += atoms_[k].probability;
      cumulative_[k] = static_cast<double>(run);
    }
    cumulative_.back() = 1.0;
  }

  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
};

namespace detail {

inline void require_open_unit(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw DomainError("quantile level must lie in (0, 1), got " + std::to_string(tau));
  }
}

// Number of atoms with location <= t.
inline std::size_t count_at_or_below(const FiniteDistribution& nu, double t) {
  const auto atoms = nu.atoms();
  return static_cast<std::size_t>(
      std::upper_bound(atoms.begin(), atoms.end(), t,
                       [](double v, const FiniteDistribution::Atom& a) { return v < a.location; }) -
      atoms.begin());
}

// Number of atoms with location < t.
inline std::size_t count_below(const FiniteDistribution& nu, double t) {
  const auto atoms = nu.atoms();
  return static_cast<std::size_t>(
      std::lower_bound(atoms.begin(), atoms.end(), t,
                       [](const FiniteDistribution::Atom& a, double v) { return a.location < v; }) -
      atoms.begin());
}

// Visits the pieces (length, q_a, q_b) on which both quantile functions are constant.
template <typename Visit>
void for_each_quantile_piece(const FiniteDistribution& a, const FiniteDistribution& b, Visit&& visit) {
  const auto ca = a.cumulative();
  const auto cb = b.cumulative();
  const auto la = a.atoms();
  const auto lb = b.atoms();
  std::size_t i = 0;
  std::size_t j = 0;
  double prev = 0.0;
  while (i < ca.size() && j < cb.size()) {
    const double next = std::min(ca[i], cb[j]);
    visit(next - prev, la[i].location, lb[j].location);
    prev = next;
    const bool step_a = ca[i] == next;
    const bool step_b = cb[j] == next;
    if (step_a) ++i;
    if (step_b) ++j;
  }
}

}  // namespace detail

/// F(t) = P(Z <= t).
inline double cdf_at(const FiniteDistribution& nu, double t) {
  const std::size_t k = detail::count_at_or_below(nu, t);
  return k == 0 ? 0.0 : nu.cumulative()[k - 1];
}

/// F(t-) = P(Z < t).
inline double cdf_left_limit(const FiniteDistribution& nu, double t) {
  const std::size_t k = detail::count_below(nu, t);
  return k == 0 ? 0.0 : nu.cumulative()[k - 1];
}

/// Least tau-quantile: inf { y : F(y) >= tau }, with ties up to kLevelTolerance.
inline double inv_cdf(const FiniteDistribution& nu, double tau) {
  detail::require_open_unit(tau);
  const auto cum = nu.cumulative();
  auto it = std::lower_bound(cum.begin(), cum.end(), tau - kLevelTolerance);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
  return nu.atoms()[k].location;
}

/// Greatest tau-quantile: inf { y : F(y) > tau }, with ties up to kLevelTolerance.
inline double right_inv_cdf(const FiniteDistribution& nu, double tau) {
  detail::require_open_unit(tau);
  const auto cum = nu.cumulative();
  auto it = std::upper_bound(cum.begin(), cum.end(), tau + kLevelTolerance);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
  return nu.atoms()[k].location;
}

/// Membership of z in the set of tau-quantiles {z : F(z) = tau} u {inf{y : F(y) > tau}}.
inline bool is_tau_quantile(const FiniteDistribution& nu, double tau, double z) {
  detail::require_open_unit(tau);
  const double f = cdf_at(nu, z);
  if (std::fabs(f - tau) <= kLevelTolerance) return true;
  const double f_left = cdf_left_limit(nu, z);
  if (!(f_left - kLevelTolerance <= tau && tau <= f + kLevelTolerance)) return false;
  // Inside the jump: only valid at an atom.
  const std::size_t k = detail::count_below(nu, z);
  return k < nu.size() && nu.atoms()[k].location == z;
}

/// Integral over t in (0,1) of |F_a^{-1}(t) - F_b^{-1}(t)|, evaluated exactly piecewise.
inline double wasserstein1(const FiniteDistribution& a, const FiniteDistribution& b) {
  long double total = 0.0L;
  detail::for_each_quantile_piece(a, b, [&](double len, double qa, double qb) {
    if (len > 0.0) total += static_cast<long double>(len) * std::fabs(qa - qb);
  });
  return static_cast<double>(total);
}

/// sup over t in (0,1) of |F_a^{-1}(t) - F_b^{-1}(t)|.
///
/// Pieces shorter than the probability tolerance are rounding artefacts of the
/// two cumulative sums and are skipped.
inline double wasserstein_inf(const FiniteDistribution& a, const FiniteDistribution& b) {
  double best = 0.0;
  detail::for_each_quantile_piece(a, b, [&](double len, double qa, double qb) {
    if (len > kProbabilityTolerance) best = std::max(best, std::fabs(qa - qb));
  });
  return best;
}

/// Weighted mixture; weights must be positive and sum to one.
inline FiniteDistribution mix(std::span<const std::pair<double, FiniteDistribution>> parts) {
  if (parts.empty()) throw ValidationError("mixture needs at least one component");
  long double total = 0.0L;
  std::size_t count = 0;
  for (const auto& [w, nu] : parts) {
    if (!(w > 0.0)) throw ValidationError("mixture weight must be positive");
    total += w;
    count += nu.size();
  }
  if (std::fabs(static_cast<double>(total - 1.0L)) > kProbabilityTolerance) {
    throw ValidationError("mixture weights sum to " + std::to_string(static_cast<double>(total)));
  }
  std::vector<FiniteDistribution::Atom> atoms;
  atoms.reserve(count);
  for (const auto& [w, nu] : parts) {
    for (const auto& a : nu.atoms()) atoms.push_back({a.location, w * a.probability});
  }
  return FiniteDistribution(std::move(atoms));
}

/// Distribution of scale * Z + shift for Z ~ nu (scale >= 0).
inline FiniteDistribution affine_pushforward(const FiniteDistribution& nu, double scale, double shift) {
  if (!(scale >= 0.0)) throw DomainError("pushforward scale must be non-negative");
  std::vector<FiniteDistribution::Atom> atoms;
  atoms.reserve(nu.size());
  for (const auto& a : nu.atoms()) atoms.push_back({scale * a.location + shift, a.probability});
  return FiniteDistribution(std::move(atoms));
}

}  // namespace qtd
