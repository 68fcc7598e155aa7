#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "qtd/distributions.hpp"
#include "qtd/errors.hpp"
#include "qtd/random.hpp"

namespace qtd {

/// A reward distribution known through its CDF.
///
/// `left_limit` is carried explicitly (equal to `cdf` for families without
/// atoms). `support_hint` is an interval outside which the CDF is 0 / 1 up to
/// 1e-9; when `bounded` is set it is the exact support.
struct ContinuousCdf {
  std::function<double(double)> cdf;
  std::function<double(double)> left_limit;
  std::function<double(double)> inv_cdf;  // optional, may be empty
  std::optional<std::pair<double, double>> support_hint;
  std::function<double(Rng&)> sampler;
  std::optional<double> mean;
  bool bounded = false;
  bool has_atoms = false;
};

using RewardModel = std::variant<FiniteDistribution, ContinuousCdf>;

/// Checks the CDF limits at the support hint and left_limit <= cdf on a probe grid.
inline void validate(const ContinuousCdf& c) {
  if (!c.cdf || !c.left_limit || !c.sampler) {
    throw ValidationError("continuous reward model needs cdf, left_limit and sampler");
  }
  if (c.support_hint) {
    const auto [lo, hi] = *c.support_hint;
    if (!(lo <= hi)) throw ValidationError("support hint lower bound exceeds upper bound");
    if (c.left_limit(lo) > 1e-9) throw ValidationError("cdf does not vanish at the lower support hint");
    if (c.cdf(hi) < 1.0 - 1e-9) throw ValidationError("cdf does not reach one at the upper support hint");
    constexpr int kProbes = 64;
    double prev = 0.0;
    for (int k = 0; k <= kProbes; ++k) {
      const double t = lo + (hi - lo) * k / kProbes;
      const double f = c.cdf(t);
      const double fl = c.left_limit(t);
      if (fl > f || f < prev - 1e-15) throw ValidationError("cdf is not monotone or left_limit exceeds cdf");
      prev = f;
    }
  }
}

/// N(mu, sigma^2).
inline ContinuousCdf gaussian(double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(mu)) throw ValidationError("gaussian needs finite mean and sigma > 0");
  ContinuousCdf c;
  c.cdf = [mu, sigma](double t) { return 0.5 * std::erfc(-(t - mu) / (sigma * std::numbers::sqrt2)); };
  c.left_limit = c.cdf;
  c.inv_cdf = [mu, sigma](double p) {
    detail::require_open_unit(p);
    return mu + sigma * std::numbers::sqrt2 * boost::math::erf_inv(2.0 * p - 1.0);
  };
  c.support_hint = std::pair{mu - 8.0 * sigma, mu + 8.0 * sigma};
  c.sampler = [mu, sigma](Rng& rng) { return mu + sigma * rng.normal(); };
  c.mean = mu;
  return c;
}

/// Uniform on [a, b].
inline ContinuousCdf uniform(double a, double b) {
  if (!(a < b)) throw ValidationError("uniform needs low < high");
  ContinuousCdf c;
  c.cdf = [a, b](double t) { return std::clamp((t - a) / (b - a), 0.0, 1.0); };
  c.left_limit = c.cdf;
  c.inv_cdf = [a, b](double p) {
    detail::require_open_unit(p);
    return a + (b - a) * p;
  };
  c.support_hint = std::pair{a, b};
  c.bounded = true;
  c.sampler = [a, b](Rng& rng) { return a + (b - a) * rng.uniform(); };
  c.mean = 0.5 * (a + b);
  return c;
}

/// Index of the atom selected by a uniform draw u in [0, 1).
inline std::size_t sample_index(std::span<const double> cumulative, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

inline double sample(const FiniteDistribution& nu, Rng& rng) {
  return nu.atoms()[sample_index(nu.cumulative(), rng.uniform())].location;
}

/// Step-function view of a finite distribution.
inline ContinuousCdf as_cdf(const FiniteDistribution& nu) {
  ContinuousCdf c;
  c.cdf = [nu](double t) { return cdf_at(nu, t); };
  c.left_limit = [nu](double t) { return cdf_left_limit(nu, t); };
  c.inv_cdf = [nu](double p) { return inv_cdf(nu, p); };
  c.support_hint = std::pair{nu.min(), nu.max()};
  c.bounded = true;
  c.has_atoms = true;
  c.sampler = [nu](Rng& rng) { return sample(nu, rng); };
  c.mean = nu.mean();
  return c;
}

inline bool is_finite_support(const RewardModel& r) { return std::holds_alternative<FiniteDistribution>(r); }

inline double reward_cdf(const RewardModel& r, double t) {
  return std::visit(
      [t](const auto& m) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FiniteDistribution>) {
          return cdf_at(m, t);
        } else {
          return m.cdf(t);
        }
      },
      r);
}

inline double reward_left_limit(const RewardModel& r, double t) {
  return std::visit(
      [t](const auto& m) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FiniteDistribution>) {
          return cdf_left_limit(m, t);
        } else {
          return m.left_limit(t);
        }
      },
      r);
}

inline double reward_sample(const RewardModel& r, Rng& rng) {
  return std::visit(
      [&rng](const auto& m) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FiniteDistribution>) {
          return sample(m, rng);
        } else {
          return m.sampler(rng);
        }
      },
      r);
}

inline double reward_mean(const RewardModel& r) {
  if (const auto* f = std::get_if<FiniteDistribution>(&r)) return f->mean();
  const auto& c = std::get<ContinuousCdf>(r);
  if (!c.mean) throw UnsupportedModelError("reward model has no known mean");
  return *c.mean;
}

/// Interval outside which the CDF is numerically 0 / 1, if known.
inline std::optional<std::pair<double, double>> reward_support_hint(const RewardModel& r) {
  if (const auto* f = std::get_if<FiniteDistribution>(&r)) return std::pair{f->min(), f->max()};
  return std::get<ContinuousCdf>(r).support_hint;
}

/// Exact bounded support, or nullopt for unbounded families (e.g. Gaussian).
inline std::optional<std::pair<double, double>> reward_bounded_support(const RewardModel& r) {
  if (const auto* f = std::get_if<FiniteDistribution>(&r)) return std::pair{f->min(), f->max()};
  const auto& c = std::get<ContinuousCdf>(r);
  if (c.bounded && c.support_hint) return c.support_hint;
  return std::nullopt;
}

/// Mixture of reward models. Finite parts mix exactly; anything continuous
/// yields a lazily evaluated weighted-CDF model.
inline RewardModel mix_rewards(const std::vector<std::pair<double, RewardModel>>& parts) {
  if (parts.empty()) throw ValidationError("reward mixture needs at least one component");
  if (parts.size() == 1) return parts.front().second;
  const bool all_finite = std::all_of(parts.begin(), parts.end(),
                                      [](const auto& p) { return is_finite_support(p.second); });
  if (all_finite) {
    std::vector<std::pair<double, FiniteDistribution>> fin;
    fin.reserve(parts.size());
    for (const auto& [w, r] : parts) fin.emplace_back(w, std::get<FiniteDistribution>(r));
    return mix(fin);
  }

  struct Component {
    double weight;
    double cumulative;
    RewardModel model;
  };
  auto comps = std::make_shared<std::vector<Component>>();
  double run = 0.0;
  std::optional<double> mean = 0.0;
  bool bounded = true;
  bool has_atoms = false;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [w, r] : parts) {
    if (!(w > 0.0)) throw ValidationError("mixture weight must be positive");
    run += w;
    comps->push_back({w, run, r});
    auto hint = reward_support_hint(r);
    if (!hint) {
      bounded = false;
      lo = -std::numeric_limits<double>::infinity();
      hi = std::numeric_limits<double>::infinity();
    } else {
      lo = std::min(lo, hint->first);
      hi = std::max(hi, hint->second);
    }
    if (!reward_bounded_support(r)) bounded = false;
    if (const auto* c = std::get_if<ContinuousCdf>(&r)) {
      has_atoms = has_atoms || c->has_atoms;
      if (mean && c->mean) *mean += w * *c->mean; else mean.reset();
    } else {
      has_atoms = true;
      if (mean) *mean += w * std::get<FiniteDistribution>(r).mean();
    }
  }
  if (std::fabs(run - 1.0) > kProbabilityTolerance) throw ValidationError("mixture weights do not sum to 1");
  comps->back().cumulative = 1.0;

  ContinuousCdf c;
  c.cdf = [comps](double t) {
    long double s = 0.0L;
    for (const auto& k : *comps) s += k.weight * reward_cdf(k.model, t);
    return std::min(1.0, static_cast<double>(s));
  };
  c.left_limit = [comps](double t) {
    long double s = 0.0L;
    for (const auto& k : *comps) s += k.weight * reward_left_limit(k.model, t);
    return std::min(1.0, static_cast<double>(s));
  };
  c.sampler = [comps](Rng& rng) {
    const double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < comps->size() && (*comps)[k].cumulative <= u) ++k;
    return reward_sample((*comps)[k].model, rng);
  };
  if (std::isfinite(lo) && std::isfinite(hi)) c.support_hint = std::pair{lo, hi};
  c.bounded = bounded;
  c.has_atoms = has_atoms;
  c.mean = mean;
  return c;
}

}  // namespace qtd
