#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "qtd/distributions.hpp"
#include "qtd/errors.hpp"
#include "qtd/mdp.hpp"
#include "qtd/quantile_rep.hpp"

namespace qtd {

// Terminal states have Bellman target delta_0 whatever the table holds; the
// learning loops keep their rows pinned at 0.

/// Exact distribution of R + gamma * theta(X', J), J uniform on {1..m}, at state x.
inline FiniteDistribution bellman_target_finite(const Mrp& mrp, const QuantileTable& table, std::size_t x) {
  if (table.num_states() != mrp.num_states()) throw ValidationError("table does not match the MRP state count");
  if (mrp.terminal(x)) return FiniteDistribution::dirac(0.0);
  const auto outcomes = enumerate_transitions(mrp, x);
  const std::size_t m = table.m();
  const double gamma = mrp.discount();
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<FiniteDistribution::Atom> atoms;
  atoms.reserve(outcomes.size() * m);
  for (const auto& o : outcomes) {
    for (std::size_t j = 0; j < m; ++j) atoms.push_back({o.reward + gamma * table(o.next_state, j), o.probability * inv_m});
  }
  return FiniteDistribution(std::move(atoms));
}

/// CDF of the Bellman target at one state, evaluated lazily.
struct TargetCdf {
  std::size_t state = 0;
  std::function<double(double)> eval;
  std::function<double(double)> eval_left;
  // Interval outside which eval is numerically 0 / 1, when the reward model provides one.
  std::optional<std::pair<double, double>> support_hint;
};

/// eval(t) = sum_{x'} P(x'|x) (1/m) sum_j F_R(t - gamma theta(x', j)); eval_left uses left limits.
inline TargetCdf bellman_target_cdf(const Mrp& mrp, const QuantileTable& table, std::size_t x) {
  if (table.num_states() != mrp.num_states()) throw ValidationError("table does not match the MRP state count");
  if (x >= mrp.num_states()) throw ValidationError("state index out of range");

  struct Shifted {
    double weight;
    double shift;
  };
  struct Snapshot {
    RewardModel reward;
    std::vector<Shifted> terms;
  };

  TargetCdf out;
  out.state = x;
  if (mrp.terminal(x)) {
    out.eval = [](double t) { return t >= 0.0 ? 1.0 : 0.0; };
    out.eval_left = [](double t) { return t > 0.0 ? 1.0 : 0.0; };
    out.support_hint = std::pair{0.0, 0.0};
    return out;
  }

  auto snap = std::make_shared<Snapshot>(Snapshot{mrp.reward(x), {}});
  const std::size_t m = table.m();
  const double gamma = mrp.discount();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t y = 0; y < mrp.num_states(); ++y) {
    const double p = mrp.transition(x, y);
    if (p == 0.0) continue;
    for (std::size_t j = 0; j < m; ++j) {
      const double s = gamma * table(y, j);
      snap->terms.push_back({p / static_cast<double>(m), s});
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  // Finite rewards compare r + shift against t, matching the atom locations of
  // bellman_target_finite bit for bit.
  out.eval = [snap](double t) {
    long double acc = 0.0L;
    if (const auto* nu = std::get_if<FiniteDistribution>(&snap->reward)) {
      for (const auto& term : snap->terms) {
        for (const auto& a : nu->atoms()) {
          if (a.location + term.shift <= t) acc += term.weight * a.probability;
        }
      }
    } else {
      for (const auto& term : snap->terms) acc += term.weight * reward_cdf(snap->reward, t - term.shift);
    }
    return std::clamp(static_cast<double>(acc), 0.0, 1.0);
  };
  out.eval_left = [snap](double t) {
    long double acc = 0.0L;
    if (const auto* nu = std::get_if<FiniteDistribution>(&snap->reward)) {
      for (const auto& term : snap->terms) {
        for (const auto& a : nu->atoms()) {
          if (a.location + term.shift < t) acc += term.weight * a.probability;
        }
      }
    } else {
      for (const auto& term : snap->terms) acc += term.weight * reward_left_limit(snap->reward, t - term.shift);
    }
    return std::clamp(static_cast<double>(acc), 0.0, 1.0);
  };
  if (auto hint = reward_support_hint(mrp.reward(x))) out.support_hint = std::pair{hint->first + lo, hint->second + hi};
  return out;
}

/// Classical TD target r + gamma V(x').
inline double td_target(std::span<const double> v, const Transition& t, double gamma) {
  return t.reward + gamma * v[t.next_state];
}

}  // namespace qtd
