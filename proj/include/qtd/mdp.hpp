#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qtd/distributions.hpp"
#include "qtd/errors.hpp"
#include "qtd/random.hpp"
#include "qtd/reward.hpp"

namespace qtd {

namespace detail {

inline void require_stochastic(const std::vector<double>& row, std::size_t n, const std::string& what) {
  if (row.size() != n) {
    throw ValidationError(what + " has " + std::to_string(row.size()) + " entries, expected " + std::to_string(n));
  }
  long double s = 0.0L;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError(what + " has a negative or non-finite entry");
    s += p;
  }
  if (std::fabs(static_cast<double>(s - 1.0L)) > kProbabilityTolerance) {
    throw ValidationError(what + " sums to " + std::to_string(static_cast<double>(s)) + ", expected 1");
  }
}

inline std::vector<double> cumulative_of(const std::vector<double>& row) {
  std::vector<double> c(row.size());
  long double run = 0.0L;
  for (std::size_t k = 0; k < row.size(); ++k) {
    run += row[k];
    c[k] = static_cast<double>(run);
  }
  // The last state with positive mass absorbs rounding.
  for (std::size_t k = row.size(); k-- > 0;) {
    if (row[k] > 0.0) {
      for (std::size_t j = k; j < row.size(); ++j) c[j] = 1.0;
      break;
    }
  }
  return c;
}

}  // namespace detail

/// Finite MDP. Terminal states yield return 0 after entry; their transition
/// and reward entries are ignored.
struct Mdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;  // [state][action][next]
  std::vector<std::vector<RewardModel>> rewards;              // [state][action]
  double discount = 0.0;
  std::vector<bool> terminal;
  std::optional<int> deterministic_after_k;
};

struct Policy {
  std::vector<std::vector<double>> probs;  // [state][action]

  static Policy uniform(std::size_t num_states, std::size_t num_actions) {
    return {std::vector<std::vector<double>>(num_states,
                                             std::vector<double>(num_actions, 1.0 / static_cast<double>(num_actions)))};
  }
};

/// One sampled transition (x, r, x').
struct Transition {
  std::size_t state;
  double reward;
  std::size_t next_state;
};

/// A point of the joint (x', r) distribution from a state.
struct TransitionOutcome {
  std::size_t next_state;
  double reward;
  double probability;
};

inline void validate(const Mdp& mdp) {
  if (mdp.num_states == 0 || mdp.num_actions == 0) throw ValidationError("MDP needs at least one state and action");
  if (!(mdp.discount >= 0.0 && mdp.discount < 1.0)) {
    throw ValidationError("discount must lie in [0, 1), got " + std::to_string(mdp.discount));
  }
  if (mdp.terminal.size() != mdp.num_states) throw ValidationError("terminal flags do not match the state count");
  if (mdp.transition.size() != mdp.num_states || mdp.rewards.size() != mdp.num_states) {
    throw ValidationError("transition/reward tables do not match the state count");
  }
  for (std::size_t x = 0; x < mdp.num_states; ++x) {
    if (mdp.terminal[x]) continue;
    if (mdp.transition[x].size() != mdp.num_actions || mdp.rewards[x].size() != mdp.num_actions) {
      throw ValidationError("state " + std::to_string(x) + " does not list every action");
    }
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      detail::require_stochastic(mdp.transition[x][a], mdp.num_states,
                                 "transition row [state " + std::to_string(x) + "][action " + std::to_string(a) + "]");
      if (const auto* c = std::get_if<ContinuousCdf>(&mdp.rewards[x][a])) validate(*c);
    }
  }
}

/// Policy-induced Markov reward process.
class Mrp {
 public:
  Mrp(std::vector<std::vector<double>> transition, std::vector<RewardModel> rewards, double discount,
      std::vector<bool> terminal = {}, std::optional<int> deterministic_after_k = std::nullopt)
      : transition_(std::move(transition)),
        rewards_(std::move(rewards)),
        discount_(discount),
        terminal_(std::move(terminal)),
        deterministic_after_k_(deterministic_after_k) {
    const std::size_t n = transition_.size();
    if (n == 0) throw ValidationError("MRP needs at least one state");
    if (terminal_.empty()) terminal_.assign(n, false);
    if (rewards_.size() != n || terminal_.size() != n) throw ValidationError("MRP tables do not match the state count");
    if (!(discount_ >= 0.0 && discount_ < 1.0)) {
      throw ValidationError("discount must lie in [0, 1), got " + std::to_string(discount_));
    }
    for (std::size_t x = 0; x < n; ++x) {
      if (terminal_[x]) {
        transition_[x].assign(n, 0.0);
        transition_[x][x] = 1.0;
        rewards_[x] = FiniteDistribution::dirac(0.0);
      }
      detail::require_stochastic(transition_[x], n, "transition row [state " + std::to_string(x) + "]");
      if (const auto* c = std::get_if<ContinuousCdf>(&rewards_[x])) validate(*c);
    }
    cumulative_.reserve(n);
    for (const auto& row : transition_) cumulative_.push_back(detail::cumulative_of(row));
  }

  std::size_t num_states() const noexcept { return transition_.size(); }
  double discount() const noexcept { return discount_; }
  const std::vector<double>& row(std::size_t x) const { return transition_.at(x); }
  double transition(std::size_t x, std::size_t y) const { return transition_.at(x).at(y); }
  const RewardModel& reward(std::size_t x) const { return rewards_.at(x); }
  bool terminal(std::size_t x) const { return terminal_.at(x); }
  const std::vector<bool>& terminal_flags() const noexcept { return terminal_; }
  std::optional<int> deterministic_after_k() const noexcept { return deterministic_after_k_; }
  const std::vector<double>& cumulative_row(std::size_t x) const { return cumulative_.at(x); }

  bool all_finite_rewards() const {
    for (const auto& r : rewards_) {
      if (!is_finite_support(r)) return false;
    }
    return true;
  }

 private:
  std::vector<std::vector<double>> transition_;
  std::vector<RewardModel> rewards_;
  double discount_;
  std::vector<bool> terminal_;
  std::optional<int> deterministic_after_k_;
  std::vector<std::vector<double>> cumulative_;
};

/// P(x'|x) = sum_a pi(a|x) P(x'|x,a); rewards are the pi(.|x)-mixtures of the per-action models.
inline Mrp compile_mrp(const Mdp& mdp, const Policy& policy) {
  validate(mdp);
  if (policy.probs.size() != mdp.num_states) throw ValidationError("policy does not match the state count");
  const std::size_t n = mdp.num_states;
  std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
  std::vector<RewardModel> rewards;
  rewards.reserve(n);
  for (std::size_t x = 0; x < n; ++x) {
    if (mdp.terminal[x]) {
      p[x][x] = 1.0;
      rewards.emplace_back(FiniteDistribution::dirac(0.0));
      continue;
    }
    detail::require_stochastic(policy.probs[x], mdp.num_actions, "policy row [state " + std::to_string(x) + "]");
    std::vector<std::pair<double, RewardModel>> parts;
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const double w = policy.probs[x][a];
      if (w == 0.0) continue;
      for (std::size_t y = 0; y < n; ++y) p[x][y] += w * mdp.transition[x][a][y];
      parts.emplace_back(w, mdp.rewards[x][a]);
    }
    rewards.push_back(mix_rewards(parts));
  }
  return Mrp(std::move(p), std::move(rewards), mdp.discount, mdp.terminal, mdp.deterministic_after_k);
}

/// Draws (R, X') ~ P(.|x): reward first, then the successor, from the same stream.
inline Transition sample_transition(const Mrp& mrp, std::size_t x, Rng& rng) {
  if (x >= mrp.num_states()) throw ValidationError("state index out of range");
  if (mrp.terminal(x)) return {x, 0.0, x};
  const double r = reward_sample(mrp.reward(x), rng);
  const std::size_t y = sample_index(mrp.cumulative_row(x), rng.uniform());
  return {x, r, y};
}

/// Full support of the joint (x', r) distribution from x, ordered by (x', r).
inline std::vector<TransitionOutcome> enumerate_transitions(const Mrp& mrp, std::size_t x) {
  if (x >= mrp.num_states()) throw ValidationError("state index out of range");
  if (mrp.terminal(x)) return {{x, 0.0, 1.0}};
  const auto* rew = std::get_if<FiniteDistribution>(&mrp.reward(x));
  if (rew == nullptr) {
    throw UnsupportedModelError("state " + std::to_string(x) + " has a continuous reward model; "
                                "transition enumeration needs finite support");
  }
  std::vector<TransitionOutcome> out;
  for (std::size_t y = 0; y < mrp.num_states(); ++y) {
    const double p = mrp.transition(x, y);
    if (p == 0.0) continue;
    for (const auto& a : rew->atoms()) out.push_back({y, a.location, p * a.probability});
  }
  return out;
}

/// Solves (I - gamma P) V = r_bar.
inline std::vector<double> value_function(const Mrp& mrp) {
  const auto n = static_cast<Eigen::Index>(mrp.num_states());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    const auto xs = static_cast<std::size_t>(x);
    b(x) = mrp.terminal(xs) ? 0.0 : reward_mean(mrp.reward(xs));
    if (mrp.terminal(xs)) continue;
    for (Eigen::Index y = 0; y < n; ++y) a(x, y) -= mrp.discount() * mrp.transition(xs, static_cast<std::size_t>(y));
  }
  const Eigen::VectorXd v = a.partialPivLu().solve(b);
  return {v.data(), v.data() + n};
}

/// Whether the chain on non-terminal states, restarted uniformly over them
/// whenever a terminal state is entered, forms a single recurrent class.
inline bool irreducible_with_restarts(const Mrp& mrp) {
  const std::size_t n = mrp.num_states();
  std::vector<std::size_t> live;
  for (std::size_t x = 0; x < n; ++x) {
    if (!mrp.terminal(x)) live.push_back(x);
  }
  if (live.empty()) return false;
  std::vector<std::vector<bool>> edge(n, std::vector<bool>(n, false));
  for (std::size_t x : live) {
    for (std::size_t y = 0; y < n; ++y) {
      if (mrp.transition(x, y) == 0.0) continue;
      if (mrp.terminal(y)) {
        for (std::size_t z : live) edge[x][z] = true;
      } else {
        edge[x][y] = true;
      }
    }
  }
  auto reaches_all = [&](bool reverse) {
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(live.front());
    seen[live.front()] = true;
    while (!q.empty()) {
      const std::size_t x = q.front();
      q.pop();
      for (std::size_t y : live) {
        if (!seen[y] && (reverse ? edge[y][x] : edge[x][y])) {
          seen[y] = true;
          q.push(y);
        }
      }
    }
    for (std::size_t x : live) {
      if (!seen[x]) return false;
    }
    return true;
  };
  return reaches_all(false) && reaches_all(true);
}

/// One draw of sum_{t < horizon} gamma^t R_t from x; stops early on entering a terminal state.
inline double sample_return(const Mrp& mrp, std::size_t x, int horizon, Rng& rng) {
  long double g = 0.0L;
  long double discount = 1.0L;
  std::size_t s = x;
  for (int t = 0; t < horizon && !mrp.terminal(s); ++t) {
    const Transition tr = sample_transition(mrp, s, rng);
    g += discount * tr.reward;
    discount *= mrp.discount();
    s = tr.next_state;
  }
  return static_cast<double>(g);
}

}  // namespace qtd
