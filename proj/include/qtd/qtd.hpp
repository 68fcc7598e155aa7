#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qtd/bellman.hpp"
#include "qtd/errors.hpp"
#include "qtd/mdp.hpp"
#include "qtd/quantile_rep.hpp"
#include "qtd/random.hpp"

namespace qtd {

/// alpha_k = c / (1 + k)^rho, or a constant alpha.
///
/// Polynomial schedules with rho in (1/2, 1] satisfy sum alpha_k = inf and
/// alpha_k = o(1 / log k). Constant schedules are for experiments only.
class StepSchedule {
 public:
  enum class Kind { kPolynomial, kConstant };

  static StepSchedule polynomial(double c, double rho) {
    if (!(c > 0.0)) throw ValidationError("polynomial schedule needs c > 0");
    if (!(rho > 0.5 && rho <= 1.0)) throw ValidationError("polynomial schedule needs rho in (0.5, 1]");
    return StepSchedule(Kind::kPolynomial, c, rho);
  }

  static StepSchedule constant(double alpha) {
    if (!(alpha > 0.0)) throw ValidationError("constant schedule needs alpha > 0");
    return StepSchedule(Kind::kConstant, alpha, 0.0);
  }

  double operator()(std::uint64_t k) const {
    if (kind_ == Kind::kConstant) return scale_;
    return scale_ / std::pow(1.0 + static_cast<double>(k), rho_);
  }

  Kind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  double rho() const noexcept { return rho_; }
  bool convergent_in_theory() const noexcept { return kind_ == Kind::kPolynomial; }

 private:
  StepSchedule(Kind kind, double scale, double rho) : kind_(kind), scale_(scale), rho_(rho) {}

  Kind kind_;
  double scale_;
  double rho_;
};

struct Snapshot {
  std::uint64_t step;
  QuantileTable table;
};

struct RunRecord {
  std::vector<Snapshot> snapshots;  // strictly increasing steps; first is step 0
  QuantileTable final;
  std::uint64_t seed = 0;
};

namespace detail {

// Writes the QTD row update for transition t into `out`, reading only `table`.
inline void qtd_row_update(const QuantileTable& table, const Transition& t, double alpha, double gamma,
                           std::span<const double> tau, std::span<double> out) {
  const std::size_t m = table.m();
  const auto current = table.row(t.state);
  const auto next = table.row(t.next_state);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t below = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (t.reward + gamma * next[j] - current[i] < 0.0) ++below;
    }
    out[i] = current[i] + alpha * (tau[i] - static_cast<double>(below) * inv_m);
  }
}

class Recorder {
 public:
  Recorder(const QuantileTable& init, std::uint64_t steps, std::uint64_t every, std::uint64_t seed)
      : steps_(steps), every_(every) {
    record_.seed = seed;
    record_.snapshots.push_back({0, init});
  }

  void after_step(std::uint64_t k, const QuantileTable& table) {
    if ((every_ != 0 && k % every_ == 0) || k == steps_) record_.snapshots.push_back({k, table});
  }

  RunRecord finish(QuantileTable final) {
    record_.final = std::move(final);
    return std::move(record_);
  }

 private:
  std::uint64_t steps_;
  std::uint64_t every_;
  RunRecord record_;
};

inline void require_table(const Mrp& mrp, const QuantileTable& table) {
  if (table.num_states() != mrp.num_states()) throw ValidationError("table does not match the MRP state count");
}

}  // namespace detail

/// Applies the QTD update for one transition. Only row t.state changes, and
/// every indicator is evaluated against the pre-update table.
inline QuantileTable qtd_update(const QuantileTable& table, const Transition& t, double alpha, double gamma) {
  if (!(alpha >= 0.0)) throw DomainError("step size must be non-negative");
  if (t.state >= table.num_states() || t.next_state >= table.num_states()) {
    throw ValidationError("transition indices out of range");
  }
  QuantileTable out = table;
  const auto tau = tau_levels(table.m());
  detail::qtd_row_update(table, t, alpha, gamma, tau, out.row(t.state));
  return out;
}

/// Monte Carlo quantile regression: theta(x, i) += alpha (tau_i - 1{G < theta(x, i)}).
inline QuantileTable mc_quantile_update(const QuantileTable& table, std::size_t x, double return_sample,
                                        double alpha) {
  if (!(alpha >= 0.0)) throw DomainError("step size must be non-negative");
  if (x >= table.num_states()) throw ValidationError("state index out of range");
  QuantileTable out = table;
  const auto tau = tau_levels(table.m());
  for (std::size_t i = 0; i < table.m(); ++i) {
    out(x, i) += alpha * (tau[i] - (return_sample < table(x, i) ? 1.0 : 0.0));
  }
  return out;
}

/// Synchronous QTD: at each step every non-terminal state draws an independent
/// transition from its own stream (rng.split(x)) and all rows update from theta_k.
/// Terminal rows keep their initial value.
inline RunRecord run_synchronous(const Mrp& mrp, const StepSchedule& schedule, std::uint64_t steps,
                                 const QuantileTable& init, const Rng& rng, std::uint64_t snapshot_every,
                                 std::uint64_t seed = 0) {
  detail::require_table(mrp, init);
  const std::size_t n = mrp.num_states();
  const auto tau = tau_levels(init.m());
  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t x = 0; x < n; ++x) streams.push_back(rng.split(x));

  detail::Recorder rec(init, steps, snapshot_every, seed);
  QuantileTable current = init;
  QuantileTable next = init;
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double alpha = schedule(k);
    for (std::size_t x = 0; x < n; ++x) {
      if (mrp.terminal(x)) continue;
      const Transition t = sample_transition(mrp, x, streams[x]);
      detail::qtd_row_update(current, t, alpha, mrp.discount(), tau, next.row(x));
    }
    std::swap(current, next);
    rec.after_step(k + 1, current);
  }
  return rec.finish(std::move(current));
}

/// Where asynchronous QTD takes its next state from.
struct StateSource {
  enum class Kind { kTrajectory, kIid };
  Kind kind = Kind::kIid;
  std::vector<double> weights;  // iid only; uniform when empty

  static StateSource trajectory() { return {Kind::kTrajectory, {}}; }
  static StateSource iid(std::vector<double> w = {}) { return {Kind::kIid, std::move(w)}; }
};

/// Per-state visit counts of an asynchronous run.
struct AsyncRun {
  RunRecord record;
  std::vector<std::uint64_t> visits;
};

/// Asynchronous QTD: one state per step, each state stepping through the
/// schedule with its own update counter.
///
/// Transitions come from per-state streams rng.split(x); the state selector
/// uses its own stream. In trajectory mode X_{k+1} = X'_k, and entering a
/// terminal state restarts uniformly over non-terminal states.
inline AsyncRun run_asynchronous_detailed(const Mrp& mrp, const StepSchedule& schedule, std::uint64_t steps,
                                          const QuantileTable& init, const Rng& rng, const StateSource& source,
                                          std::uint64_t snapshot_every, std::uint64_t seed = 0) {
  detail::require_table(mrp, init);
  const std::size_t n = mrp.num_states();
  std::vector<std::size_t> live;
  for (std::size_t x = 0; x < n; ++x) {
    if (!mrp.terminal(x)) live.push_back(x);
  }
  std::vector<double> selector_cumulative;
  if (source.kind == StateSource::Kind::kIid) {
    std::vector<double> w = source.weights.empty() ? std::vector<double>(n, 1.0 / static_cast<double>(n)) : source.weights;
    if (w.size() != n) throw ValidationError("iid weights do not match the state count");
    long double total = 0.0L;
    for (double v : w) {
      if (!(v > 0.0)) throw ValidationError("iid weights must be strictly positive");
      total += v;
    }
    long double run = 0.0L;
    for (double v : w) {
      run += v;
      selector_cumulative.push_back(static_cast<double>(run / total));
    }
    selector_cumulative.back() = 1.0;
  } else if (!irreducible_with_restarts(mrp)) {
    throw ValidationError("trajectory mode needs every non-terminal state to be reachable from every other");
  }

  const auto tau = tau_levels(init.m());
  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t x = 0; x < n; ++x) streams.push_back(rng.split(x));
  Rng selector = rng.split(0xa5a5a5a5a5a5a5a5ULL);
  auto restart = [&]() { return live[static_cast<std::size_t>(selector.uniform() * static_cast<double>(live.size())) % live.size()]; };

  AsyncRun out{{}, std::vector<std::uint64_t>(n, 0)};
  detail::Recorder rec(init, steps, snapshot_every, seed);
  QuantileTable current = init;
  std::vector<double> row(init.m());
  std::size_t state = source.kind == StateSource::Kind::kTrajectory ? restart() : 0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    if (source.kind == StateSource::Kind::kIid) state = sample_index(selector_cumulative, selector.uniform());
    ++out.visits[state];
    Transition t{state, 0.0, state};
    if (!mrp.terminal(state)) {
      t = sample_transition(mrp, state, streams[state]);
      const double beta = schedule(out.visits[state] - 1);
      detail::qtd_row_update(current, t, beta, mrp.discount(), tau, row);
      std::copy(row.begin(), row.end(), current.row(state).begin());
    }
    if (source.kind == StateSource::Kind::kTrajectory) state = mrp.terminal(t.next_state) ? restart() : t.next_state;
    rec.after_step(k + 1, current);
  }
  out.record = rec.finish(std::move(current));
  return out;
}

inline RunRecord run_asynchronous(const Mrp& mrp, const StepSchedule& schedule, std::uint64_t steps,
                                  const QuantileTable& init, const Rng& rng, const StateSource& source,
                                  std::uint64_t snapshot_every, std::uint64_t seed = 0) {
  return run_asynchronous_detailed(mrp, schedule, steps, init, rng, source, snapshot_every, seed).record;
}

/// Monte Carlo quantile-regression baseline: each step, every non-terminal
/// state draws one truncated return and applies mc_quantile_update.
inline RunRecord run_monte_carlo(const Mrp& mrp, const StepSchedule& schedule, std::uint64_t steps,
                                 const QuantileTable& init, const Rng& rng, int horizon, std::uint64_t snapshot_every,
                                 std::uint64_t seed = 0) {
  detail::require_table(mrp, init);
  const std::size_t n = mrp.num_states();
  const auto tau = tau_levels(init.m());
  std::vector<Rng> streams;
  for (std::size_t x = 0; x < n; ++x) streams.push_back(rng.split(x));
  detail::Recorder rec(init, steps, snapshot_every, seed);
  QuantileTable current = init;
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double alpha = schedule(k);
    for (std::size_t x = 0; x < n; ++x) {
      if (mrp.terminal(x)) continue;
      const double g = sample_return(mrp, x, horizon, streams[x]);
      for (std::size_t i = 0; i < current.m(); ++i) current(x, i) += alpha * (tau[i] - (g < current(x, i) ? 1.0 : 0.0));
    }
    rec.after_step(k + 1, current);
  }
  return rec.finish(std::move(current));
}

/// Synchronous classical TD for the value baseline; terminal entries keep their initial value.
inline std::vector<double> td_run(const Mrp& mrp, const StepSchedule& schedule, std::uint64_t steps,
                                  std::vector<double> init, const Rng& rng) {
  const std::size_t n = mrp.num_states();
  if (init.size() != n) throw ValidationError("initial values do not match the state count");
  std::vector<Rng> streams;
  for (std::size_t x = 0; x < n; ++x) streams.push_back(rng.split(x));
  std::vector<double> v = std::move(init);
  std::vector<double> next = v;
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double alpha = schedule(k);
    for (std::size_t x = 0; x < n; ++x) {
      if (mrp.terminal(x)) continue;
      const Transition t = sample_transition(mrp, x, streams[x]);
      next[x] = v[x] + alpha * (td_target(v, t, mrp.discount()) - v[x]);
    }
    v = next;
  }
  return v;
}

}  // namespace qtd
