#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qtd/analysis.hpp"
#include "qtd/dynamics.hpp"
#include "qtd/errors.hpp"
#include "qtd/format.hpp"
#include "qtd/mdp.hpp"
#include "qtd/qdp.hpp"
#include "qtd/qtd.hpp"
#include "qtd/quantile_rep.hpp"
#include "qtd/reward.hpp"

namespace qtd::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNonConvergence = 3, kRuntimeError = 4 };

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct LambdaSpec {
  enum class Kind { kScalar, kMatrix, kCorners };
  Kind kind = Kind::kScalar;
  double scalar = 0.0;
  std::vector<std::vector<double>> matrix;
};

struct ExperimentConfig {
  Mdp mdp;
  Policy policy;
  std::string algo = "qdp";
  std::size_t m = 1;
  LambdaSpec lambda;
  StepSchedule schedule = StepSchedule::polynomial(0.5, 0.7);
  std::uint64_t steps = 0;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t snapshot_every = 0;
  double qdp_tol = kDefaultQdpTolerance;
  double bisection_tol = kDefaultBisectionTolerance;
  int max_iters = 100000;
  std::optional<json> init;
  StateSource state_source;
  std::size_t lambda_samples = 16;
  std::size_t mc_samples = 1000000;
  double mc_eps = 1e-6;
  int mc_horizon = 0;  // 0: derived from mc_eps
  double dt = kDefaultDt;
  double horizon = kDefaultHorizon;
  std::size_t record_every = 1;
  double backup_tolerance = 0.0;
  std::optional<std::pair<GridAxis, GridAxis>> grid;
};

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + "." + key + ": missing");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline std::uint64_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(path + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

inline std::vector<std::vector<double>> matrix(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of rows");
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(numbers(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

inline RewardModel reward(const json& j, const std::string& path) {
  const std::string kind = require(j, "kind", path).is_string() ? j.at("kind").get<std::string>() : "";
  try {
    if (kind == "dirac") return FiniteDistribution::dirac(number(require(j, "value", path), path + ".value"));
    if (kind == "finite") {
      const auto v = numbers(require(j, "values", path), path + ".values");
      const auto p = numbers(require(j, "probs", path), path + ".probs");
      if (v.size() != p.size()) throw ConfigError(path + ": values and probs differ in length");
      std::vector<FiniteDistribution::Atom> atoms;
      for (std::size_t k = 0; k < v.size(); ++k) atoms.push_back({v[k], p[k]});
      return FiniteDistribution(std::move(atoms));
    }
    if (kind == "gaussian") {
      return gaussian(number(require(j, "mean", path), path + ".mean"), number(require(j, "std", path), path + ".std"));
    }
    if (kind == "uniform") {
      return uniform(number(require(j, "low", path), path + ".low"), number(require(j, "high", path), path + ".high"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  throw ConfigError(path + ".kind: expected one of dirac, finite, gaussian, uniform");
}

inline Mdp mdp(const json& j) {
  const std::string p = "mdp";
  Mdp out;
  out.num_states = count(require(j, "states", p), p + ".states");
  out.num_actions = j.contains("actions") ? count(j.at("actions"), p + ".actions") : 1;
  if (out.num_states == 0 || out.num_actions == 0) throw ConfigError(p + ": need at least one state and action");
  out.discount = number(require(j, "gamma", p), p + ".gamma");
  out.terminal.assign(out.num_states, false);
  if (j.contains("terminal")) {
    const auto& t = j.at("terminal");
    if (!t.is_array()) throw ConfigError(p + ".terminal: expected an array of state indices");
    for (std::size_t k = 0; k < t.size(); ++k) {
      const auto x = count(t[k], p + ".terminal[" + std::to_string(k) + "]");
      if (x >= out.num_states) throw ConfigError(p + ".terminal[" + std::to_string(k) + "]: state out of range");
      out.terminal[x] = true;
    }
  }
  if (j.contains("deterministic_after_k")) {
    out.deterministic_after_k = static_cast<int>(count(j.at("deterministic_after_k"), p + ".deterministic_after_k"));
  }

  const auto& tr = require(j, "transitions", p);
  const auto& rw = require(j, "rewards", p);
  if (!tr.is_array() || tr.size() != out.num_states) {
    throw ConfigError(p + ".transitions: expected " + std::to_string(out.num_states) + " rows");
  }
  if (!rw.is_array() || rw.size() != out.num_states) {
    throw ConfigError(p + ".rewards: expected " + std::to_string(out.num_states) + " entries");
  }
  const std::vector<double> placeholder(out.num_states, 0.0);
  for (std::size_t x = 0; x < out.num_states; ++x) {
    const std::string tx = p + ".transitions[" + std::to_string(x) + "]";
    const std::string rx = p + ".rewards[" + std::to_string(x) + "]";
    out.transition.emplace_back();
    out.rewards.emplace_back();
    if (out.terminal[x]) {
      out.transition[x].assign(out.num_actions, placeholder);
      out.rewards[x].assign(out.num_actions, FiniteDistribution::dirac(0.0));
      continue;
    }
    // A single action may drop the action level.
    const bool flat = out.num_actions == 1 && tr[x].is_array() && !tr[x].empty() && tr[x][0].is_number();
    if (flat) {
      out.transition[x].push_back(numbers(tr[x], tx));
    } else {
      const auto rows = matrix(tr[x], tx);
      if (rows.size() != out.num_actions) throw ConfigError(tx + ": expected one row per action");
      out.transition[x] = rows;
    }
    if (rw[x].is_object()) {
      if (out.num_actions != 1) throw ConfigError(rx + ": expected one reward per action");
      out.rewards[x].push_back(reward(rw[x], rx));
    } else {
      if (!rw[x].is_array() || rw[x].size() != out.num_actions) throw ConfigError(rx + ": expected one reward per action");
      for (std::size_t a = 0; a < out.num_actions; ++a) out.rewards[x].push_back(reward(rw[x][a], rx + "[" + std::to_string(a) + "]"));
    }
    for (std::size_t a = 0; a < out.num_actions; ++a) {
      const auto& row = out.transition[x][a];
      const std::string ra = tx + (flat ? "" : "[" + std::to_string(a) + "]");
      if (row.size() != out.num_states) {
        throw ConfigError(ra + ": malformed transition row, expected " + std::to_string(out.num_states) + " entries");
      }
      long double s = 0.0L;
      for (double v : row) {
        if (!(v >= 0.0)) throw ConfigError(ra + ": malformed transition row, negative probability");
        s += v;
      }
      if (std::fabs(static_cast<double>(s - 1.0L)) > kProbabilityTolerance) {
        throw ConfigError(ra + ": malformed transition row, sums to " + format_double(static_cast<double>(s)));
      }
    }
  }
  if (!(out.discount >= 0.0 && out.discount < 1.0)) throw ConfigError(p + ".gamma: must lie in [0, 1)");
  return out;
}

}  // namespace detail

/// Builds a config from parsed JSON; every failure is a ConfigError naming the field.
inline ExperimentConfig parse_config(const json& root) {
  using namespace detail;
  if (!root.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  c.mdp = mdp(require(root, "mdp", "config"));
  const auto& mj = root.at("mdp");
  if (mj.contains("policy")) {
    c.policy.probs = matrix(mj.at("policy"), "mdp.policy");
  } else {
    c.policy = Policy::uniform(c.mdp.num_states, c.mdp.num_actions);
  }
  if (root.contains("algo")) {
    c.algo = root.at("algo").is_string() ? root.at("algo").get<std::string>() : "";
    if (c.algo != "qdp" && c.algo != "qtd-sync" && c.algo != "qtd-async" && c.algo != "td" && c.algo != "mc") {
      throw ConfigError("algo: expected one of qdp, qtd-sync, qtd-async, td, mc");
    }
  }
  if (root.contains("m")) c.m = count(root.at("m"), "m");
  if (c.m == 0) throw ConfigError("m: must be positive");
  if (root.contains("lambda")) {
    const auto& l = root.at("lambda");
    if (l.is_string() && l.get<std::string>() == "corners") {
      c.lambda.kind = LambdaSpec::Kind::kCorners;
    } else if (l.is_number()) {
      c.lambda.kind = LambdaSpec::Kind::kScalar;
      c.lambda.scalar = l.get<double>();
      if (!(c.lambda.scalar >= 0.0 && c.lambda.scalar <= 1.0)) throw ConfigError("lambda: must lie in [0, 1]");
    } else {
      c.lambda.kind = LambdaSpec::Kind::kMatrix;
      c.lambda.matrix = matrix(l, "lambda");
      if (c.lambda.matrix.size() != c.mdp.num_states) throw ConfigError("lambda: expected one row per state");
      for (std::size_t x = 0; x < c.lambda.matrix.size(); ++x) {
        if (c.lambda.matrix[x].size() != c.m) throw ConfigError("lambda[" + std::to_string(x) + "]: expected m entries");
        for (double v : c.lambda.matrix[x]) {
          if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("lambda[" + std::to_string(x) + "]: entries must lie in [0, 1]");
        }
      }
    }
  }
  if (root.contains("schedule")) {
    const auto& s = root.at("schedule");
    const std::string kind = require(s, "kind", "schedule").is_string() ? s.at("kind").get<std::string>() : "";
    try {
      if (kind == "polynomial") {
        c.schedule = StepSchedule::polynomial(number(require(s, "c", "schedule"), "schedule.c"),
                                              number(require(s, "rho", "schedule"), "schedule.rho"));
      } else if (kind == "constant") {
        c.schedule = StepSchedule::constant(number(require(s, "alpha", "schedule"), "schedule.alpha"));
      } else {
        throw ConfigError("schedule.kind: expected polynomial or constant");
      }
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
  }
  if (root.contains("steps")) c.steps = count(root.at("steps"), "steps");
  if (root.contains("seeds")) {
    const auto& s = root.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds: expected a non-empty array");
    c.seeds.clear();
    for (std::size_t k = 0; k < s.size(); ++k) c.seeds.push_back(count(s[k], "seeds[" + std::to_string(k) + "]"));
  }
  if (root.contains("snapshot_every")) c.snapshot_every = count(root.at("snapshot_every"), "snapshot_every");
  if (root.contains("tolerances")) {
    const auto& t = root.at("tolerances");
    if (t.contains("qdp")) c.qdp_tol = number(t.at("qdp"), "tolerances.qdp");
    if (t.contains("bisection")) c.bisection_tol = number(t.at("bisection"), "tolerances.bisection");
    if (t.contains("max_iters")) c.max_iters = static_cast<int>(count(t.at("max_iters"), "tolerances.max_iters"));
    if (!(c.qdp_tol > 0.0) || !(c.bisection_tol > 0.0)) throw ConfigError("tolerances: must be positive");
  }
  if (root.contains("init")) {
    const auto& i = root.at("init");
    if (i.is_number()) {
      c.init = i;
    } else {
      const auto rows = matrix(i, "init");
      if (rows.size() != c.mdp.num_states) throw ConfigError("init: expected one row per state");
      for (std::size_t x = 0; x < rows.size(); ++x) {
        if (rows[x].size() != c.m) throw ConfigError("init[" + std::to_string(x) + "]: expected m entries");
      }
      c.init = i;
    }
  }
  if (root.contains("state_source")) {
    const auto& s = root.at("state_source");
    const std::string kind = s.is_string() ? s.get<std::string>() : "";
    if (kind == "trajectory") {
      c.state_source = StateSource::trajectory();
    } else if (kind == "iid") {
      c.state_source = StateSource::iid();
    } else {
      throw ConfigError("state_source: expected trajectory or iid");
    }
  }
  if (root.contains("iid_weights")) {
    c.state_source.weights = numbers(root.at("iid_weights"), "iid_weights");
    if (c.state_source.weights.size() != c.mdp.num_states) throw ConfigError("iid_weights: expected one weight per state");
    for (double w : c.state_source.weights) {
      if (!(w > 0.0)) throw ConfigError("iid_weights: weights must be strictly positive");
    }
  }
  if (root.contains("lambda_samples")) c.lambda_samples = count(root.at("lambda_samples"), "lambda_samples");
  if (c.lambda_samples == 0) throw ConfigError("lambda_samples: must be at least 1");
  if (root.contains("mc_samples")) c.mc_samples = count(root.at("mc_samples"), "mc_samples");
  if (root.contains("mc_eps")) c.mc_eps = number(root.at("mc_eps"), "mc_eps");
  if (root.contains("mc_horizon")) c.mc_horizon = static_cast<int>(count(root.at("mc_horizon"), "mc_horizon"));
  if (root.contains("dt")) c.dt = number(root.at("dt"), "dt");
  if (root.contains("horizon")) c.horizon = number(root.at("horizon"), "horizon");
  if (!(c.dt > 0.0) || !(c.horizon >= 0.0)) throw ConfigError("dt/horizon: dt must be positive, horizon non-negative");
  if (root.contains("record_every")) c.record_every = count(root.at("record_every"), "record_every");
  if (root.contains("backup_tolerance")) c.backup_tolerance = number(root.at("backup_tolerance"), "backup_tolerance");
  if (root.contains("grid")) {
    const auto& g = root.at("grid");
    auto axis = [&](const char* key) {
      const auto v = numbers(require(g, key, "grid"), std::string("grid.") + key);
      if (v.size() != 3 || !(v[2] >= 1.0)) throw ConfigError(std::string("grid.") + key + ": expected [lo, hi, n]");
      return GridAxis{v[0], v[1], static_cast<std::size_t>(v[2])};
    };
    c.grid = std::pair{axis("x"), axis("y")};
  }
  if (c.policy.probs.size() != c.mdp.num_states) throw ConfigError("mdp.policy: expected one row per state");
  return c;
}

/// Reads and parses a config file. JSON syntax errors report line and column.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(root);
}

/// Parses `lo:hi:n,lo:hi:n`.
inline std::pair<GridAxis, GridAxis> parse_grid(const std::string& spec) {
  auto axis = [&](const std::string& part) {
    GridAxis a{};
    char c1 = 0;
    char c2 = 0;
    long long n = 0;
    std::istringstream is(part);
    if (!(is >> a.lo >> c1 >> a.hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1 || !is.eof()) {
      throw ConfigError("--grid: expected x0:x1:n,y0:y1:n, got '" + spec + "'");
    }
    a.n = static_cast<std::size_t>(n);
    return a;
  };
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw ConfigError("--grid: expected x0:x1:n,y0:y1:n, got '" + spec + "'");
  return {axis(spec.substr(0, comma)), axis(spec.substr(comma + 1))};
}

inline Mrp build_mrp(const ExperimentConfig& c) {
  try {
    return compile_mrp(c.mdp, c.policy);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("mdp: ") + e.what());
  }
}

inline InterpolationParams build_lambda(const ExperimentConfig& c) {
  switch (c.lambda.kind) {
    case LambdaSpec::Kind::kMatrix:
      return InterpolationParams::from_rows(c.lambda.matrix);
    case LambdaSpec::Kind::kScalar:
      return InterpolationParams(c.mdp.num_states, c.m, c.lambda.scalar);
    case LambdaSpec::Kind::kCorners:
      break;
  }
  return InterpolationParams(c.mdp.num_states, c.m, 0.0);
}

inline QuantileTable build_init(const ExperimentConfig& c) {
  if (!c.init) return QuantileTable(c.mdp.num_states, c.m);
  if (c.init->is_number()) return QuantileTable(c.mdp.num_states, c.m, c.init->get<double>());
  return QuantileTable::from_rows(detail::matrix(*c.init, "init"));
}

inline QdpOptions qdp_options(const ExperimentConfig& c) {
  QdpOptions o;
  o.bisection_tol = c.bisection_tol;
  return o;
}

struct Invocation {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> grid;
};

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw Error("cannot write " + (dir / name).string());
  return os;
}

inline void write_table_rows(std::ostream& os, const std::string& prefix, const QuantileTable& t,
                             const std::vector<double>* tau) {
  for (std::size_t x = 0; x < t.num_states(); ++x) {
    for (std::size_t i = 0; i < t.m(); ++i) {
      os << prefix << x + 1 << ',' << i + 1 << ',';
      if (tau != nullptr) os << format_double((*tau)[i]) << ',';
      os << format_double(t(x, i)) << '\n';
    }
  }
}

}  // namespace detail

/// RunRecord export: `# seed=N` then `step,state,i,theta`.
inline void write_run_csv(std::ostream& os, const RunRecord& r) {
  os << "# seed=" << r.seed << '\n' << "step,state,i,theta\n";
  for (const auto& s : r.snapshots) detail::write_table_rows(os, std::to_string(s.step) + ",", s.table, nullptr);
}

inline int cmd_qdp(const ExperimentConfig& c, const Invocation& inv) {
  const Mrp mrp = build_mrp(c);
  const auto tau = tau_levels(c.m);
  const QuantileTable init = build_init(c);
  if (c.lambda.kind == LambdaSpec::Kind::kCorners) {
    const std::size_t dim = c.mdp.num_states * c.m;
    if (dim > 12) throw ConfigError("lambda: \"corners\" needs states x m <= 12");
    auto os = detail::open_out(inv.out, "corners.csv");
    os << "corner,state,i,tau,theta\n";
    for (unsigned long long bits = 0; bits < (1ULL << dim); ++bits) {
      const auto res = qdp_solve(mrp, InterpolationParams::corner(c.mdp.num_states, c.m, bits), init, c.qdp_tol,
                                 c.max_iters, qdp_options(c));
      detail::write_table_rows(os, std::to_string(bits) + ",", res.table, &tau);
    }
  }
  const auto res = qdp_solve(mrp, build_lambda(c), init, c.qdp_tol, c.max_iters, qdp_options(c));
  auto fp = detail::open_out(inv.out, "fixed_point.csv");
  fp << "state,i,tau,theta\n";
  detail::write_table_rows(fp, "", res.table, &tau);
  auto it = detail::open_out(inv.out, "iters.txt");
  it << "iterations " << res.iterations << '\n';
  return kOk;
}

inline int cmd_qtd(const ExperimentConfig& c, const Invocation& inv) {
  const Mrp mrp = build_mrp(c);
  const std::string algo = c.algo == "qdp" ? std::string("qtd-sync") : c.algo;
  const QuantileTable init = build_init(c);
  std::vector<std::uint64_t> seeds = c.seeds;
  if (inv.seed_override) seeds = {*inv.seed_override};

  std::optional<FixedPointSet> targets;
  std::vector<double> values;
  if (algo == "td") {
    values = value_function(mrp);
  } else {
    FixedPointSetOptions o;
    o.lambda_samples = c.lambda_samples;
    o.qdp_tol = c.qdp_tol;
    o.qdp = qdp_options(c);
    targets.emplace(mrp, c.m, Rng(0), o);
  }
  int mc_horizon = c.mc_horizon;
  if (algo == "mc" && mc_horizon == 0) {
    const auto range = reward_range(mrp);
    if (!range) throw ConfigError("mc_horizon: required when rewards are unbounded");
    mc_horizon = truncation_horizon(mrp.discount(), std::max(std::fabs(range->first), std::fabs(range->second)), c.mc_eps);
  }

  auto summary = detail::open_out(inv.out, "summary.csv");
  summary << "seed,distance\n";
  for (const auto seed : seeds) {
    const Rng rng(seed);
    RunRecord rec;
    double distance = 0.0;
    if (algo == "td") {
      std::vector<double> v0(mrp.num_states());
      for (std::size_t x = 0; x < v0.size(); ++x) v0[x] = init(x, 0);
      const auto v = td_run(mrp, c.schedule, c.steps, v0, rng);
      QuantileTable t0(mrp.num_states(), 1);
      QuantileTable t1(mrp.num_states(), 1);
      for (std::size_t x = 0; x < v.size(); ++x) {
        t0(x, 0) = v0[x];
        t1(x, 0) = v[x];
        distance = std::max(distance, std::fabs(v[x] - values[x]));
      }
      rec.seed = seed;
      rec.snapshots.push_back({0, t0});
      if (c.steps > 0) rec.snapshots.push_back({c.steps, t1});
      rec.final = t1;
    } else {
      if (algo == "qtd-sync") {
        rec = run_synchronous(mrp, c.schedule, c.steps, init, rng, c.snapshot_every, seed);
      } else if (algo == "qtd-async") {
        rec = run_asynchronous(mrp, c.schedule, c.steps, init, rng, c.state_source, c.snapshot_every, seed);
      } else {
        rec = run_monte_carlo(mrp, c.schedule, c.steps, init, rng, mc_horizon, c.snapshot_every, seed);
      }
      distance = targets->distance(rec.final);
    }
    auto os = detail::open_out(inv.out, "run_" + std::to_string(seed) + ".csv");
    write_run_csv(os, rec);
    summary << seed << ',' << format_double(distance) << '\n';
  }
  return kOk;
}

inline int cmd_field(const ExperimentConfig& c, const Invocation& inv) {
  if (c.mdp.num_states * c.m != 2) throw ConfigError("field: needs exactly two coordinates (states x m = 2)");
  auto grid = inv.grid ? parse_grid(*inv.grid) : c.grid.value_or(std::pair{GridAxis{-5, 5, 21}, GridAxis{-5, 5, 21}});
  const Mrp mrp = build_mrp(c);
  const auto rows = expected_update_field(mrp, c.m, grid.first, grid.second);
  auto os = detail::open_out(inv.out, "field.csv");
  os << "coord1,coord2,g1,g2\n";
  for (const auto& r : rows) {
    os << format_double(r.c1) << ',' << format_double(r.c2) << ',' << format_double(r.g1) << ',' << format_double(r.g2)
       << '\n';
  }
  return kOk;
}

inline int cmd_bound(const ExperimentConfig& c, const Invocation& inv) {
  const Mrp mrp = build_mrp(c);
  const std::uint64_t seed = inv.seed_override.value_or(c.seeds.front());
  BoundOptions o;
  o.qdp_tol = c.qdp_tol;
  o.qdp = qdp_options(c);
  const auto rep = check_w1_bound(mrp, c.m, build_lambda(c), c.mc_samples, Rng(seed), o, c.mc_eps);
  auto os = detail::open_out(inv.out, "bound.txt");
  write_bound_report(os, rep);
  return kOk;
}

inline int cmd_backup(const ExperimentConfig& c, const Invocation& inv) {
  const Mrp mrp = build_mrp(c);
  const auto res = qdp_solve(mrp, build_lambda(c), build_init(c), c.qdp_tol, c.max_iters, qdp_options(c));
  const auto diagram = backup_diagram(mrp, res.table, c.backup_tolerance);
  auto os = detail::open_out(inv.out, "backup.csv");
  write_backup_csv(os, diagram);
  return kOk;
}

inline int cmd_trajectory(const ExperimentConfig& c, const Invocation& inv) {
  const Mrp mrp = build_mrp(c);
  const auto traj = euler_integrate(mrp, build_init(c), c.dt, c.horizon, c.record_every);
  auto os = detail::open_out(inv.out, "trajectory.csv");
  os << "t,state,i,theta\n";
  for (const auto& p : traj) detail::write_table_rows(os, format_double(p.t) + ",", p.table, nullptr);
  return kOk;
}

/// Runs one command and maps failures onto the exit-code contract.
inline int run(const Invocation& inv, std::ostream& err = std::cerr) {
  try {
    const ExperimentConfig c = load_config(inv.config);
    if (inv.command == "qdp") return cmd_qdp(c, inv);
    if (inv.command == "qtd") return cmd_qtd(c, inv);
    if (inv.command == "field") return cmd_field(c, inv);
    if (inv.command == "bound") return cmd_bound(c, inv);
    if (inv.command == "backup") return cmd_backup(c, inv);
    if (inv.command == "trajectory") return cmd_trajectory(c, inv);
    err << "error: unknown command '" << inv.command << "'\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NonConvergenceError& e) {
    err << "non-convergence: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace qtd::cli
