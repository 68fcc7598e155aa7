#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qtd/cli.hpp"
#include "qtd/distributions.hpp"
#include "qtd/mdp.hpp"
#include "qtd/random.hpp"

namespace qtd::testing {

inline std::string config_path(const std::string& name) { return std::string(QTD_CONFIG_DIR) + "/" + name + ".json"; }

inline cli::ExperimentConfig bundled_config(const std::string& name) { return cli::load_config(config_path(name)); }

inline Mrp bundled_mrp(const std::string& name) { return cli::build_mrp(bundled_config(name)); }

// Atoms (up to `max_atoms`, locations on a grid of `grid`, duplicates allowed)
// with probabilities that are multiples of 1/32, so cumulative sums are exact.
inline std::vector<FiniteDistribution::Atom> random_dyadic_atoms(Rng& rng, std::size_t max_atoms, double grid = 0.25,
                                                                 int span = 40) {
  const std::size_t n = 1 + static_cast<std::size_t>(rng() % max_atoms);
  std::vector<int> weights(n, 1);
  for (int extra = 32 - static_cast<int>(n); extra > 0; --extra) ++weights[rng() % n];
  std::vector<FiniteDistribution::Atom> atoms;
  for (std::size_t k = 0; k < n; ++k) {
    const double loc = grid * static_cast<double>(static_cast<int>(rng() % (2 * span + 1)) - span);
    atoms.push_back({loc, weights[k] / 32.0});
  }
  return atoms;
}

inline FiniteDistribution random_dyadic(Rng& rng, std::size_t max_atoms, double grid = 0.25, int span = 40) {
  return FiniteDistribution(random_dyadic_atoms(rng, max_atoms, grid, span));
}

// Strictly positive probability vector of length n.
inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double s = 0.0;
  for (double& v : w) {
    v = 0.05 + rng.uniform();
    s += v;
  }
  for (double& v : w) v /= s;
  double partial = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) partial += w[k];
  w[n - 1] = 1.0 - partial;
  return w;
}

// Random MRP with finitely supported rewards; transition rows may contain zeros.
inline Mrp random_finite_mrp(Rng& rng, std::size_t max_states, std::size_t max_atoms, double gamma) {
  const std::size_t n = 1 + static_cast<std::size_t>(rng() % max_states);
  std::vector<std::vector<double>> p;
  std::vector<RewardModel> r;
  for (std::size_t x = 0; x < n; ++x) {
    auto row = random_simplex(rng, n);
    if (n > 1 && rng() % 3 == 0) {
      const std::size_t drop = rng() % n;
      const double mass = row[drop];
      row[drop] = 0.0;
      row[(drop + 1) % n] += mass;
    }
    p.push_back(row);
    r.emplace_back(random_dyadic(rng, max_atoms, 0.5, 6));
  }
  return Mrp(std::move(p), std::move(r), gamma);
}

}  // namespace qtd::testing
