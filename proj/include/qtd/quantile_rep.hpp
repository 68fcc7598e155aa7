#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qtd/distributions.hpp"
#include "qtd/errors.hpp"

namespace qtd {

/// tau_i = (2i - 1) / (2m), i = 1..m (stored 0-based).
inline std::vector<double> tau_levels(std::size_t m) {
  if (m == 0) throw DomainError("number of quantiles must be positive");
  std::vector<double> tau(m);
  for (std::size_t i = 0; i < m; ++i) tau[i] = static_cast<double>(2 * i + 1) / static_cast<double>(2 * m);
  return tau;
}

/// Dense row-major [state][i] matrix of doubles.
class StateMatrix {
 public:
  StateMatrix() = default;
  StateMatrix(std::size_t num_states, std::size_t m, double fill = 0.0)
      : num_states_(num_states), m_(m), data_(num_states * m, fill) {
    if (m == 0) throw DomainError("number of quantiles must be positive");
  }

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t x, std::size_t i) { return data_[x * m_ + i]; }
  double operator()(std::size_t x, std::size_t i) const { return data_[x * m_ + i]; }

  std::span<double> row(std::size_t x) { return {data_.data() + x * m_, m_}; }
  std::span<const double> row(std::size_t x) const { return {data_.data() + x * m_, m_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  friend bool operator==(const StateMatrix&, const StateMatrix&) = default;

 protected:
  std::size_t num_states_ = 0;
  std::size_t m_ = 0;
  std::vector<double> data_;
};

/// Quantile estimates theta(x, i). Rows need not be sorted.
class QuantileTable : public StateMatrix {
 public:
  using StateMatrix::StateMatrix;

  static QuantileTable from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().empty()) throw ValidationError("quantile table needs at least one entry");
    QuantileTable t(rows.size(), rows.front().size());
    for (std::size_t x = 0; x < rows.size(); ++x) {
      if (rows[x].size() != t.m()) throw ValidationError("quantile table rows have different lengths");
      for (std::size_t i = 0; i < t.m(); ++i) {
        if (!std::isfinite(rows[x][i])) throw ValidationError("quantile table entry is not finite");
        t(x, i) = rows[x][i];
      }
    }
    return t;
  }

  friend bool operator==(const QuantileTable&, const QuantileTable&) = default;
};

/// Interpolation parameters lambda(x, i) in [0, 1].
class InterpolationParams : public StateMatrix {
 public:
  InterpolationParams() = default;
  InterpolationParams(std::size_t num_states, std::size_t m, double value = 0.0) : StateMatrix(num_states, m, value) {
    check();
  }

  static InterpolationParams from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().empty()) throw ValidationError("interpolation parameters need at least one entry");
    InterpolationParams p(rows.size(), rows.front().size());
    for (std::size_t x = 0; x < rows.size(); ++x) {
      if (rows[x].size() != p.m()) throw ValidationError("interpolation parameter rows have different lengths");
      for (std::size_t i = 0; i < p.m(); ++i) p(x, i) = rows[x][i];
    }
    p.check();
    return p;
  }

  /// Corner lambda with coordinate k (row-major) set from bit k of `bits`.
  static InterpolationParams corner(std::size_t num_states, std::size_t m, unsigned long long bits) {
    InterpolationParams p(num_states, m);
    for (std::size_t k = 0; k < p.size(); ++k) p.data_[k] = ((bits >> k) & 1ULL) ? 1.0 : 0.0;
    return p;
  }

  void check() const {
    for (double v : data_) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("interpolation parameter outside [0, 1]");
    }
  }
};

/// Equally weighted mixture of the atoms theta(x, .).
inline FiniteDistribution to_distribution(const QuantileTable& table, std::size_t x) {
  if (x >= table.num_states()) throw ValidationError("state index out of range");
  return FiniteDistribution::equal_weights(table.row(x));
}

/// Pi^lambda for one state: (1 - lambda_i) F^{-1}(tau_i) + lambda_i Fbar^{-1}(tau_i).
inline std::vector<double> project(const FiniteDistribution& nu, std::size_t m, std::span<const double> lambda_row) {
  if (lambda_row.size() != m) throw ValidationError("lambda row length does not match m");
  for (double l : lambda_row) {
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("interpolation parameter outside [0, 1]");
  }
  const auto tau = tau_levels(m);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double lo = inv_cdf(nu, tau[i]);
    const double lam = lambda_row[i];
    if (lam == 0.0) {
      out[i] = lo;
      continue;
    }
    const double hi = right_inv_cdf(nu, tau[i]);
    out[i] = lam == 1.0 ? hi : (1.0 - lam) * lo + lam * hi;
  }
  return out;
}

/// max_{x,i} |a - b| over raw parameters.
inline double sup_distance(const StateMatrix& a, const StateMatrix& b) {
  if (a.num_states() != b.num_states() || a.m() != b.m()) throw ValidationError("table shapes differ");
  double d = 0.0;
  const auto fa = a.flat();
  const auto fb = b.flat();
  for (std::size_t k = 0; k < fa.size(); ++k) d = std::max(d, std::fabs(fa[k] - fb[k]));
  return d;
}

/// w-bar-infinity between the distribution views of two tables (rows compared sorted).
inline double wbar_inf(const QuantileTable& a, const QuantileTable& b) {
  if (a.num_states() != b.num_states() || a.m() != b.m()) throw ValidationError("table shapes differ");
  double d = 0.0;
  std::vector<double> ra(a.m());
  std::vector<double> rb(b.m());
  for (std::size_t x = 0; x < a.num_states(); ++x) {
    std::copy(a.row(x).begin(), a.row(x).end(), ra.begin());
    std::copy(b.row(x).begin(), b.row(x).end(), rb.begin());
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    for (std::size_t i = 0; i < a.m(); ++i) d = std::max(d, std::fabs(ra[i] - rb[i]));
  }
  return d;
}

}  // namespace qtd
