#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sphsketch/sphere_points.hpp"

namespace sphsketch {

inline constexpr double kDefaultDesignTolerance = 1e-8;

/// Legendre polynomial P_k(u), normalized so that P_k(1) = 1.
///
/// Three-term recurrence (k+1) P_{k+1} = (2k+1) u P_k - k P_{k-1}. Arguments
/// within 1e-12 outside [-1, 1] are clamped; anything further out throws.
inline double legendre_p(int k, double u) {
  if (k < 0) {
    throw std::invalid_argument("legendre_p: negative degree");
  }
  if (!(std::abs(u) <= 1.0 + 1e-12)) {
    throw std::domain_error("legendre_p: argument outside [-1, 1]");
  }
  u = std::clamp(u, -1.0, 1.0);
  if (k == 0) {
    return 1.0;
  }
  double prev = 1.0;
  double cur = u;
  for (int j = 1; j < k; ++j) {
    const double next = ((2.0 * j + 1.0) * u * cur - j * prev) / (j + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Writes P_0(u) .. P_{k_max}(u) into out (size k_max + 1).
inline void legendre_sweep(int k_max, double u, double* out) {
  out[0] = 1.0;
  if (k_max >= 1) {
    out[1] = u;
  }
  for (int j = 1; j < k_max; ++j) {
    out[j + 1] = ((2.0 * j + 1.0) * u * out[j] - j * out[j - 1]) / (j + 1.0);
  }
}

struct DesignReport {
  int max_verified_degree = 0;
  /// (degree k, r_k) for k = 1 .. t_max.
  std::vector<std::pair<int, double>> residuals;
  double tolerance = kDefaultDesignTolerance;
};

/// Design residuals r_k = N^-2 sum_i sum_j P_k(x_i . x_j) for k = 1 .. t_max.
///
/// r_k is a positive multiple of sum_l |sum_i Y_{k,l}(x_i)|^2, so it vanishes
/// exactly when the equal-weight rule integrates every degree-k harmonic.
/// Rows are summed in index order and accumulated in row order, so the result
/// does not depend on how the rows are scheduled.
inline std::vector<double> design_residuals(const PointSet& set, int t_max) {
  if (t_max < 1) {
    throw std::invalid_argument("design residuals need t_max >= 1");
  }
  const std::size_t n = set.size();
  const auto degrees = static_cast<std::size_t>(t_max) + 1;
  std::vector<double> total(degrees, 0.0);
  std::vector<double> row(degrees);
  std::vector<double> p(degrees);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t j = i + 1; j < n; ++j) {
      legendre_sweep(t_max, clamped_dot(set[i], set[j]), p.data());
      for (std::size_t k = 1; k < degrees; ++k) {
        row[k] += p[k];
      }
    }
    for (std::size_t k = 1; k < degrees; ++k) {
      total[k] += row[k];
    }
  }
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  std::vector<double> out(static_cast<std::size_t>(t_max));
  for (std::size_t k = 1; k < degrees; ++k) {
    // diagonal terms contribute P_k(1) = 1 each
    double r = (2.0 * total[k] + static_cast<double>(n)) / nn;
    if (r < 0.0 && r >= -1e-12) {
      r = 0.0;
    }
    out[k - 1] = r;
  }
  return out;
}

inline double design_residual(const PointSet& set, int k) {
  if (k < 1) {
    throw std::invalid_argument("design_residual needs k >= 1");
  }
  return design_residuals(set, k).back();
}

inline DesignReport verify_design(const PointSet& set, int t_max, double tolerance = kDefaultDesignTolerance) {
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("verify_design needs a positive tolerance");
  }
  const auto r = design_residuals(set, t_max);
  DesignReport report;
  report.tolerance = tolerance;
  bool verified = true;
  for (int k = 1; k <= t_max; ++k) {
    const double rk = r[static_cast<std::size_t>(k - 1)];
    report.residuals.emplace_back(k, rk);
    verified = verified && rk <= tolerance;
    if (verified) {
      report.max_verified_degree = k;
    }
  }
  return report;
}

/// Returns a copy of `set` tagged as a spherical `degree`-design.
/// Throws data_error if some r_k, 1 <= k <= degree, exceeds the tolerance.
inline PointSet certify_design(const PointSet& set, int degree, double tolerance) {
  if (degree < 1) {
    throw std::invalid_argument("design degree must be >= 1");
  }
  const auto report = verify_design(set, degree, tolerance);
  if (report.max_verified_degree < degree) {
    const auto& [k, rk] = report.residuals[static_cast<std::size_t>(report.max_verified_degree)];
    char value[32];
    std::snprintf(value, sizeof(value), "%.3e", rk);
    throw data_error(set.label() + " is not a " + std::to_string(degree) + "-design: r_" + std::to_string(k) +
                     " = " + value);
  }
  PointSet out = set;
  out.design_degree_ = degree;
  return out;
}

}  // namespace sphsketch
