#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Core>

#include "sphsketch/errors.hpp"
#include "sphsketch/sphere_points.hpp"

namespace sphsketch {

/// Compactly supported Wendland function (1 - u)_+^8 (32u^3 + 25u^2 + 8u + 1).
inline double wendland_psi(double u) {
  const double a = std::max(1.0 - u, 0.0);
  const double a2 = a * a;
  const double a4 = a2 * a2;
  return a4 * a4 * (((32.0 * u + 25.0) * u + 8.0) * u + 1.0);
}

struct GaussianKernel {
  double sigma = 1.0;
  friend bool operator==(const GaussianKernel&, const GaussianKernel&) = default;
};

struct WendlandKernel {
  friend bool operator==(const WendlandKernel&, const WendlandKernel&) = default;
};

/// Zonal positive-definite kernel on S^2: Gaussian exp(-|a-b|^2 / (2 sigma^2))
/// or Wendland psi(|a-b|).
class KernelSpec {
 public:
  using Variant = std::variant<GaussianKernel, WendlandKernel>;

  static KernelSpec gaussian(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("Gaussian kernel width must be positive and finite");
    }
    return KernelSpec(GaussianKernel{sigma});
  }
  static KernelSpec wendland() { return KernelSpec(WendlandKernel{}); }

  /// Parses "gaussian:<sigma>" or "wendland".
  static KernelSpec parse(const std::string& text) {
    if (text == "wendland") {
      return wendland();
    }
    const std::string prefix = "gaussian:";
    if (text.rfind(prefix, 0) == 0) {
      const auto sigma = detail::parse_real(std::string_view(text).substr(prefix.size()));
      if (!sigma) {
        throw std::invalid_argument("bad Gaussian width in kernel spec '" + text + "'");
      }
      return gaussian(*sigma);
    }
    throw std::invalid_argument("unknown kernel spec '" + text + "' (expected gaussian:<sigma> or wendland)");
  }

  bool is_gaussian() const { return std::holds_alternative<GaussianKernel>(variant_); }
  bool is_wendland() const { return std::holds_alternative<WendlandKernel>(variant_); }
  double sigma() const { return std::get<GaussianKernel>(variant_).sigma; }
  const Variant& variant() const { return variant_; }

  std::string to_string() const {
    if (is_wendland()) {
      return "wendland";
    }
    char buf[48];
    std::snprintf(buf, sizeof(buf), "gaussian:%.17g", sigma());
    return buf;
  }

  /// Kernel value as a function of the squared chord length |a - b|^2.
  double of_squared_distance(double d2) const {
    if (const auto* g = std::get_if<GaussianKernel>(&variant_)) {
      return std::exp(-d2 / (2.0 * g->sigma * g->sigma));
    }
    return wendland_psi(std::sqrt(d2));
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;

 private:
  explicit KernelSpec(Variant v) : variant_(v) {}
  Variant variant_;
};

/// Squared chord length from the clamped dot product, 2 - 2 a.b.
inline double squared_chord(const UnitPoint& a, const UnitPoint& b) { return 2.0 - 2.0 * clamped_dot(a, b); }

inline double eval_kernel(const KernelSpec& spec, const UnitPoint& a, const UnitPoint& b) {
  return spec.of_squared_distance(squared_chord(a, b));
}

/// Upper bound on bytes a single dense kernel matrix may occupy.
struct MemoryBudget {
  std::uint64_t bytes = std::uint64_t{2} << 30;

  void check(std::size_t rows, std::size_t cols) const {
    const long double need = static_cast<long double>(rows) * cols * sizeof(double);
    if (need > static_cast<long double>(bytes)) {
      throw size_error("kernel matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " exceeds the memory budget of " + std::to_string(bytes) + " bytes");
    }
  }
};

struct KernelMatrix {
  Eigen::MatrixXd entries;
  bool symmetric = false;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries(i, j); }
};

/// Dense |rows| x |cols| matrix of eval_kernel values.
inline KernelMatrix cross_matrix(const KernelSpec& spec, const PointSet& rows, const PointSet& cols,
                                 const MemoryBudget& budget = {}) {
  budget.check(rows.size(), cols.size());
  KernelMatrix out;
  out.entries.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eval_kernel(spec, rows[i], cols[j]);
    }
  }
  return out;
}

/// Symmetric Gram matrix: the upper triangle is evaluated and mirrored.
inline KernelMatrix gram(const KernelSpec& spec, const PointSet& set, const MemoryBudget& budget = {}) {
  budget.check(set.size(), set.size());
  const auto n = static_cast<Eigen::Index>(set.size());
  KernelMatrix out;
  out.symmetric = true;
  out.entries.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = eval_kernel(spec, set[static_cast<std::size_t>(i)], set[static_cast<std::size_t>(j)]);
      out.entries(i, j) = v;
      out.entries(j, i) = v;
    }
  }
  return out;
}

}  // namespace sphsketch
