#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "sphsketch/errors.hpp"
#include "sphsketch/kernels.hpp"
#include "sphsketch/sphere_points.hpp"

namespace sphsketch {

/// Predictor x -> sum_j coefficients_j * kernel(x, centers_j).
struct FittedModel {
  KernelSpec kernel;
  PointSet centers;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  std::size_t training_size = 0;
};

struct SolveDiagnostics {
  std::size_t rank_used = 0;
  double eigen_threshold = 0.0;
  /// |A alpha - b| for the linear system actually solved.
  double residual_norm = 0.0;
  double wall_time = 0.0;
  /// Set when lambda = 0 was requested; the solve is then a pure pseudo-inverse.
  bool zero_lambda = false;
  /// fit_full only: Cholesky failed and the eigen pseudo-inverse was used.
  bool cholesky_fallback = false;
};

struct FitResult {
  FittedModel model;
  SolveDiagnostics diagnostics;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

// Symmetric eigendecomposition; reads the lower triangle. The implicit QR
// iteration occasionally stalls on nearly rank-one matrices; the reversed
// ordering and then a diagonal shift are tried before giving up.
inline SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() == Eigen::Success) {
    return SymmetricEigen{solver.eigenvalues(), solver.eigenvectors()};
  }
  const Eigen::Index m = a.rows();
  Eigen::PermutationMatrix<Eigen::Dynamic> reverse(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    reverse.indices()(i) = m - 1 - i;
  }
  Eigen::MatrixXd sym = a.selfadjointView<Eigen::Lower>();
  solver.compute(reverse * sym * reverse.transpose());
  if (solver.info() == Eigen::Success) {
    return SymmetricEigen{solver.eigenvalues(), reverse.transpose() * solver.eigenvectors()};
  }
  const double shift = sym.diagonal().mean();
  sym.diagonal().array() -= shift;
  solver.compute(sym);
  if (solver.info() == Eigen::Success) {
    return SymmetricEigen{solver.eigenvalues().array() + shift, solver.eigenvectors()};
  }
  throw numerical_error("symmetric eigendecomposition did not converge");
}

struct PseudoInverseSolution {
  Eigen::VectorXd x;
  std::size_t rank = 0;
  double threshold = 0.0;
};

// x = A^+ b, discarding eigenvalues below m * eps * lambda_max(A).
inline PseudoInverseSolution pseudo_inverse_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const auto eig = symmetric_eigen(a);
  const auto m = a.rows();
  PseudoInverseSolution out;
  const double top = m > 0 ? eig.values(m - 1) : 0.0;
  out.threshold = static_cast<double>(m) * std::numeric_limits<double>::epsilon() * std::max(top, 0.0);
  const Eigen::VectorXd projected = eig.vectors.transpose() * b;
  Eigen::VectorXd scaled = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (eig.values(i) > out.threshold) {
      scaled(i) = projected(i) / eig.values(i);
      ++out.rank;
    }
  }
  out.x = eig.vectors * scaled;
  return out;
}

inline void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw numerical_error(std::string(what) + " contains NaN or Inf");
  }
}

inline void require_lambda(double lambda, bool allow_zero) {
  if (!std::isfinite(lambda) || lambda < 0.0 || (!allow_zero && lambda == 0.0)) {
    throw std::invalid_argument(allow_zero ? "lambda must be finite and >= 0" : "lambda must be finite and > 0");
  }
}

}  // namespace detail

/// Lambda-independent part of the sketched normal equations
///   (K_nm^T K_nm + lambda N K_mm) alpha = K_nm^T y,
/// where K_nm is the training-by-centers kernel matrix and K_mm the Gram
/// matrix of the centers. Holds O(m^2) state; the N x m block is released
/// after assembly.
class SketchedSystem {
 public:
  SketchedSystem(const PointSet& inputs, const Eigen::VectorXd& labels, PointSet centers, KernelSpec kernel,
                 const MemoryBudget& budget = {})
      : kernel_(kernel), centers_(std::move(centers)), training_size_(inputs.size()) {
    if (static_cast<std::size_t>(labels.size()) != inputs.size()) {
      throw std::invalid_argument("fit: " + std::to_string(inputs.size()) + " inputs but " +
                                  std::to_string(labels.size()) + " labels");
    }
    detail::require_finite(labels, "labels");
    const auto start = detail::Clock::now();
    {
      const KernelMatrix cross = cross_matrix(kernel_, inputs, centers_, budget);
      normal_ = cross.entries.transpose() * cross.entries;
      rhs_ = cross.entries.transpose() * labels;
    }
    gram_ = gram(kernel_, centers_, budget).entries;
    setup_seconds_ = detail::seconds_since(start);
  }

  FitResult solve(double lambda) const {
    detail::require_lambda(lambda, true);
    const auto start = detail::Clock::now();
    const double scale = lambda * static_cast<double>(training_size_);
    Eigen::MatrixXd a = normal_ + scale * gram_;
    a = (0.5 * (a + a.transpose())).eval();
    auto sol = detail::pseudo_inverse_solve(a, rhs_);
    detail::require_finite(sol.x, "coefficients");

    FitResult out{FittedModel{kernel_, centers_, std::move(sol.x), lambda, training_size_}, SolveDiagnostics{}};
    out.diagnostics.rank_used = sol.rank;
    out.diagnostics.eigen_threshold = sol.threshold;
    out.diagnostics.residual_norm = (a * out.model.coefficients - rhs_).norm();
    out.diagnostics.zero_lambda = lambda == 0.0;
    out.diagnostics.wall_time = detail::seconds_since(start);
    return out;
  }

  const PointSet& centers() const { return centers_; }
  const KernelSpec& kernel() const { return kernel_; }
  std::size_t training_size() const { return training_size_; }
  double setup_seconds() const { return setup_seconds_; }

 private:
  KernelSpec kernel_;
  PointSet centers_;
  std::size_t training_size_;
  Eigen::MatrixXd normal_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  double setup_seconds_ = 0.0;
};

/// Sketched regularized least squares with expansion centers `centers`.
/// Storage O(Nm + m^2), work O(Nm^2 + m^3).
inline FitResult fit_sketched(const PointSet& inputs, const Eigen::VectorXd& labels, const PointSet& centers,
                              const KernelSpec& kernel, double lambda, const MemoryBudget& budget = {}) {
  detail::require_lambda(lambda, true);
  const SketchedSystem system(inputs, labels, centers, kernel, budget);
  auto out = system.solve(lambda);
  out.diagnostics.wall_time += system.setup_seconds();
  return out;
}

/// The sketched estimator along a whole lambda path from two eigendecompositions.
///
/// With K_mm = U D U^T (eigenvalues below m * eps * max(D) dropped) and
/// V = U D^{-1/2}, the normal matrix factors as
///   A(lambda) = U D^{1/2} (C + lambda N I) D^{1/2} U^T,  C = (K_nm V)^T (K_nm V).
/// Writing C = Q diag(mu) Q^T, the pseudo-inverse solution is
///   alpha(lambda) = W diag(1 / (mu + lambda N)) w,  W = V Q,  w = Q^T (K_nm V)^T y,
/// so each lambda costs O(m r) after an O(N m^2 + m^3) setup. Directions in the
/// numerical null space of K_mm are dropped; they carry functions of zero
/// native norm and do not change predictions. `labels` may hold several label
/// vectors as columns; they share the factorization and each column is
/// processed exactly as it would be on its own.
class SketchedPath {
 public:
  SketchedPath(const PointSet& inputs, const Eigen::MatrixXd& labels, PointSet centers, KernelSpec kernel,
               const MemoryBudget& budget = {})
      : kernel_(kernel), centers_(std::move(centers)), training_size_(inputs.size()) {
    if (static_cast<std::size_t>(labels.rows()) != inputs.size() || labels.cols() < 1) {
      throw std::invalid_argument("fit: " + std::to_string(inputs.size()) + " inputs but " +
                                  std::to_string(labels.rows()) + " labels");
    }
    if (!labels.allFinite()) {
      throw numerical_error("labels contains NaN or Inf");
    }
    const auto start = detail::Clock::now();
    const auto m = static_cast<Eigen::Index>(centers_.size());

    const auto gram_eig = detail::symmetric_eigen(gram(kernel_, centers_, budget).entries);
    const double top = std::max(gram_eig.values(m - 1), 0.0);
    const double cut = static_cast<double>(m) * std::numeric_limits<double>::epsilon() * top;
    Eigen::Index first = 0;
    while (first < m && !(gram_eig.values(first) > cut)) {
      ++first;
    }
    const Eigen::Index r = m - first;
    if (r == 0) {
      throw numerical_error("center Gram matrix is numerically zero");
    }
    const Eigen::MatrixXd v = gram_eig.vectors.rightCols(r) *
                              gram_eig.values.tail(r).cwiseSqrt().cwiseInverse().asDiagonal();
    Eigen::MatrixXd b;
    {
      const KernelMatrix cross = cross_matrix(kernel_, inputs, centers_, budget);
      b = cross.entries * v;
    }
    Eigen::MatrixXd c = b.transpose() * b;
    c = (0.5 * (c + c.transpose())).eval();
    const auto c_eig = detail::symmetric_eigen(c);
    mu_ = c_eig.values.cwiseMax(0.0);
    weights_.resize(r, labels.cols());
    for (Eigen::Index j = 0; j < labels.cols(); ++j) {
      const Eigen::VectorXd projected = b.transpose() * labels.col(j);
      weights_.col(j) = c_eig.vectors.transpose() * projected;
    }
    basis_ = v * c_eig.vectors;
    setup_seconds_ = detail::seconds_since(start);
  }

  /// Coefficients in the spectral basis for label column `column`;
  /// alpha = basis() * spectral_coefficients(lambda, column).
  Eigen::VectorXd spectral_coefficients(double lambda, Eigen::Index column = 0) const {
    if (column < 0 || column >= weights_.cols()) {
      throw std::out_of_range("label column out of range");
    }
    detail::require_lambda(lambda, true);
    const double shift = lambda * static_cast<double>(training_size_);
    const double cut = static_cast<double>(mu_.size()) * std::numeric_limits<double>::epsilon() *
                       (mu_.size() > 0 ? mu_.maxCoeff() : 0.0);
    Eigen::VectorXd out(mu_.size());
    for (Eigen::Index i = 0; i < mu_.size(); ++i) {
      const double denom = mu_(i) + shift;
      out(i) = (shift == 0.0 && !(mu_(i) > cut)) ? 0.0 : weights_(i, column) / denom;
    }
    return out;
  }

  FittedModel model(double lambda, Eigen::Index column = 0) const {
    Eigen::VectorXd alpha = basis_ * spectral_coefficients(lambda, column);
    detail::require_finite(alpha, "coefficients");
    return FittedModel{kernel_, centers_, std::move(alpha), lambda, training_size_};
  }

  /// m x r map from spectral to center coefficients.
  const Eigen::MatrixXd& basis() const { return basis_; }
  std::size_t rank() const { return static_cast<std::size_t>(mu_.size()); }
  Eigen::Index label_columns() const { return weights_.cols(); }
  const PointSet& centers() const { return centers_; }
  double setup_seconds() const { return setup_seconds_; }

 private:
  KernelSpec kernel_;
  PointSet centers_;
  std::size_t training_size_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd basis_;
  double setup_seconds_ = 0.0;
};

/// Full kernel ridge regression (K + lambda N I) alpha = y, centers = inputs.
/// Several label vectors may be passed as columns; each is solved separately
/// against one factorization per lambda.
class FullSystem {
 public:
  FullSystem(const PointSet& inputs, Eigen::MatrixXd labels, KernelSpec kernel, const MemoryBudget& budget = {})
      : kernel_(kernel), inputs_(inputs), labels_(std::move(labels)) {
    if (static_cast<std::size_t>(labels_.rows()) != inputs.size() || labels_.cols() < 1) {
      throw std::invalid_argument("fit: " + std::to_string(inputs.size()) + " inputs but " +
                                  std::to_string(labels_.rows()) + " labels");
    }
    if (!labels_.allFinite()) {
      throw numerical_error("labels contains NaN or Inf");
    }
    const auto start = detail::Clock::now();
    gram_ = gram(kernel_, inputs_, budget).entries;
    setup_seconds_ = detail::seconds_since(start);
  }

  FitResult solve(double lambda) const { return solve_columns(lambda).front(); }

  /// One fit per label column.
  std::vector<FitResult> solve_columns(double lambda) const {
    detail::require_lambda(lambda, false);
    const auto start = detail::Clock::now();
    const auto n = gram_.rows();
    Eigen::MatrixXd a = gram_;
    a.diagonal().array() += lambda * static_cast<double>(n);
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    const double factor_seconds = detail::seconds_since(start);

    std::vector<FitResult> out;
    for (Eigen::Index j = 0; j < labels_.cols(); ++j) {
      const auto solve_start = detail::Clock::now();
      const Eigen::VectorXd y = labels_.col(j);
      SolveDiagnostics diag;
      Eigen::VectorXd alpha;
      if (llt.info() == Eigen::Success) {
        alpha = llt.solve(y);
        diag.rank_used = static_cast<std::size_t>(n);
      }
      if (llt.info() != Eigen::Success || !alpha.allFinite()) {
        auto sol = detail::pseudo_inverse_solve(a, y);
        alpha = std::move(sol.x);
        diag.rank_used = sol.rank;
        diag.eigen_threshold = sol.threshold;
        diag.cholesky_fallback = true;
      }
      detail::require_finite(alpha, "coefficients");
      diag.residual_norm = (a * alpha - y).norm();
      diag.wall_time = factor_seconds + detail::seconds_since(solve_start);
      out.push_back(FitResult{FittedModel{kernel_, inputs_, std::move(alpha), lambda, inputs_.size()}, diag});
    }
    return out;
  }

  double setup_seconds() const { return setup_seconds_; }

 private:
  KernelSpec kernel_;
  PointSet inputs_;
  Eigen::MatrixXd labels_;
  Eigen::MatrixXd gram_;
  double setup_seconds_ = 0.0;
};

inline FitResult fit_full(const PointSet& inputs, const Eigen::VectorXd& labels, const KernelSpec& kernel,
                          double lambda, const MemoryBudget& budget = {}) {
  detail::require_lambda(lambda, false);
  const FullSystem system(inputs, labels, kernel, budget);
  auto out = system.solve(lambda);
  out.diagnostics.wall_time += system.setup_seconds();
  return out;
}

/// Model values at `points`, evaluated block-wise as cross_matrix(points, centers) * alpha.
inline Eigen::VectorXd predict(const FittedModel& model, const PointSet& points, const MemoryBudget& budget = {}) {
  constexpr std::size_t block = 2048;
  Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
  std::vector<UnitPoint> chunk;
  for (std::size_t start = 0; start < points.size(); start += block) {
    const std::size_t len = std::min(block, points.size() - start);
    chunk.assign(points.begin() + static_cast<std::ptrdiff_t>(start),
                 points.begin() + static_cast<std::ptrdiff_t>(start + len));
    const KernelMatrix k = cross_matrix(model.kernel, PointSet(chunk), model.centers, budget);
    out.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) = k.entries * model.coefficients;
  }
  return out;
}

/// (1/N) sum_i (f(x_i) - y_i)^2 + lambda alpha^T K_mm alpha.
inline double regularized_objective(const FittedModel& model, const Eigen::VectorXd& coefficients,
                                    const PointSet& inputs, const Eigen::VectorXd& labels) {
  FittedModel probe = model;
  probe.coefficients = coefficients;
  const Eigen::VectorXd residual = predict(probe, inputs) - labels;
  const Eigen::MatrixXd k = gram(model.kernel, model.centers).entries;
  return residual.squaredNorm() / static_cast<double>(inputs.size()) +
         model.lambda * coefficients.dot(k * coefficients);
}

}  // namespace sphsketch
