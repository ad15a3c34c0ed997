#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "sphsketch/experiment.hpp"
#include "sphsketch/sketched_rls.hpp"

using namespace sphsketch;

namespace {

const std::filesystem::path kDesigns = SPHSKETCH_DEFAULT_DESIGN_DIR;

UnitPoint P(double x, double y, double z) { return UnitPoint::normalized(x, y, z); }

double relative_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

double native_norm(const FittedModel& m) {
  const Eigen::MatrixXd k = gram(m.kernel, m.centers).entries;
  return m.coefficients.dot(k * m.coefficients);
}

struct Problem {
  PointSet x;
  Eigen::VectorXd y;
};

Problem noisy_f2(int t, double delta, std::uint64_t seed) {
  const PointSet x = load_design(kDesigns, t);
  const auto data = make_dataset(x, TargetFunction::wendland_sum(), NoiseModel{delta, 10.0, seed});
  return {x, data.labels};
}

}  // namespace

TEST(FitSketched, ScalarExample) {
  const PointSet one({P(0, 0, 1)});
  const auto fit = fit_sketched(one, Eigen::VectorXd::Ones(1), one, KernelSpec::gaussian(1.0), 0.5);
  EXPECT_NEAR(fit.model.coefficients(0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(fit.diagnostics.rank_used, 1u);
  EXPECT_EQ(fit.model.training_size, 1u);
  EXPECT_EQ(fit.model.lambda, 0.5);
  EXPECT_FALSE(fit.diagnostics.zero_lambda);
}

TEST(FitFull, ScalarExample) {
  const PointSet one({P(0.3, -0.2, 0.9)});
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 2.0);
  const auto fit = fit_full(one, y, KernelSpec::gaussian(0.7), 0.5);
  EXPECT_NEAR(fit.model.coefficients(0), 4.0 / 3.0, 1e-15);
  EXPECT_FALSE(fit.diagnostics.cholesky_fallback);
}

TEST(FitFull, ZeroLabelsGiveZeroCoefficients) {
  const PointSet x = load_design(kDesigns, 7);
  const auto fit = fit_full(x, Eigen::VectorXd::Zero(32), KernelSpec::wendland(), 1e-3);
  EXPECT_EQ(fit.model.coefficients.norm(), 0.0);
  const auto sk = fit_sketched(x, Eigen::VectorXd::Zero(32), x, KernelSpec::wendland(), 1e-3);
  EXPECT_EQ(sk.model.coefficients.norm(), 0.0);
}

TEST(FitSketched, HugeLambdaShrinksToZero) {
  const auto [x, y] = noisy_f2(9, 0.1, 4);
  const PointSet centers = load_design(kDesigns, 5);
  const auto weak = fit_sketched(x, y, centers, KernelSpec::wendland(), 1.0);
  const auto strong = fit_sketched(x, y, centers, KernelSpec::wendland(), 1e12);
  EXPECT_LT(strong.model.coefficients.norm(), weak.model.coefficients.norm() * 1e-6);
}

TEST(FitSketched, NearInterpolationOnT13) {
  const PointSet x = load_design(kDesigns, 13);
  const auto target = TargetFunction::wendland_sum();
  const Eigen::VectorXd y = target(x);
  const auto fit = fit_sketched(x, y, x, KernelSpec::wendland(), 1e-10);
  EXPECT_LT((predict(fit.model, x) - y).cwiseAbs().maxCoeff(), 1e-4);

  const Eigen::MatrixXd k = gram(KernelSpec::wendland(), x).entries;
  const Eigen::MatrixXd a = k + 1e-10 * 94.0 * Eigen::MatrixXd::Identity(94, 94);
  const Eigen::VectorXd oracle = k * a.ldlt().solve(y);
  EXPECT_LT((predict(fit.model, x) - oracle).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(FitSketched, Errors) {
  const PointSet x = generate_spiral(10);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(10);
  EXPECT_THROW(fit_sketched(x, Eigen::VectorXd::Ones(9), x, KernelSpec::wendland(), 1.0), std::invalid_argument);
  EXPECT_THROW(fit_sketched(x, y, x, KernelSpec::wendland(), -1.0), std::invalid_argument);
  EXPECT_THROW(fit_sketched(x, y, x, KernelSpec::wendland(), NAN), std::invalid_argument);
  Eigen::VectorXd bad = y;
  bad(3) = INFINITY;
  EXPECT_THROW(fit_sketched(x, bad, x, KernelSpec::wendland(), 1.0), numerical_error);
  EXPECT_THROW(fit_full(x, y, KernelSpec::wendland(), 0.0), std::invalid_argument);
}

TEST(FitSketched, ZeroLambdaIsFlaggedAndFinite) {
  const auto [x, y] = noisy_f2(9, 0.1, 8);
  const auto fit = fit_sketched(x, y, x, KernelSpec::gaussian(0.3), 0.0);
  EXPECT_TRUE(fit.diagnostics.zero_lambda);
  EXPECT_TRUE(fit.model.coefficients.allFinite());
  EXPECT_LE(fit.diagnostics.rank_used, x.size());
}

TEST(Predict, Examples) {
  const PointSet centers = generate_spiral(8);
  FittedModel zero{KernelSpec::wendland(), centers, Eigen::VectorXd::Zero(8), 1.0, 8};
  EXPECT_EQ(predict(zero, generate_spiral(30)).norm(), 0.0);

  const UnitPoint c = P(0.2, 0.4, -0.5);
  FittedModel single{KernelSpec::wendland(), PointSet({c}), Eigen::VectorXd::Ones(1), 1.0, 1};
  EXPECT_EQ(predict(single, PointSet({c.antipode()}))(0), 0.0);
}

TEST(Predict, MatchesScalarOracle) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  const PointSet centers = generate_spiral(40);
  Eigen::VectorXd alpha(40);
  for (auto& a : alpha) a = normal(rng);
  std::vector<UnitPoint> q;
  for (int i = 0; i < 5; ++i) q.push_back(P(normal(rng), normal(rng), normal(rng)));
  for (const auto& k : {KernelSpec::wendland(), KernelSpec::gaussian(0.4)}) {
    const FittedModel m{k, centers, alpha, 1.0, 40};
    const Eigen::VectorXd v = predict(m, PointSet(q));
    for (int i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 40; ++j) sum += alpha(j) * eval_kernel(k, q[i], centers[j]);
      EXPECT_NEAR(v(i), sum, 1e-12);
    }
  }
}

TEST(Predict, BlockedEvaluationMatchesSingleBlock) {
  const auto [x, y] = noisy_f2(9, 0.1, 3);
  const auto fit = fit_sketched(x, y, x, KernelSpec::wendland(), 1e-3);
  const PointSet q = generate_spiral(5000);
  const Eigen::VectorXd blocked = predict(fit.model, q);
  const Eigen::VectorXd direct = cross_matrix(fit.model.kernel, q, fit.model.centers).entries * fit.model.coefficients;
  EXPECT_LT((blocked - direct).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Equivalence, SketchWithAllCentersMatchesFull) {
  const PointSet test = generate_spiral(100);
  for (int t : {13, 17}) {
    const auto [x, y] = noisy_f2(t, 0.0, 1);
    for (const auto& k : {KernelSpec::wendland(), KernelSpec::gaussian(0.5)}) {
      const double lambda = 1e-4;
      const auto full = fit_full(x, y, k, lambda);
      const auto sketch = fit_sketched(x, y, x, k, lambda);
      EXPECT_LT(relative_gap(predict(sketch.model, test), predict(full.model, test)), 1e-6)
          << "t=" << t << " " << k.to_string();
    }
  }
}

TEST(SketchedPath, MatchesDirectSolveAlongGrid) {
  const auto [x, y] = noisy_f2(17, 0.1, 6);
  const PointSet test = generate_spiral(400);
  for (int s : {5, 11, 17}) {
    const PointSet centers = load_design(kDesigns, s);
    for (const auto& k : {KernelSpec::wendland(), KernelSpec::gaussian(0.2), KernelSpec::gaussian(1.0)}) {
      const SketchedSystem direct(x, y, centers, k);
      const SketchedPath path(x, y, centers, k);
      const Eigen::MatrixXd knm = cross_matrix(k, x, centers).entries;
      const Eigen::MatrixXd kmm = gram(k, centers).entries;
      for (double lambda : {1.0, 1e-2, 1e-4, 1e-6}) {
        const auto fitted = direct.solve(lambda).model;
        const auto reduced = path.model(lambda);
        const Eigen::MatrixXd a_mat = knm.transpose() * knm + lambda * static_cast<double>(x.size()) * kmm;
        const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a_mat, Eigen::EigenvaluesOnly)
                                        .eigenvalues();
        const std::string label = "s*=" + std::to_string(s) + " " + k.to_string() + " lambda=" + std::to_string(lambda);
        if (eig(eig.size() - 1) < 1e8 * eig(0)) {
          const auto a = predict(fitted, test);
          const auto b = predict(reduced, test);
          EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6 * a.cwiseAbs().maxCoeff()) << label;
        }
        // on ill-conditioned systems the reduced solve must do at least as well on the objective
        const double via_direct = regularized_objective(fitted, fitted.coefficients, x, y);
        const double via_path = regularized_objective(reduced, reduced.coefficients, x, y);
        EXPECT_LE(via_path, via_direct * (1.0 + 1e-9)) << label;
      }
    }
  }
}

TEST(SketchedPath, SingularCenterGramStillSolves) {
  // duplicated centers make K_mm singular; predictions must match the unique-center fit
  const auto [x, y] = noisy_f2(13, 0.1, 2);
  const PointSet c = load_design(kDesigns, 5);
  const PointSet doubled = c.concatenated(c);
  const PointSet test = generate_spiral(300);
  const SketchedPath single(x, y, c, KernelSpec::wendland());
  const SketchedPath twice(x, y, doubled, KernelSpec::wendland());
  EXPECT_EQ(twice.rank(), c.size());
  const auto a = predict(single.model(1e-3), test);
  const auto b = predict(twice.model(1e-3), test);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  const auto direct = predict(fit_sketched(x, y, doubled, KernelSpec::wendland(), 1e-3).model, test);
  EXPECT_LT((a - direct).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Properties, MonotoneShrinkage) {
  const auto [x, y] = noisy_f2(13, 0.1, 12);
  const PointSet centers = load_design(kDesigns, 9);
  for (const auto& k : {KernelSpec::wendland(), KernelSpec::gaussian(0.3)}) {
    const SketchedSystem system(x, y, centers, k);
    double previous = INFINITY;
    for (double lambda : geometric_lambda_grid(2.0, 1e-8)) {
      // grid is descending, so the native norm must not decrease along it
      const double norm = native_norm(system.solve(lambda).model);
      if (std::isfinite(previous)) {
        EXPECT_GE(norm, previous * (1.0 - 1e-9)) << "lambda=" << lambda;
      }
      previous = norm;
    }
  }
}

TEST(Properties, LinearityInLabels) {
  const PointSet x = load_design(kDesigns, 11);
  const PointSet centers = load_design(kDesigns, 7);
  const auto y1 = make_dataset(x, TargetFunction::wendland_sum(), NoiseModel{0.2, 10.0, 1}).labels;
  const auto y2 = make_dataset(x, TargetFunction::franke(), NoiseModel{0.3, 10.0, 2}).labels;
  const PointSet test = generate_spiral(300);
  for (const auto& k : {KernelSpec::wendland(), KernelSpec::gaussian(0.5)}) {
    const double lambda = 1e-2;
    const auto f1 = fit_sketched(x, y1, centers, k, lambda);
    const auto f2 = fit_sketched(x, y2, centers, k, lambda);
    const auto f12 = fit_sketched(x, y1 + y2, centers, k, lambda);
    EXPECT_EQ(f1.diagnostics.rank_used, centers.size());
    const Eigen::VectorXd sum = predict(f1.model, test) + predict(f2.model, test);
    EXPECT_LT(relative_gap(predict(f12.model, test), sum), 1e-8);
  }
}

TEST(Properties, ObjectiveFirstOrderOptimality) {
  const auto [x, y] = noisy_f2(13, 0.1, 21);
  const PointSet centers = load_design(kDesigns, 7);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  for (const auto& k : {KernelSpec::wendland(), KernelSpec::gaussian(0.4)}) {
    for (double lambda : {1e-1, 1e-3, 1e-5}) {
      const auto fit = fit_sketched(x, y, centers, k, lambda);
      const double base = regularized_objective(fit.model, fit.model.coefficients, x, y);
      for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd delta(static_cast<Eigen::Index>(centers.size()));
        for (auto& d : delta) d = normal(rng);
        delta *= 1e-3 / delta.norm();
        const double perturbed = regularized_objective(fit.model, fit.model.coefficients + delta, x, y);
        EXPECT_GE(perturbed, base - 1e-10) << k.to_string() << " lambda=" << lambda;
      }
    }
  }
}

TEST(Properties, FiniteAcrossStudyGrid) {
  const auto [x, y] = noisy_f2(13, 0.1, 5);
  const PointSet centers = load_design(kDesigns, 9);
  const SketchedSystem w(x, y, centers, KernelSpec::wendland());
  for (double lambda : geometric_lambda_grid(1.5)) {
    EXPECT_TRUE(w.solve(lambda).model.coefficients.allFinite());
  }
  for (double sigma : default_sigma_grid(true)) {
    const SketchedSystem g(x, y, centers, KernelSpec::gaussian(sigma));
    for (double lambda : geometric_lambda_grid(2.0)) {
      const auto fit = g.solve(lambda);
      EXPECT_TRUE(fit.model.coefficients.allFinite());
      EXPECT_LE(fit.diagnostics.rank_used, centers.size());
    }
  }
}

TEST(Properties, RepeatedFitsAgree) {
  const auto [x, y] = noisy_f2(13, 0.1, 5);
  const PointSet centers = load_design(kDesigns, 9);
  const auto a = fit_sketched(x, y, centers, KernelSpec::wendland(), 1e-4);
  const auto b = fit_sketched(x, y, centers, KernelSpec::wendland(), 1e-4);
  EXPECT_LE((a.model.coefficients - b.model.coefficients).cwiseAbs().maxCoeff(), 1e-14);
}
