#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "sphsketch/experiment.hpp"
#include "sphsketch/kernels.hpp"

using namespace sphsketch;

namespace {

const std::filesystem::path kDesigns = SPHSKETCH_DEFAULT_DESIGN_DIR;

UnitPoint P(double x, double y, double z) { return UnitPoint::normalized(x, y, z); }

PointSet random_points(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<UnitPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back(P(normal(rng), normal(rng), normal(rng)));
  }
  return PointSet(std::move(pts));
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Matrix3d g;
  for (int i = 0; i < 9; ++i) {
    g(i / 3, i % 3) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
  Eigen::Matrix3d q = qr.householderQ();
  if (q.determinant() < 0) {
    q.col(0) *= -1.0;
  }
  return q;
}

UnitPoint rotate(const Eigen::Matrix3d& r, const UnitPoint& p) {
  const Eigen::Vector3d v = r * Eigen::Vector3d(p.x(), p.y(), p.z());
  return P(v.x(), v.y(), v.z());
}

std::vector<KernelSpec> kernels() {
  return {KernelSpec::gaussian(0.1), KernelSpec::gaussian(0.5), KernelSpec::gaussian(1.0), KernelSpec::wendland()};
}

}  // namespace

TEST(WendlandPsi, Examples) {
  EXPECT_EQ(wendland_psi(0.0), 1.0);
  EXPECT_EQ(wendland_psi(1.0), 0.0);
  EXPECT_DOUBLE_EQ(wendland_psi(0.5), 0.0595703125);
  EXPECT_EQ(wendland_psi(1.7), 0.0);
  EXPECT_EQ(wendland_psi(2.0), 0.0);
}

TEST(WendlandPsi, MatchesExpandedPolynomial) {
  for (double u = 0.0; u <= 1.0; u += 0.01) {
    const double expected = std::pow(1.0 - u, 8) * (32 * u * u * u + 25 * u * u + 8 * u + 1);
    EXPECT_NEAR(wendland_psi(u), expected, 1e-15);
  }
}

TEST(EvalKernel, Examples) {
  const auto n = P(0, 0, 1);
  const auto g = KernelSpec::gaussian(1.0);
  EXPECT_EQ(eval_kernel(g, n, n), 1.0);
  EXPECT_NEAR(eval_kernel(g, n, n.antipode()), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(eval_kernel(g, n, n.antipode()), 0.135335, 1e-6);
  EXPECT_EQ(eval_kernel(KernelSpec::wendland(), n, n.antipode()), 0.0);
  // chord length 1/2 between points 2 asin(1/4) apart
  const double angle = 2.0 * std::asin(0.25);
  const auto q = P(std::sin(angle), 0.0, std::cos(angle));
  EXPECT_NEAR(eval_kernel(KernelSpec::wendland(), n, q), 0.0595703125, 1e-14);
}

TEST(KernelSpec, ParseAndValidate) {
  EXPECT_TRUE(KernelSpec::parse("wendland").is_wendland());
  const auto g = KernelSpec::parse("gaussian:0.25");
  ASSERT_TRUE(g.is_gaussian());
  EXPECT_EQ(g.sigma(), 0.25);
  EXPECT_EQ(KernelSpec::parse(g.to_string()), g);
  EXPECT_THROW(KernelSpec::parse("gaussian:"), std::invalid_argument);
  EXPECT_THROW(KernelSpec::parse("gaussian:-1"), std::invalid_argument);
  EXPECT_THROW(KernelSpec::parse("gaussian:abc"), std::invalid_argument);
  EXPECT_THROW(KernelSpec::parse("matern"), std::invalid_argument);
  EXPECT_THROW(KernelSpec::gaussian(0.0), std::invalid_argument);
}

TEST(CrossMatrix, Examples) {
  const PointSet north({P(0, 0, 1)});
  const PointSet poles({P(0, 0, 1), P(0, 0, -1)});
  const auto one = cross_matrix(KernelSpec::gaussian(1.0), north, north);
  ASSERT_EQ(one.rows(), 1);
  EXPECT_EQ(one(0, 0), 1.0);
  EXPECT_FALSE(one.symmetric);
  const auto w = cross_matrix(KernelSpec::wendland(), poles, north);
  ASSERT_EQ(w.rows(), 2);
  ASSERT_EQ(w.cols(), 1);
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(w(1, 0), 0.0);
}

TEST(CrossMatrix, MatchesScalarOracle) {
  std::mt19937_64 rng(11);
  const PointSet rows = random_points(5, rng);
  const PointSet cols = random_points(7, rng);
  for (const auto& k : kernels()) {
    const auto m = cross_matrix(k, rows, cols);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_EQ(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), eval_kernel(k, rows[i], cols[j]));
      }
    }
  }
}

TEST(CrossMatrix, MemoryBudget) {
  const PointSet s = generate_spiral(100);
  MemoryBudget small{100 * 50 * sizeof(double)};
  EXPECT_THROW(cross_matrix(KernelSpec::wendland(), s, s, small), size_error);
  EXPECT_THROW(gram(KernelSpec::wendland(), s, small), numerical_error);
  EXPECT_NO_THROW(cross_matrix(KernelSpec::wendland(), s, s.subset({0, 1, 2}, "c"), small));
}

TEST(Gram, Examples) {
  const auto single = gram(KernelSpec::gaussian(0.3), PointSet({P(1, 2, 3)}));
  EXPECT_EQ(single(0, 0), 1.0);
  EXPECT_TRUE(single.symmetric);
  const auto pair = gram(KernelSpec::wendland(), PointSet({P(0, 0, 1), P(0, 0, -1)}));
  EXPECT_EQ(pair.entries, Eigen::Matrix2d::Identity());
  const auto d5 = gram(KernelSpec::gaussian(0.5), load_design(kDesigns, 5));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d5.entries);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(Gram, SymmetricAndMatchesCross) {
  std::mt19937_64 rng(5);
  const PointSet s = random_points(40, rng);
  for (const auto& k : kernels()) {
    const auto g = gram(k, s);
    EXPECT_TRUE(g.entries == g.entries.transpose());
    for (Eigen::Index i = 0; i < 40; ++i) {
      EXPECT_EQ(g(i, i), eval_kernel(k, s[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(i)]));
    }
    const auto c = cross_matrix(k, s, s);
    for (Eigen::Index j = 0; j < 40; ++j) {
      for (Eigen::Index i = 0; i <= j; ++i) {
        EXPECT_EQ(g(i, j), c(i, j));
      }
    }
  }
}

TEST(Kernel, Zonality) {
  std::mt19937_64 rng(23);
  const PointSet a = random_points(50, rng);
  const PointSet b = random_points(50, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Matrix3d r = random_rotation(rng);
    for (const auto& k : kernels()) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(eval_kernel(k, rotate(r, a[i]), rotate(r, b[i])), eval_kernel(k, a[i], b[i]), 1e-12);
      }
    }
  }
}

TEST(Kernel, GramPositiveSemidefinite) {
  std::mt19937_64 rng(31);
  for (std::size_t n : {2, 5, 10, 25, 50}) {
    for (int rep = 0; rep < 4; ++rep) {
      const PointSet s = random_points(n, rng);
      for (const auto& k : kernels()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram(k, s).entries);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        EXPECT_GE(lo, -1e-10 * hi) << k.to_string() << " n=" << n;
      }
    }
  }
}

TEST(Kernel, Range) {
  std::mt19937_64 rng(41);
  const PointSet s = random_points(60, rng);
  for (const auto& k : kernels()) {
    const auto g = gram(k, s);
    EXPECT_LE(g.entries.maxCoeff(), 1.0);
    if (k.is_gaussian() && k.sigma() >= 0.5) {
      EXPECT_GT(g.entries.minCoeff(), 0.0);
    } else {
      EXPECT_GE(g.entries.minCoeff(), 0.0);
    }
  }
}
