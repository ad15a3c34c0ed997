#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "sphsketch/experiment.hpp"
#include "sphsketch/synthetic_data.hpp"

using namespace sphsketch;

namespace {

const std::filesystem::path kDesigns = SPHSKETCH_DEFAULT_DESIGN_DIR;

UnitPoint P(double x, double y, double z) { return UnitPoint::normalized(x, y, z); }

// Second transcription of the Franke formula, in extended precision.
long double franke_oracle(long double x, long double y, long double z) {
  const long double a = 9 * x, b = 9 * y, c = 9 * z;
  return 0.75L * std::exp(-(a - 2) * (a - 2) / 4 - (b - 2) * (b - 2) / 4 - (c - 2) * (c - 2) / 4) +
         0.75L * std::exp(-(a + 1) * (a + 1) / 49 - (b + 1) / 10 - (c + 1) / 10) +
         0.5L * std::exp(-(a - 7) * (a - 7) / 4 - (b - 3) * (b - 3) / 4 - (c - 5) * (c - 5) / 4) -
         0.2L * std::exp(-(a - 4) * (a - 4) - (b - 7) * (b - 7) - (c - 5) * (c - 5));
}

}  // namespace

TEST(Franke, NorthPole) {
  EXPECT_NEAR(franke_f1(P(0, 0, 1)), 0.24461047509385587724, 1e-15);
  EXPECT_NEAR(franke_f1(P(0, 0, 1)), static_cast<double>(franke_oracle(0, 0, 1)), 1e-15);
}

TEST(Franke, FirstTermCancellationProbe) {
  const double z = std::sqrt(1.0 - 8.0 / 81.0);
  const UnitPoint p = P(2.0 / 9.0, 2.0 / 9.0, z);
  EXPECT_NEAR(franke_f1(p), 0.1780877631881463186, 1e-14);
  EXPECT_NEAR(franke_f1(p), static_cast<double>(franke_oracle(p.x(), p.y(), p.z())), 1e-14);
}

TEST(Franke, AgreesWithOracleAndStaysInRange) {
  // The supremum of the printed formula on the sphere is about 2.1802, slightly above 2.
  const PointSet grid = generate_spiral(20000);
  double hi = -INFINITY, lo = INFINITY;
  for (const auto& p : grid) {
    const double v = franke_f1(p);
    EXPECT_NEAR(v, static_cast<double>(franke_oracle(p.x(), p.y(), p.z())), 1e-14);
    ASSERT_TRUE(std::isfinite(v));
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  EXPECT_GT(lo, -0.2);
  EXPECT_LT(hi, 2.1803);
  EXPECT_GT(hi, 2.0);
}

TEST(WendlandTarget, Examples) {
  const PointSet one({P(0, 0, 1)});
  EXPECT_EQ(wendland_target_f2(P(0, 0, 1), one), 1.0);
  EXPECT_EQ(wendland_target_f2(P(0, 0, -1), one), 0.0);
  const PointSet spread({P(0, 0, 1), P(0, 0, -1), P(1, 0, 0), P(-1, 0, 0)});  // pairwise distance >= sqrt(2)
  EXPECT_EQ(wendland_target_f2(P(1, 0, 0), spread), 1.0);
}

TEST(WendlandTarget, DefaultCentersMatchDoubleLoop) {
  const auto f2 = TargetFunction::wendland_sum();
  const PointSet& centers = f2.wendland_centers();
  ASSERT_EQ(centers.size(), 20u);
  for (const auto& p : {P(0, 0, 1), P(0.3, -0.4, 0.2), P(-1, 2, -3)}) {
    double sum = 0.0;
    for (const auto& z : centers) {
      const double d = std::sqrt((p.x() - z.x()) * (p.x() - z.x()) + (p.y() - z.y()) * (p.y() - z.y()) +
                                 (p.z() - z.z()) * (p.z() - z.z()));
      sum += std::pow(std::max(1.0 - d, 0.0), 8) * (32 * d * d * d + 25 * d * d + 8 * d + 1);
    }
    EXPECT_NEAR(f2(p), sum, 1e-14);
  }
}

TEST(TargetFunction, Parse) {
  EXPECT_EQ(TargetFunction::parse("f1").id(), "f1");
  EXPECT_EQ(TargetFunction::parse("f2").id(), "f2");
  EXPECT_THROW(TargetFunction::parse("f3"), std::invalid_argument);
  EXPECT_THROW(TargetFunction::franke().wendland_centers(), std::bad_variant_access);
}

TEST(Noise, ZeroDelta) {
  const auto v = sample_truncated_gaussian(NoiseModel{0.0, 10.0, 9}, 5);
  EXPECT_EQ(v, Eigen::VectorXd::Zero(5));
}

TEST(Noise, Statistics) {
  const auto v = sample_truncated_gaussian(NoiseModel{0.5, 10.0, 12345}, 100000);
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sd, 0.5, 0.01);
}

TEST(Noise, Bounded) {
  const auto v = sample_truncated_gaussian(NoiseModel{100.0, 10.0, 1}, 10000);
  EXPECT_LE(v.cwiseAbs().maxCoeff(), 10.0);
  EXPECT_EQ(v.cwiseAbs().maxCoeff(), 10.0);  // clipping, not rejection
}

TEST(Noise, DeterministicAndSeedSensitive) {
  const auto a = sample_truncated_gaussian(NoiseModel{0.3, 10.0, 42}, 1000);
  const auto b = sample_truncated_gaussian(NoiseModel{0.3, 10.0, 42}, 1000);
  const auto c = sample_truncated_gaussian(NoiseModel{0.3, 10.0, 43}, 1000);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Noise, StreamPinnedToEngineAndTransform) {
  std::mt19937_64 engine(7);
  const double u1 = static_cast<double>((engine() >> 11) + 1) * 0x1p-53;
  const double u2 = static_cast<double>(engine() >> 11) * 0x1p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  GaussianStream s(7);
  EXPECT_EQ(s.next(), r * std::cos(2.0 * std::numbers::pi * u2));
  EXPECT_EQ(s.next(), r * std::sin(2.0 * std::numbers::pi * u2));
}

TEST(Noise, Errors) {
  EXPECT_THROW(sample_truncated_gaussian(NoiseModel{0.1, 10.0, 1}, 0), std::invalid_argument);
  EXPECT_THROW(sample_truncated_gaussian(NoiseModel{-0.1, 10.0, 1}, 3), std::invalid_argument);
  EXPECT_THROW(sample_truncated_gaussian(NoiseModel{0.1, 0.0, 1}, 3), std::invalid_argument);
}

TEST(Dataset, NoiseFreeLabelsAreExact) {
  const PointSet x = load_design(kDesigns, 9);
  const auto target = TargetFunction::franke();
  const auto data = make_dataset(x, target, NoiseModel{0.0, 10.0, 3});
  EXPECT_EQ(data.labels, target(x));
}

TEST(Dataset, Reproducible) {
  const PointSet x = load_design(kDesigns, 9);
  const auto a = make_dataset(x, TargetFunction::wendland_sum(), NoiseModel{0.2, 10.0, 8});
  const auto b = make_dataset(x, TargetFunction::wendland_sum(), NoiseModel{0.2, 10.0, 8});
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Dataset, NoiseLevelOnLargestDesign) {
  const PointSet x = load_design(kDesigns, 57);
  const auto target = TargetFunction::wendland_sum();
  const auto data = make_dataset(x, target, NoiseModel{0.1, 10.0, 1});
  const Eigen::VectorXd eps = data.labels - target(x);
  const double mean = eps.mean();
  const double sd = std::sqrt((eps.array() - mean).square().sum() / (eps.size() - 1));
  EXPECT_GE(sd, 0.09);
  EXPECT_LE(sd, 0.11);
  EXPECT_LE(eps.cwiseAbs().maxCoeff(), 10.0);
}

TEST(Rmse, Examples) {
  EXPECT_NEAR(rmse(Eigen::Vector2d(1, 2), Eigen::Vector2d(0, 2)), std::sqrt(0.5), 1e-16);
  EXPECT_EQ(rmse(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 3)), 0.0);
  const PointSet c = generate_spiral(5);
  const FittedModel zero{KernelSpec::wendland(), c, Eigen::VectorXd::Zero(5), 1.0, 5};
  const PointSet q = generate_spiral(9);
  EXPECT_NEAR(rmse(zero, q, Eigen::VectorXd::Constant(9, -0.7)), 0.7, 1e-16);
  EXPECT_THROW(rmse(zero, q, Eigen::VectorXd::Zero(8)), std::invalid_argument);
  EXPECT_THROW(rmse(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(ExactRepresentation, WendlandTargetRecoversUnitCoefficients) {
  const auto target = TargetFunction::wendland_sum();
  const PointSet x = load_design(kDesigns, 25);
  const auto fit = fit_sketched(x, target(x), target.wendland_centers(), KernelSpec::wendland(), 1e-12);
  const TestSet test = make_test_set(target, 1000);
  EXPECT_LT(rmse(fit.model, test.inputs, test.labels), 1e-8);
  EXPECT_LT((fit.model.coefficients - Eigen::VectorXd::Ones(20)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DatasetCsv, WritesHeaderAndFullPrecision) {
  const PointSet x = generate_spiral(4);
  const auto data = make_dataset(x, TargetFunction::franke(), NoiseModel{0.1, 10.0, 5});
  const auto path = std::filesystem::temp_directory_path() / "sphsketch_dataset_test.csv";
  write_dataset_csv(path, data);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x,y,z,label");
  const Eigen::VectorXd back = read_labels_csv(path);
  EXPECT_EQ(back, data.labels);
  std::filesystem::remove(path);
}

TEST(DatasetCsv, LabelReaderErrors) {
  const auto dir = std::filesystem::temp_directory_path();
  EXPECT_THROW(read_labels_csv(dir / "does_not_exist.csv"), missing_file_error);
  const auto bad = dir / "sphsketch_bad_labels.csv";
  std::ofstream(bad) << "x,y,z,value\n0,0,1,3\n";
  EXPECT_THROW(read_labels_csv(bad), data_error);
  std::ofstream(bad) << "1.5\n2.5\n";
  EXPECT_EQ(read_labels_csv(bad), Eigen::Vector2d(1.5, 2.5));
  std::ofstream(bad) << "label\n1\nnope\n";
  EXPECT_THROW(read_labels_csv(bad), data_error);
  std::filesystem::remove(bad);
}
