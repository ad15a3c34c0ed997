#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sphsketch/errors.hpp"
#include "sphsketch/kernels.hpp"
#include "sphsketch/sketched_rls.hpp"
#include "sphsketch/sphere_points.hpp"

namespace sphsketch {

/// Renka's modified Franke function on ambient coordinates (x1, x2, x3).
inline double franke_f1(const UnitPoint& p) {
  const double a = 9.0 * p.x();
  const double b = 9.0 * p.y();
  const double c = 9.0 * p.z();
  auto sq = [](double v) { return v * v; };
  return 0.75 * std::exp(-sq(a - 2.0) / 4.0 - sq(b - 2.0) / 4.0 - sq(c - 2.0) / 4.0) +
         0.75 * std::exp(-sq(a + 1.0) / 49.0 - (b + 1.0) / 10.0 - (c + 1.0) / 10.0) +
         0.5 * std::exp(-sq(a - 7.0) / 4.0 - sq(b - 3.0) / 4.0 - sq(c - 5.0) / 4.0) -
         0.2 * std::exp(-sq(a - 4.0) - sq(b - 7.0) - sq(c - 5.0));
}

/// sum_i psi(|p - z_i|) with the Wendland psi.
inline double wendland_target_f2(const UnitPoint& p, const PointSet& centers) {
  const auto kernel = KernelSpec::wendland();
  double sum = 0.0;
  for (const auto& z : centers) {
    sum += eval_kernel(kernel, p, z);
  }
  return sum;
}

struct FrankeTarget {};
struct WendlandSumTarget {
  PointSet centers = eq_area_centers(20);
};

class TargetFunction {
 public:
  static TargetFunction franke() { return TargetFunction(FrankeTarget{}); }
  static TargetFunction wendland_sum(PointSet centers = eq_area_centers(20)) {
    return TargetFunction(WendlandSumTarget{std::move(centers)});
  }
  /// "f1" or "f2" (with the default 20 equal-area centers).
  static TargetFunction parse(const std::string& id) {
    if (id == "f1") {
      return franke();
    }
    if (id == "f2") {
      return wendland_sum();
    }
    throw std::invalid_argument("unknown target '" + id + "' (expected f1 or f2)");
  }

  std::string id() const { return std::holds_alternative<FrankeTarget>(variant_) ? "f1" : "f2"; }

  double operator()(const UnitPoint& p) const {
    if (const auto* w = std::get_if<WendlandSumTarget>(&variant_)) {
      return wendland_target_f2(p, w->centers);
    }
    return franke_f1(p);
  }

  Eigen::VectorXd operator()(const PointSet& points) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      out(static_cast<Eigen::Index>(i)) = (*this)(points[i]);
    }
    return out;
  }

  /// Centers of the Wendland sum; throws for the Franke target.
  const PointSet& wendland_centers() const { return std::get<WendlandSumTarget>(variant_).centers; }

 private:
  using Variant = std::variant<FrankeTarget, WendlandSumTarget>;
  explicit TargetFunction(Variant v) : variant_(std::move(v)) {}
  Variant variant_;
};

struct NoiseModel {
  double delta = 0.0;
  double bound = 10.0;
  std::uint64_t seed = 0;
};

/// Standard normal stream: std::mt19937_64 feeding the Box-Muller transform.
///
/// Each pair of engine outputs (u1, u2) yields two variates,
///   r = sqrt(-2 ln u1),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2),
/// with u1 = ((w1 >> 11) + 1) / 2^53 in (0, 1] and u2 = (w2 >> 11) / 2^53 in
/// [0, 1). z0 is returned first. Both the engine and the transform are fully
/// specified, so a seed determines the stream on every platform.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (cached_) {
      const double v = *cached_;
      cached_.reset();
      return v;
    }
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * scale;
    const double u2 = static_cast<double>(engine_() >> 11) * scale;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(angle);
    return r * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> cached_;
};

/// count draws of N(0, delta^2), clipped to [-bound, bound].
inline Eigen::VectorXd sample_truncated_gaussian(const NoiseModel& noise, std::size_t count) {
  if (count < 1) {
    throw std::invalid_argument("sample count must be >= 1");
  }
  if (!(noise.delta >= 0.0) || !(noise.bound > 0.0)) {
    throw std::invalid_argument("noise needs delta >= 0 and bound > 0");
  }
  GaussianStream stream(noise.seed);
  Eigen::VectorXd out(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = std::clamp(noise.delta * stream.next(), -noise.bound, noise.bound);
  }
  return out;
}

struct Dataset {
  PointSet inputs;
  Eigen::VectorXd labels;
  TargetFunction target;
  NoiseModel noise;
};

/// labels_i = target(inputs_i) + eps_i.
inline Dataset make_dataset(const PointSet& inputs, const TargetFunction& target, const NoiseModel& noise) {
  Eigen::VectorXd labels = target(inputs) + sample_truncated_gaussian(noise, inputs.size());
  return Dataset{inputs, std::move(labels), target, noise};
}

inline double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels) {
  if (predictions.size() != labels.size() || labels.size() == 0) {
    throw std::invalid_argument("rmse: size mismatch");
  }
  return std::sqrt((predictions - labels).squaredNorm() / static_cast<double>(labels.size()));
}

inline double rmse(const FittedModel& model, const PointSet& test_inputs, const Eigen::VectorXd& test_labels) {
  if (static_cast<std::size_t>(test_labels.size()) != test_inputs.size()) {
    throw std::invalid_argument("rmse: " + std::to_string(test_inputs.size()) + " test points but " +
                                std::to_string(test_labels.size()) + " labels");
  }
  return rmse(predict(model, test_inputs), test_labels);
}

// ---------------------------------------------------------------------------
// Dataset CSV: header x,y,z,label; 17 significant digits.

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw data_error("cannot write " + path.string());
  }
  out << "x,y,z,label\n";
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    const auto& p = data.inputs[i];
    out << format_real(p.x()) << ',' << format_real(p.y()) << ',' << format_real(p.z()) << ','
        << format_real(data.labels(static_cast<Eigen::Index>(i))) << '\n';
  }
}

/// Reads labels from a CSV with a `label` header column, or from a headerless
/// file with one number per line.
inline Eigen::VectorXd read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw missing_file_error("cannot open label file " + path.string());
  }
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> column;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') {
      continue;
    }
    const auto fields = detail::split_fields(body, ",");
    if (values.empty() && !column && !detail::parse_real(fields.front())) {
      const auto it = std::find(fields.begin(), fields.end(), std::string_view("label"));
      if (it == fields.end()) {
        throw data_error(path.string() + ": header has no 'label' column");
      }
      column = static_cast<std::size_t>(it - fields.begin());
      continue;
    }
    const std::size_t col = column.value_or(0);
    if (col >= fields.size() || (!column && fields.size() != 1)) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": wrong number of fields");
    }
    const auto v = detail::parse_real(fields[col]);
    if (!v || !std::isfinite(*v)) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": cannot parse label");
    }
    values.push_back(*v);
  }
  if (values.empty()) {
    throw data_error(path.string() + ": no labels");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace sphsketch
