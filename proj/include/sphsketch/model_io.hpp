#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sphsketch/errors.hpp"
#include "sphsketch/kernels.hpp"
#include "sphsketch/sketched_rls.hpp"
#include "sphsketch/sphere_points.hpp"

namespace sphsketch {

// Model file:
//   # sphsketch model
//   kernel <gaussian:sigma|wendland>
//   lambda <real>
//   training_size <N>
//   centers <m>
//   x y z alpha        (m lines)

inline void write_model(std::ostream& out, const FittedModel& model) {
  char buf[128];
  out << "# sphsketch model\n";
  out << "kernel " << model.kernel.to_string() << '\n';
  std::snprintf(buf, sizeof(buf), "lambda %.17g\n", model.lambda);
  out << buf;
  out << "training_size " << model.training_size << '\n';
  out << "centers " << model.centers.size() << '\n';
  for (std::size_t j = 0; j < model.centers.size(); ++j) {
    const auto& c = model.centers[j];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", c.x(), c.y(), c.z(),
                  model.coefficients(static_cast<Eigen::Index>(j)));
    out << buf;
  }
}

inline void write_model_file(const std::filesystem::path& path, const FittedModel& model) {
  std::ofstream out(path);
  if (!out) {
    throw data_error("cannot write model file " + path.string());
  }
  write_model(out, model);
}

inline FittedModel read_model(std::istream& in, const std::string& label) {
  std::string line;
  std::optional<KernelSpec> kernel;
  std::optional<double> lambda;
  std::optional<std::size_t> training_size;
  std::optional<std::size_t> count;
  std::vector<UnitPoint> centers;
  std::vector<double> alpha;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> data_error {
    return data_error(label + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') {
      continue;
    }
    const auto fields = detail::split_fields(body, " \t");
    if (!count) {
      if (fields.size() != 2) {
        throw fail("expected '<key> <value>'");
      }
      const std::string key(fields[0]);
      const std::string value(fields[1]);
      try {
        if (key == "kernel") {
          kernel = KernelSpec::parse(value);
        } else if (key == "lambda") {
          lambda = detail::parse_real(value).value();
        } else if (key == "training_size") {
          training_size = std::stoull(value);
        } else if (key == "centers") {
          count = std::stoull(value);
        } else {
          throw fail("unknown header key '" + key + "'");
        }
      } catch (const data_error&) {
        throw;
      } catch (const std::exception&) {
        throw fail("bad value for " + key);
      }
      continue;
    }
    if (fields.size() != 4) {
      throw fail("expected 'x y z alpha'");
    }
    double v[4];
    for (int k = 0; k < 4; ++k) {
      const auto r = detail::parse_real(fields[k]);
      if (!r || !std::isfinite(*r)) {
        throw fail("cannot parse '" + std::string(fields[k]) + "'");
      }
      v[k] = *r;
    }
    if (std::abs(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 1.0) > kLoadNormTolerance) {
      throw fail("center is not a unit vector");
    }
    centers.push_back(UnitPoint::normalized(v[0], v[1], v[2]));
    alpha.push_back(v[3]);
  }
  if (!kernel || !lambda || !training_size || !count) {
    throw data_error(label + ": incomplete model header");
  }
  if (centers.size() != *count || centers.empty()) {
    throw data_error(label + ": header says " + std::to_string(*count) + " centers, found " +
                     std::to_string(centers.size()));
  }
  return FittedModel{*kernel, PointSet(std::move(centers), label),
                     Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size())),
                     *lambda, *training_size};
}

inline FittedModel read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw missing_file_error("cannot open model file " + path.string());
  }
  return read_model(in, path.string());
}

}  // namespace sphsketch
