#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sphsketch/errors.hpp"

namespace sphsketch {

/// A point on the unit sphere S^2 in ambient coordinates.
///
/// Construction goes through normalized(), so every instance has unit norm
/// to within kUnitTolerance.
class UnitPoint {
 public:
  static constexpr double kUnitTolerance = 1e-12;

  UnitPoint() = default;  // north pole

  static UnitPoint normalized(double x, double y, double z) {
    const double norm = std::sqrt(x * x + y * y + z * z);
    if (!std::isfinite(norm) || norm == 0.0) {
      throw std::invalid_argument("cannot normalize a zero or non-finite vector");
    }
    return UnitPoint(x / norm, y / norm, z / norm);
  }

  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  double dot(const UnitPoint& other) const { return x_ * other.x_ + y_ * other.y_ + z_ * other.z_; }

  UnitPoint antipode() const { return UnitPoint(-x_, -y_, -z_); }

  friend bool operator==(const UnitPoint&, const UnitPoint&) = default;

 private:
  UnitPoint(double x, double y, double z) : x_(x), y_(y), z_(z) {}

  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 1.0;
};

/// Dot product clamped to [-1, 1].
inline double clamped_dot(const UnitPoint& a, const UnitPoint& b) { return std::clamp(a.dot(b), -1.0, 1.0); }

/// Euclidean chord length |a - b|.
inline double chord_distance(const UnitPoint& a, const UnitPoint& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Great-circle distance, computed from the chord for accuracy near 0.
inline double geodesic_distance(const UnitPoint& a, const UnitPoint& b) {
  return 2.0 * std::asin(std::min(1.0, chord_distance(a, b) / 2.0));
}

class PointSet;
PointSet certify_design(const PointSet& set, int degree, double tolerance);

/// Nonempty ordered collection of unit points.
///
/// design_degree() is only ever set by certify_design(), after the set has
/// passed the spherical-design residual test for every degree up to it.
class PointSet {
 public:
  explicit PointSet(std::vector<UnitPoint> points, std::string label = {})
      : points_(std::move(points)), label_(std::move(label)) {
    if (points_.empty()) {
      throw std::invalid_argument("point set must be nonempty");
    }
  }

  std::size_t size() const { return points_.size(); }
  const UnitPoint& operator[](std::size_t i) const { return points_[i]; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }
  const std::vector<UnitPoint>& points() const { return points_; }
  const std::string& label() const { return label_; }
  std::optional<int> design_degree() const { return design_degree_; }

  /// Points of this set followed by the points of `other`; no design degree.
  PointSet concatenated(const PointSet& other) const {
    std::vector<UnitPoint> all = points_;
    all.insert(all.end(), other.points_.begin(), other.points_.end());
    return PointSet(std::move(all), label_ + "+" + other.label_);
  }

  /// Subset by index, in the given order; no design degree.
  PointSet subset(const std::vector<std::size_t>& indices, std::string label) const {
    std::vector<UnitPoint> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) {
      picked.push_back(points_.at(i));
    }
    return PointSet(std::move(picked), std::move(label));
  }

  /// Coordinates as an N x 3 matrix.
  Eigen::MatrixX3d coordinates() const {
    Eigen::MatrixX3d out(points_.size(), 3);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      out(i, 0) = points_[i].x();
      out(i, 1) = points_[i].y();
      out(i, 2) = points_[i].z();
    }
    return out;
  }

 private:
  friend PointSet certify_design(const PointSet& set, int degree, double tolerance);

  std::vector<UnitPoint> points_;
  std::optional<int> design_degree_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// Point files: one "x y z" triple per line, '#' comment lines, blank lines
// ignored.

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view separators) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(separators, pos);
    if (start == std::string_view::npos) {
      break;
    }
    auto stop = line.find_first_of(separators, start);
    if (stop == std::string_view::npos) {
      stop = line.size();
    }
    fields.push_back(line.substr(start, stop - start));
    pos = stop;
  }
  return fields;
}

/// Parses a full token as a double; std::nullopt on any trailing garbage.
inline std::optional<double> parse_real(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') {
    token.remove_prefix(1);
  }
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || token.empty()) {
    return std::nullopt;
  }
  return value;
}

}  // namespace detail

inline constexpr double kLoadNormTolerance = 1e-6;

/// Parses point-file text. `label` is used in error messages and as the set label.
inline PointSet parse_points(std::istream& in, const std::string& label) {
  std::vector<UnitPoint> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') {
      continue;
    }
    const auto fields = detail::split_fields(body, " \t");
    if (fields.size() != 3) {
      throw data_error(label + ":" + std::to_string(line_no) + ": expected 3 fields, found " +
                       std::to_string(fields.size()));
    }
    double xyz[3];
    for (int k = 0; k < 3; ++k) {
      const auto v = detail::parse_real(fields[k]);
      if (!v || !std::isfinite(*v)) {
        throw data_error(label + ":" + std::to_string(line_no) + ": cannot parse '" + std::string(fields[k]) + "'");
      }
      xyz[k] = *v;
    }
    const double norm = std::sqrt(xyz[0] * xyz[0] + xyz[1] * xyz[1] + xyz[2] * xyz[2]);
    if (std::abs(norm - 1.0) > kLoadNormTolerance) {
      throw data_error(label + ":" + std::to_string(line_no) + ": point norm " + std::to_string(norm) +
                       " is not within 1e-6 of 1");
    }
    points.push_back(UnitPoint::normalized(xyz[0], xyz[1], xyz[2]));
  }
  if (points.empty()) {
    throw data_error(label + ": no points");
  }
  return PointSet(std::move(points), label);
}

inline PointSet load_point_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw missing_file_error("cannot open point file " + path.string());
  }
  return parse_points(in, path.string());
}

inline void write_points(std::ostream& out, const PointSet& set) {
  char buf[96];
  for (const auto& p : set) {
    std::snprintf(buf, sizeof(buf), "%24.17e %24.17e %24.17e\n", p.x(), p.y(), p.z());
    out << buf;
  }
}

inline void write_point_file(const std::filesystem::path& path, const PointSet& set) {
  std::ofstream out(path);
  if (!out) {
    throw data_error("cannot write point file " + path.string());
  }
  write_points(out, set);
}

// ---------------------------------------------------------------------------
// Generators

/// Generalized spiral points (Rakhmanov-Saff-Zhou, constant 3.6), ordered from
/// the south pole to the north pole.
inline PointSet generate_spiral(std::size_t n) {
  if (n < 2) {
    throw std::invalid_argument("generate_spiral needs n >= 2");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double nd = static_cast<double>(n);
  std::vector<UnitPoint> points;
  points.reserve(n);
  double phi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = -1.0 + 2.0 * static_cast<double>(i) / (nd - 1.0);
    if (i == 0 || i + 1 == n) {
      phi = 0.0;
    } else {
      phi = std::fmod(phi + 3.6 / std::sqrt(nd * (1.0 - h * h)), two_pi);
    }
    const double s = std::sqrt(std::max(0.0, (1.0 - h) * (1.0 + h)));
    points.push_back(UnitPoint::normalized(s * std::cos(phi), s * std::sin(phi), h));
  }
  return PointSet(std::move(points), "spiral(" + std::to_string(n) + ")");
}

/// Recursive zonal equal-area partition of S^2 into n regions.
///
/// Zone 0 is the north polar cap and the last zone the south polar cap; the
/// zones between are collars split into equal-area lune cells. Region indices
/// run zone by zone, and by azimuth within a collar.
struct EqPartition {
  std::size_t regions = 1;
  /// Colatitude of the bottom boundary of each zone; the last entry is pi.
  std::vector<double> zone_bottoms;
  /// Number of regions in each zone.
  std::vector<std::size_t> zone_counts;
  /// Azimuth rotation of each zone, as a fraction of a full turn.
  std::vector<double> zone_offsets;

  std::size_t zone_of_colatitude(double colatitude) const {
    for (std::size_t z = 0; z + 1 < zone_bottoms.size(); ++z) {
      if (colatitude < zone_bottoms[z]) {
        return z;
      }
    }
    return zone_bottoms.size() - 1;
  }

  std::size_t region_of(const UnitPoint& p) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double colatitude = std::atan2(std::hypot(p.x(), p.y()), p.z());
    const std::size_t zone = zone_of_colatitude(colatitude);
    std::size_t first = 0;
    for (std::size_t z = 0; z < zone; ++z) {
      first += zone_counts[z];
    }
    const std::size_t count = zone_counts[zone];
    if (count == 1) {
      return first;
    }
    double phi = std::atan2(p.y(), p.x()) - two_pi * zone_offsets[zone];
    phi = std::fmod(phi, two_pi);
    if (phi < 0.0) {
      phi += two_pi;
    }
    const auto cell = std::min(count - 1, static_cast<std::size_t>(phi / (two_pi / static_cast<double>(count))));
    return first + cell;
  }

  /// Cell centers: midpoint in colatitude and azimuth; cap centers at the poles.
  PointSet centers() const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<UnitPoint> out;
    out.reserve(regions);
    out.push_back(UnitPoint::normalized(0.0, 0.0, 1.0));
    if (regions == 1) {
      return PointSet(std::move(out), "eq_area_centers(1)");
    }
    for (std::size_t z = 1; z + 1 < zone_counts.size(); ++z) {
      const double theta = 0.5 * (zone_bottoms[z - 1] + zone_bottoms[z]);
      const auto count = zone_counts[z];
      for (std::size_t i = 1; i <= count; ++i) {
        const double phi = std::fmod((static_cast<double>(i) - 0.5) * two_pi / static_cast<double>(count) +
                                         two_pi * zone_offsets[z],
                                     two_pi);
        out.push_back(UnitPoint::normalized(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                                            std::cos(theta)));
      }
    }
    out.push_back(UnitPoint::normalized(0.0, 0.0, -1.0));
    return PointSet(std::move(out), "eq_area_centers(" + std::to_string(regions) + ")");
  }
};

namespace detail {

inline double cap_area(double colatitude) {
  const double s = std::sin(colatitude / 2.0);
  return 4.0 * std::numbers::pi * s * s;
}

inline double cap_colatitude(double area) {
  return 2.0 * std::asin(std::min(1.0, std::sqrt(area / std::numbers::pi) / 2.0));
}

}  // namespace detail

inline EqPartition eq_partition(std::size_t n) {
  if (n < 1) {
    throw std::invalid_argument("eq_partition needs n >= 1");
  }
  constexpr double pi = std::numbers::pi;
  EqPartition part;
  part.regions = n;
  if (n == 1) {
    part.zone_bottoms = {pi};
    part.zone_counts = {1};
    part.zone_offsets = {0.0};
    return part;
  }
  const double region_area = 4.0 * pi / static_cast<double>(n);
  const double polar = detail::cap_colatitude(region_area);
  const double ideal_angle = std::sqrt(region_area);
  std::size_t collars = 0;
  if (n > 2) {
    collars = static_cast<std::size_t>(std::max(1.0, std::round((pi - 2.0 * polar) / ideal_angle)));
  }

  std::vector<double> ideal(collars + 2, 1.0);
  if (collars > 0) {
    const double fitting = (pi - 2.0 * polar) / static_cast<double>(collars);
    for (std::size_t c = 1; c <= collars; ++c) {
      const double top = polar + static_cast<double>(c - 1) * fitting;
      const double bottom = polar + static_cast<double>(c) * fitting;
      ideal[c] = (detail::cap_area(bottom) - detail::cap_area(top)) / region_area;
    }
  }

  // Round to whole counts, carrying the rounding discrepancy zone to zone.
  part.zone_counts.resize(ideal.size());
  double discrepancy = 0.0;
  for (std::size_t z = 0; z < ideal.size(); ++z) {
    const double rounded = std::round(ideal[z] + discrepancy);
    part.zone_counts[z] = static_cast<std::size_t>(rounded);
    discrepancy += ideal[z] - rounded;
  }

  part.zone_bottoms.resize(ideal.size());
  part.zone_bottoms[0] = polar;
  std::size_t subtotal = 1;
  for (std::size_t c = 1; c <= collars; ++c) {
    subtotal += part.zone_counts[c];
    part.zone_bottoms[c] = detail::cap_colatitude(static_cast<double>(subtotal) * region_area);
  }
  part.zone_bottoms.back() = pi;

  part.zone_offsets.assign(ideal.size(), 0.0);
  double offset = 0.0;
  for (std::size_t c = 1; c <= collars; ++c) {
    part.zone_offsets[c] = offset;
    const auto top = static_cast<double>(part.zone_counts[c]);
    const auto next = static_cast<double>(part.zone_counts[c + 1]);
    const auto common = static_cast<double>(std::gcd(part.zone_counts[c], part.zone_counts[c + 1]));
    offset += (1.0 / next - 1.0 / top) / 2.0 + common / (2.0 * top * next);
    offset -= std::floor(offset);
  }
  return part;
}

inline PointSet eq_area_centers(std::size_t n) { return eq_partition(n).centers(); }

// ---------------------------------------------------------------------------
// Geometric diagnostics

namespace detail {

inline double nearest_angle(const UnitPoint& q, const PointSet& set) {
  double best = -1.0;
  for (const auto& p : set) {
    best = std::max(best, q.dot(p));
  }
  return std::acos(std::clamp(best, -1.0, 1.0));
}

// Indices of the k points of `set` nearest to q, closest first.
inline std::vector<std::size_t> nearest_indices(const UnitPoint& q, const PointSet& set, std::size_t k) {
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return q.dot(set[a]) > q.dot(set[b]); });
  idx.resize(k);
  return idx;
}

// Points equidistant from the nearest set points of a candidate: Voronoi
// vertex and edge candidates around it.
inline std::vector<UnitPoint> refinement_candidates(const UnitPoint& q, const PointSet& set) {
  std::vector<UnitPoint> out;
  const auto near = nearest_indices(q, set, 5);
  const Eigen::Vector3d qv(q.x(), q.y(), q.z());
  auto vec = [&](std::size_t i) { return Eigen::Vector3d(set[i].x(), set[i].y(), set[i].z()); };
  auto push = [&](const Eigen::Vector3d& v) {
    if (v.norm() > 1e-14) {
      out.push_back(UnitPoint::normalized(v.x(), v.y(), v.z()));
    }
  };
  push(-vec(near[0]));
  for (std::size_t i = 0; i < near.size(); ++i) {
    for (std::size_t j = i + 1; j < near.size(); ++j) {
      const Eigen::Vector3d a = vec(near[i]);
      const Eigen::Vector3d b = vec(near[j]);
      const Eigen::Vector3d d = a - b;
      if (d.squaredNorm() > 0.0) {
        push(qv - (qv.dot(d) / d.squaredNorm()) * d);
      }
      push(-(a + b));
      for (std::size_t k = j + 1; k < near.size(); ++k) {
        Eigen::Vector3d n = (b - a).cross(vec(near[k]) - a);
        if (n.dot(qv) < 0.0) {
          n = -n;
        }
        push(n);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Covering radius max_x min_i d(x, x_i) in radians.
///
/// Maximizes the nearest-point distance over a spiral grid of 100 * |set|
/// points, then re-evaluates the Voronoi vertex and edge candidates around the
/// best grid points. The result is a lower bound of the true value and is
/// exact whenever the best grid points fall in the right Voronoi cells.
inline double mesh_norm(const PointSet& set) {
  const std::size_t grid_size = std::max<std::size_t>(100 * set.size(), 2);
  const PointSet grid = generate_spiral(grid_size);
  const Eigen::MatrixX3d pts = set.coordinates();

  std::vector<double> nearest_dot(grid_size);
  constexpr std::size_t block = 4096;
  for (std::size_t start = 0; start < grid_size; start += block) {
    const std::size_t len = std::min(block, grid_size - start);
    Eigen::MatrixX3d g(len, 3);
    for (std::size_t i = 0; i < len; ++i) {
      g(i, 0) = grid[start + i].x();
      g(i, 1) = grid[start + i].y();
      g(i, 2) = grid[start + i].z();
    }
    const Eigen::MatrixXd dots = g * pts.transpose();
    for (std::size_t i = 0; i < len; ++i) {
      nearest_dot[start + i] = dots.row(static_cast<Eigen::Index>(i)).maxCoeff();
    }
  }

  std::vector<std::size_t> order(grid_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min<std::size_t>(grid_size, 200);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return nearest_dot[a] < nearest_dot[b]; });

  double best = std::acos(std::clamp(nearest_dot[order[0]], -1.0, 1.0));
  for (std::size_t r = 0; r < keep; ++r) {
    for (const auto& c : detail::refinement_candidates(grid[order[r]], set)) {
      best = std::max(best, detail::nearest_angle(c, set));
    }
  }
  return best;
}

/// Half the minimum pairwise geodesic distance, in radians.
inline double separation_radius(const PointSet& set) {
  if (set.size() < 2) {
    throw std::invalid_argument("separation_radius needs at least two points");
  }
  double min_chord = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) {
      min_chord = std::min(min_chord, chord_distance(set[i], set[j]));
    }
  }
  return std::asin(std::min(1.0, min_chord / 2.0));
}

}  // namespace sphsketch
