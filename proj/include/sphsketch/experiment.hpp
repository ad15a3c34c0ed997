#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "sphsketch/errors.hpp"
#include "sphsketch/kernels.hpp"
#include "sphsketch/legendre.hpp"
#include "sphsketch/sketched_rls.hpp"
#include "sphsketch/sphere_points.hpp"
#include "sphsketch/synthetic_data.hpp"

namespace sphsketch {

// ---------------------------------------------------------------------------
// Seeds

/// SplitMix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform integer in [0, n) by rejection, independent of the standard library's distributions.
inline std::uint64_t uniform_below(std::mt19937_64& engine, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t r = engine();
  while (r < threshold) {
    r = engine();
  }
  return r % n;
}

// ---------------------------------------------------------------------------
// Design files

/// Design point files follow the ssTTT.NNNNN naming; returns the file for degree t.
inline std::filesystem::path find_design_file(const std::filesystem::path& dir, int t) {
  char prefix[16];
  std::snprintf(prefix, sizeof(prefix), "ss%03d.", t);
  std::error_code ec;
  if (std::filesystem::is_directory(dir, ec)) {
    std::vector<std::filesystem::path> hits;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().filename().string().rfind(prefix, 0) == 0) {
        hits.push_back(entry.path());
      }
    }
    if (!hits.empty()) {
      std::sort(hits.begin(), hits.end());
      return hits.front();
    }
  }
  throw missing_file_error("no design file " + std::string(prefix) + "* for degree " + std::to_string(t) + " in " +
                           dir.string());
}

/// Loads and certifies the t-design from `dir`.
inline PointSet load_design(const std::filesystem::path& dir, int t, double tolerance = kDefaultDesignTolerance) {
  return certify_design(load_point_file(find_design_file(dir, t)), t, tolerance);
}

// ---------------------------------------------------------------------------
// Sketch selection

struct FirstSketch {
  std::size_t m = 0;
};
struct RandomSketch {
  std::size_t m = 0;
  std::uint64_t seed = 0;
};
struct DesignSketch {
  int s_star = 1;
  std::filesystem::path design_dir;
};
using SketchMethod = std::variant<FirstSketch, RandomSketch, DesignSketch>;

inline std::string method_name(const SketchMethod& method) {
  switch (method.index()) {
    case 0:
      return "first";
    case 1:
      return "random";
    default:
      return "design";
  }
}

inline PointSet select_sketch(const SketchMethod& method, const PointSet& training) {
  auto check_m = [&](std::size_t m) {
    if (m < 1 || m > training.size()) {
      throw std::invalid_argument("sketch size " + std::to_string(m) + " outside [1, " +
                                  std::to_string(training.size()) + "]");
    }
  };
  if (const auto* first = std::get_if<FirstSketch>(&method)) {
    check_m(first->m);
    std::vector<std::size_t> idx(first->m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return training.subset(idx, "first(" + std::to_string(first->m) + ")");
  }
  if (const auto* random = std::get_if<RandomSketch>(&method)) {
    check_m(random->m);
    // partial Fisher-Yates; chosen indices returned in ascending order
    std::vector<std::size_t> idx(training.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 engine(random->seed);
    for (std::size_t i = 0; i < random->m; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(engine, training.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(random->m);
    std::sort(idx.begin(), idx.end());
    return training.subset(idx, "random(" + std::to_string(random->m) + "," + std::to_string(random->seed) + ")");
  }
  const auto& design = std::get<DesignSketch>(method);
  return load_design(design.design_dir, design.s_star);
}

// ---------------------------------------------------------------------------
// Hyperparameter grids

enum class KernelFamily { gaussian, wendland };

inline KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian") {
    return KernelFamily::gaussian;
  }
  if (name == "wendland") {
    return KernelFamily::wendland;
  }
  throw config_error("unknown kernel family '" + name + "'");
}

inline KernelFamily default_family(const TargetFunction& target) {
  return target.id() == "f1" ? KernelFamily::gaussian : KernelFamily::wendland;
}

struct GridSpec {
  std::vector<double> lambdas;  // descending
  std::vector<double> sigmas;   // Gaussian family only

  void validate(KernelFamily family) const {
    if (lambdas.empty()) {
      throw config_error("lambda grid is empty");
    }
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      if (!(lambdas[i] > 0.0) || !std::isfinite(lambdas[i]) || (i > 0 && !(lambdas[i] < lambdas[i - 1]))) {
        throw config_error("lambda grid must be positive and strictly descending");
      }
    }
    if (family == KernelFamily::gaussian) {
      if (sigmas.empty()) {
        throw config_error("Gaussian grid search needs a nonempty sigma grid");
      }
      for (double s : sigmas) {
        if (!(s > 0.0) || !std::isfinite(s)) {
          throw config_error("sigma grid values must be positive");
        }
      }
    }
  }
};

/// {base^-q : q = 0, 1, ...} restricted to values > floor, descending.
inline std::vector<double> geometric_lambda_grid(double base, double floor = 1e-10) {
  std::vector<double> out;
  for (int q = 0;; ++q) {
    const double v = std::pow(base, -q);
    if (!(v > floor)) {
      break;
    }
    out.push_back(v);
  }
  return out;
}

/// count values equally spaced in log between lo and hi, ascending.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = lo * std::pow(hi / lo, f);
  }
  return out;
}

/// 2^-q for the Franke target, 1.5^-q for the Wendland target.
inline std::vector<double> default_lambda_grid(const TargetFunction& target) {
  return geometric_lambda_grid(target.id() == "f1" ? 2.0 : 1.5);
}

inline std::vector<double> default_sigma_grid(bool noise_free) {
  return noise_free ? log_spaced(0.028, 0.28, 10) : log_spaced(0.1, 1.0, 10);
}

// ---------------------------------------------------------------------------
// Grid search

struct ResultRow {
  std::string target;
  double delta = 0.0;
  std::string method;
  int s_star = 0;
  std::size_t m = 0;
  double sr = 0.0;
  double lambda = 0.0;
  std::optional<double> sigma;
  double rmse = 0.0;
  double fit_seconds = 0.0;
};

struct TestSet {
  PointSet inputs;
  Eigen::VectorXd labels;
};

/// Noise-free test set on n generalized spiral points.
inline TestSet make_test_set(const TargetFunction& target, std::size_t n) {
  PointSet points = generate_spiral(n);
  Eigen::VectorXd labels = target(points);
  return TestSet{std::move(points), std::move(labels)};
}

struct GridCell {
  double lambda = 0.0;
  std::optional<double> sigma;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double fit_seconds = 0.0;
  std::string error;  // nonempty when the fit failed
};

struct GridSearchResult {
  ResultRow best;
  std::vector<GridCell> cells;
};

namespace detail {

// Lower RMSE wins; ties go to the larger lambda, then the larger sigma.
inline bool better_cell(const GridCell& a, const GridCell& b) {
  if (a.rmse != b.rmse) {
    return a.rmse < b.rmse;
  }
  if (a.lambda != b.lambda) {
    return a.lambda > b.lambda;
  }
  return a.sigma.value_or(0.0) > b.sigma.value_or(0.0);
}

inline std::vector<std::optional<double>> sigma_axis(KernelFamily family, const GridSpec& grid) {
  if (family == KernelFamily::wendland) {
    return {std::nullopt};
  }
  return {grid.sigmas.begin(), grid.sigmas.end()};
}

inline KernelSpec kernel_for(KernelFamily family, std::optional<double> sigma) {
  return family == KernelFamily::gaussian ? KernelSpec::gaussian(*sigma) : KernelSpec::wendland();
}

inline GridSearchResult finish_grid(std::vector<GridCell> cells, ResultRow row) {
  const GridCell* best = nullptr;
  for (const auto& c : cells) {
    if (c.error.empty() && std::isfinite(c.rmse) && (best == nullptr || better_cell(c, *best))) {
      best = &c;
    }
  }
  if (best == nullptr) {
    throw numerical_error("grid search: every (lambda, sigma) pair failed" +
                          (cells.empty() ? std::string() : ": " + cells.front().error));
  }
  row.lambda = best->lambda;
  row.sigma = best->sigma;
  row.rmse = best->rmse;
  row.fit_seconds = best->fit_seconds;
  return GridSearchResult{row, std::move(cells)};
}

inline bool same_points(const PointSet& a, const PointSet& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace detail

namespace detail {

// Sigma values used by any of the grids, in first-seen order.
inline std::vector<std::optional<double>> sigma_union(KernelFamily family, const std::vector<GridSpec>& grids) {
  std::vector<std::optional<double>> out;
  for (const auto& g : grids) {
    for (const auto sigma : sigma_axis(family, g)) {
      if (std::find(out.begin(), out.end(), sigma) == out.end()) {
        out.push_back(sigma);
      }
    }
  }
  return out;
}

inline bool grid_uses(KernelFamily family, const GridSpec& grid, std::optional<double> sigma) {
  const auto axis = sigma_axis(family, grid);
  return std::find(axis.begin(), axis.end(), sigma) != axis.end();
}

inline void check_datasets(const std::vector<Dataset>& data, const std::vector<GridSpec>& grids,
                           KernelFamily family) {
  if (data.empty() || data.size() != grids.size()) {
    throw std::invalid_argument("grid search needs one grid per dataset");
  }
  for (std::size_t d = 0; d < data.size(); ++d) {
    grids[d].validate(family);
    if (!same_points(data[d].inputs, data.front().inputs)) {
      throw std::invalid_argument("grid search datasets must share their inputs");
    }
  }
}

inline Eigen::MatrixXd label_columns(const std::vector<Dataset>& data, const std::vector<std::size_t>& which) {
  Eigen::MatrixXd y(data.front().labels.size(), static_cast<Eigen::Index>(which.size()));
  for (std::size_t j = 0; j < which.size(); ++j) {
    y.col(static_cast<Eigen::Index>(j)) = data[which[j]].labels;
  }
  return y;
}

inline ResultRow row_for(const Dataset& data, std::size_t m) {
  ResultRow row;
  row.target = data.target.id();
  row.delta = data.noise.delta;
  row.m = m;
  row.sr = static_cast<double>(m) / static_cast<double>(data.inputs.size());
  return row;
}

// Runs `score(sigma, kernel, users)` for each sigma, where `users` lists the
// datasets whose grid contains sigma, then picks the best cell per dataset.
template <class Score>
std::vector<GridSearchResult> search_datasets(const std::vector<Dataset>& data, const std::vector<GridSpec>& grids,
                                              KernelFamily family, std::size_t m, Score score) {
  check_datasets(data, grids, family);
  std::vector<std::vector<GridCell>> cells(data.size());
  for (const auto sigma : sigma_union(family, grids)) {
    std::vector<std::size_t> users;
    for (std::size_t d = 0; d < data.size(); ++d) {
      if (grid_uses(family, grids[d], sigma)) {
        users.push_back(d);
      }
    }
    score(sigma, kernel_for(family, sigma), users, cells);
  }
  std::vector<GridSearchResult> out;
  for (std::size_t d = 0; d < data.size(); ++d) {
    out.push_back(finish_grid(std::move(cells[d]), row_for(data[d], m)));
  }
  return out;
}

}  // namespace detail

/// Scores every (lambda, sigma) pair of the sketched estimator with the given
/// centers on the test set and keeps the best, separately for each dataset.
/// The datasets must share their inputs; one SketchedPath per sigma serves
/// all of them along the whole lambda axis. Failed pairs are recorded in the
/// cells and excluded.
inline std::vector<GridSearchResult> grid_search_centers(const std::vector<Dataset>& data,
                                                         const std::vector<GridSpec>& grids, const TestSet& test,
                                                         const PointSet& centers, KernelFamily family) {
  auto score = [&](std::optional<double> sigma, const KernelSpec& kernel, const std::vector<std::size_t>& users,
                   std::vector<std::vector<GridCell>>& cells) {
    std::optional<SketchedPath> path;
    Eigen::MatrixXd test_basis;  // test kernel rows mapped to the spectral basis
    std::string setup_error;
    try {
      path.emplace(data.front().inputs, detail::label_columns(data, users), centers, kernel);
      test_basis = cross_matrix(kernel, test.inputs, centers).entries * path->basis();
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (std::size_t j = 0; j < users.size(); ++j) {
      for (double lambda : grids[users[j]].lambdas) {
        GridCell cell{lambda, sigma, std::numeric_limits<double>::quiet_NaN(), 0.0, setup_error};
        if (setup_error.empty()) {
          try {
            const auto start = detail::Clock::now();
            const Eigen::VectorXd beta = path->spectral_coefficients(lambda, static_cast<Eigen::Index>(j));
            detail::require_finite(beta, "coefficients");
            cell.rmse = rmse(test_basis * beta, test.labels);
            cell.fit_seconds = detail::seconds_since(start) + path->setup_seconds();
          } catch (const std::exception& e) {
            cell.error = e.what();
          }
        }
        cells[users[j]].push_back(std::move(cell));
      }
    }
  };
  return detail::search_datasets(data, grids, family, centers.size(), score);
}

inline GridSearchResult grid_search_centers(const Dataset& data, const TestSet& test, const PointSet& centers,
                                            KernelFamily family, const GridSpec& grid) {
  return grid_search_centers(std::vector<Dataset>{data}, std::vector<GridSpec>{grid}, test, centers, family).front();
}

/// Same search for the full kernel ridge estimator (centers = training inputs).
inline std::vector<GridSearchResult> grid_search_full(const std::vector<Dataset>& data,
                                                      const std::vector<GridSpec>& grids, const TestSet& test,
                                                      KernelFamily family) {
  auto score = [&](std::optional<double> sigma, const KernelSpec& kernel, const std::vector<std::size_t>& users,
                   std::vector<std::vector<GridCell>>& cells) {
    std::optional<FullSystem> system;
    Eigen::MatrixXd test_kernel;
    std::string setup_error;
    try {
      system.emplace(data.front().inputs, detail::label_columns(data, users), kernel);
      test_kernel = cross_matrix(kernel, test.inputs, data.front().inputs).entries;
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    // lambda outer so each factorization serves every dataset that uses it
    std::vector<double> lambdas;
    for (std::size_t d : users) {
      for (double l : grids[d].lambdas) {
        if (std::find(lambdas.begin(), lambdas.end(), l) == lambdas.end()) {
          lambdas.push_back(l);
        }
      }
    }
    for (double lambda : lambdas) {
      std::vector<FitResult> fits;
      std::string error = setup_error;
      if (error.empty()) {
        try {
          fits = system->solve_columns(lambda);
        } catch (const std::exception& e) {
          error = e.what();
        }
      }
      for (std::size_t j = 0; j < users.size(); ++j) {
        const auto& grid = grids[users[j]].lambdas;
        if (std::find(grid.begin(), grid.end(), lambda) == grid.end()) {
          continue;
        }
        GridCell cell{lambda, sigma, std::numeric_limits<double>::quiet_NaN(), 0.0, error};
        if (error.empty()) {
          cell.rmse = rmse(test_kernel * fits[j].model.coefficients, test.labels);
          cell.fit_seconds = fits[j].diagnostics.wall_time + system->setup_seconds();
        }
        cells[users[j]].push_back(std::move(cell));
      }
    }
  };
  auto out = detail::search_datasets(data, grids, family, data.front().inputs.size(), score);
  for (auto& r : out) {
    r.best.method = "full";
    r.best.sr = 1.0;
  }
  return out;
}

inline GridSearchResult grid_search_full(const Dataset& data, const TestSet& test, KernelFamily family,
                                         const GridSpec& grid) {
  return grid_search_full(std::vector<Dataset>{data}, std::vector<GridSpec>{grid}, test, family).front();
}

/// Grid search for one sketching method; fills method, s_star, m and sr.
inline ResultRow grid_search(const Dataset& data, const TestSet& test, const SketchMethod& method,
                             KernelFamily family, const GridSpec& grid) {
  const PointSet centers = select_sketch(method, data.inputs);
  ResultRow row = grid_search_centers(data, test, centers, family, grid).best;
  row.method = method_name(method);
  if (const auto* d = std::get_if<DesignSketch>(&method)) {
    row.s_star = d->s_star;
  }
  return row;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::string target = "f2";
  std::optional<KernelFamily> family;  // default by target
  int training_t = 57;
  bool full_scale = false;  // training_t = 141
  std::filesystem::path design_dir = "data/designs";
  std::optional<std::vector<double>> deltas;
  std::uint64_t noise_seed = 1;
  double noise_bound = 10.0;
  std::optional<std::vector<int>> s_stars;
  std::size_t random_seeds = 10;
  std::optional<std::vector<double>> lambdas;
  std::optional<std::vector<double>> sigmas;
  std::optional<std::vector<double>> sigmas_noise_free;
  std::size_t test_points = 10000;
  double field_delta = 0.5;
  int field_s_star = 19;
  std::size_t field_points = 40000;
  /// "full": rows whose center set equals the training set use the full
  /// kernel ridge solver; "sketched": always the sketched solver.
  std::string baseline = "full";
  bool record_timing = false;
  unsigned threads = 1;

  int effective_training_t() const { return full_scale ? 141 : training_t; }
  TargetFunction target_function() const { return TargetFunction::parse(target); }
  KernelFamily kernel_family() const { return family.value_or(default_family(target_function())); }

  GridSpec grid_for(double delta) const {
    GridSpec g;
    g.lambdas = lambdas.value_or(default_lambda_grid(target_function()));
    if (kernel_family() == KernelFamily::gaussian) {
      if (delta == 0.0) {
        g.sigmas = sigmas_noise_free.value_or(default_sigma_grid(true));
      } else {
        g.sigmas = sigmas.value_or(default_sigma_grid(false));
      }
    }
    return g;
  }
};

namespace detail {

template <class T>
T config_get(const nlohmann::json& node, const char* key, const std::string& where) {
  try {
    return node.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(where + "." + key + ": " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& node, std::initializer_list<const char*> keys,
                           const std::string& where) {
  if (!node.is_object()) {
    throw config_error(where + " must be an object");
  }
  for (const auto& [k, v] : node.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end()) {
      throw config_error("unknown key '" + where + "." + k + "'");
    }
  }
}

}  // namespace detail

/// Parses the JSON experiment configuration. Relative design directories are
/// resolved against base_dir.
///
///   {
///     "target": "f2", "kernel": "wendland",
///     "training": {"t": 57, "full_scale": false, "design_dir": "data/designs"},
///     "noise": {"deltas": [0, 0.1], "seed": 1, "bound": 10},
///     "sketch": {"s_stars": [9, 25], "random_seeds": 10},
///     "grid": {"lambdas": [...], "sigmas": [...], "sigmas_noise_free": [...]},
///     "test": {"points": 10000},
///     "field": {"delta": 0.5, "s_star": 19, "points": 40000},
///     "baseline": "full", "record_timing": false, "threads": 1
///   }
inline ExperimentConfig parse_config(const nlohmann::json& root, const std::filesystem::path& base_dir = {}) {
  using detail::config_get;
  detail::reject_unknown(root,
                         {"target", "kernel", "training", "noise", "sketch", "grid", "test", "field", "baseline",
                          "record_timing", "threads"},
                         "config");
  ExperimentConfig c;
  if (root.contains("target")) {
    c.target = config_get<std::string>(root, "target", "config");
    if (c.target != "f1" && c.target != "f2") {
      throw config_error("config.target must be f1 or f2");
    }
  }
  if (root.contains("kernel")) {
    c.family = parse_kernel_family(config_get<std::string>(root, "kernel", "config"));
  }
  if (root.contains("training")) {
    const auto& t = root["training"];
    detail::reject_unknown(t, {"t", "full_scale", "design_dir"}, "training");
    if (t.contains("t")) c.training_t = config_get<int>(t, "t", "training");
    if (t.contains("full_scale")) c.full_scale = config_get<bool>(t, "full_scale", "training");
    if (t.contains("design_dir")) c.design_dir = config_get<std::string>(t, "design_dir", "training");
  }
  if (c.design_dir.is_relative() && !base_dir.empty()) {
    c.design_dir = base_dir / c.design_dir;
  }
  if (root.contains("noise")) {
    const auto& n = root["noise"];
    detail::reject_unknown(n, {"deltas", "seed", "bound"}, "noise");
    if (n.contains("deltas")) c.deltas = config_get<std::vector<double>>(n, "deltas", "noise");
    if (n.contains("seed")) c.noise_seed = config_get<std::uint64_t>(n, "seed", "noise");
    if (n.contains("bound")) c.noise_bound = config_get<double>(n, "bound", "noise");
  }
  if (root.contains("sketch")) {
    const auto& s = root["sketch"];
    detail::reject_unknown(s, {"s_stars", "random_seeds"}, "sketch");
    if (s.contains("s_stars")) c.s_stars = config_get<std::vector<int>>(s, "s_stars", "sketch");
    if (s.contains("random_seeds")) c.random_seeds = config_get<std::size_t>(s, "random_seeds", "sketch");
  }
  if (root.contains("grid")) {
    const auto& g = root["grid"];
    detail::reject_unknown(g, {"lambdas", "sigmas", "sigmas_noise_free"}, "grid");
    if (g.contains("lambdas")) c.lambdas = config_get<std::vector<double>>(g, "lambdas", "grid");
    if (g.contains("sigmas")) c.sigmas = config_get<std::vector<double>>(g, "sigmas", "grid");
    if (g.contains("sigmas_noise_free"))
      c.sigmas_noise_free = config_get<std::vector<double>>(g, "sigmas_noise_free", "grid");
  }
  if (root.contains("test")) {
    const auto& t = root["test"];
    detail::reject_unknown(t, {"points"}, "test");
    if (t.contains("points")) c.test_points = config_get<std::size_t>(t, "points", "test");
  }
  if (root.contains("field")) {
    const auto& f = root["field"];
    detail::reject_unknown(f, {"delta", "s_star", "points"}, "field");
    if (f.contains("delta")) c.field_delta = config_get<double>(f, "delta", "field");
    if (f.contains("s_star")) c.field_s_star = config_get<int>(f, "s_star", "field");
    if (f.contains("points")) c.field_points = config_get<std::size_t>(f, "points", "field");
  }
  if (root.contains("baseline")) {
    c.baseline = config_get<std::string>(root, "baseline", "config");
    if (c.baseline != "full" && c.baseline != "sketched") {
      throw config_error("config.baseline must be 'full' or 'sketched'");
    }
  }
  if (root.contains("record_timing")) c.record_timing = config_get<bool>(root, "record_timing", "config");
  if (root.contains("threads")) c.threads = std::max(1u, config_get<unsigned>(root, "threads", "config"));

  if (c.effective_training_t() < 1 || c.effective_training_t() % 2 == 0) {
    throw config_error("training design degree must be a positive odd integer");
  }
  if (c.test_points < 2 || c.field_points < 2) {
    throw config_error("test and field grids need at least 2 points");
  }
  if (c.random_seeds < 1) {
    throw config_error("sketch.random_seeds must be >= 1");
  }
  if (!(c.noise_bound > 0.0)) {
    throw config_error("noise.bound must be positive");
  }
  if (c.deltas) {
    for (double d : *c.deltas) {
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw config_error("noise.deltas must be finite and >= 0");
      }
    }
  }
  if (c.s_stars) {
    for (int s : *c.s_stars) {
      if (s < 1 || s % 2 == 0) {
        throw config_error("sketch.s_stars must be positive odd integers");
      }
    }
  }
  (void)c.grid_for(0.1);  // validates target
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw missing_file_error("cannot open config " + path.string());
  }
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path.string() + ": " + e.what());
  }
  return parse_config(root, path.parent_path());
}

// ---------------------------------------------------------------------------
// Simulations

namespace detail {

/// Runs fn(i) for i in [0, count) on up to `threads` threads; results by index.
template <class T>
std::vector<T> parallel_map(std::size_t count, unsigned threads, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < count; i += stride) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t pool = std::min<std::size_t>(std::max(1u, threads), count);
  if (pool <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < pool; ++w) {
      workers.emplace_back(work, w, pool);
    }
    for (auto& t : workers) {
      t.join();
    }
  }
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) {
      std::rethrow_exception(errors[i]);
    }
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

inline void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.target, a.delta, a.s_star, a.method) < std::tie(b.target, b.delta, b.s_star, b.method);
  });
}

}  // namespace detail

/// Shared setup: training design, noise-free spiral test set, per-delta data.
class ExperimentContext {
 public:
  explicit ExperimentContext(const ExperimentConfig& config)
      : config_(config),
        target_(config.target_function()),
        training_(load_design(config.design_dir, config.effective_training_t())),
        test_(make_test_set(target_, config.test_points)) {}

  const ExperimentConfig& config() const { return config_; }
  const PointSet& training() const { return training_; }
  const TestSet& test() const { return test_; }
  const TargetFunction& target() const { return target_; }

  /// The same standard-normal draws are scaled by every delta.
  Dataset dataset(double delta) const {
    return make_dataset(training_, target_, NoiseModel{delta, config_.noise_bound, config_.noise_seed});
  }

  std::uint64_t random_seed(std::size_t replicate) const {
    return splitmix64(config_.noise_seed ^ (0x5eed0000ULL + replicate));
  }

  std::vector<Dataset> datasets(const std::vector<double>& deltas) const {
    std::vector<Dataset> out;
    for (double delta : deltas) {
      out.push_back(dataset(delta));
    }
    return out;
  }

  /// Best grid cell for the given centers, one row per dataset; uses the full
  /// solver when the centers are the training set and the baseline policy
  /// allows it.
  std::vector<ResultRow> search(const std::vector<Dataset>& data, const PointSet& centers) const {
    std::vector<GridSpec> grids;
    for (const auto& d : data) {
      grids.push_back(config_.grid_for(d.noise.delta));
    }
    const auto results = config_.baseline == "full" && detail::same_points(centers, training_)
                             ? grid_search_full(data, grids, test_, config_.kernel_family())
                             : grid_search_centers(data, grids, test_, centers, config_.kernel_family());
    std::vector<ResultRow> rows;
    for (const auto& r : results) {
      rows.push_back(r.best);
    }
    return rows;
  }

  ResultRow search(const Dataset& data, const PointSet& centers) const {
    return search(std::vector<Dataset>{data}, centers).front();
  }

 private:
  ExperimentConfig config_;
  TargetFunction target_;
  PointSet training_;
  TestSet test_;
};

inline std::vector<int> odd_degrees_up_to(int t) {
  std::vector<int> out;
  for (int s = 1; s <= t; s += 2) {
    out.push_back(s);
  }
  return out;
}

/// Design sketching for every odd s* <= t and every delta; the s* = t row is
/// the full regularized least squares baseline.
inline std::vector<ResultRow> run_simulation1(const ExperimentConfig& config) {
  const ExperimentContext ctx(config);
  const int t = config.effective_training_t();
  const auto deltas = config.deltas.value_or(std::vector<double>{0.0, 0.001, 0.1, 0.5});
  std::vector<int> s_stars = config.s_stars.value_or(odd_degrees_up_to(t));
  std::erase_if(s_stars, [t](int s) { return s > t; });

  const std::vector<Dataset> data = ctx.datasets(deltas);
  const auto parts = detail::parallel_map<std::vector<ResultRow>>(s_stars.size(), config.threads, [&](std::size_t i) {
    const PointSet centers = s_stars[i] == t ? ctx.training() : load_design(config.design_dir, s_stars[i]);
    auto rows = ctx.search(data, centers);
    for (auto& row : rows) {
      row.method = "design";
      row.s_star = s_stars[i];
    }
    return rows;
  });
  std::vector<ResultRow> rows;
  for (const auto& part : parts) {
    rows.insert(rows.end(), part.begin(), part.end());
  }
  detail::sort_rows(rows);
  return rows;
}

struct RandomReplicate {
  std::string target;
  double delta = 0.0;
  int s_star = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::optional<double> sigma;
  double rmse = 0.0;
};

struct Simulation2Result {
  /// Three rows (design, first, random) per (delta, s*); the random row holds
  /// the mean RMSE and mean fit time over the replicates.
  std::vector<ResultRow> rows;
  std::vector<RandomReplicate> replicates;
};

/// First / Random / Design sketching with matched sizes m = |s*-design|.
inline Simulation2Result run_simulation2(const ExperimentConfig& config) {
  const ExperimentContext ctx(config);
  const int t = config.effective_training_t();
  const auto deltas =
      config.deltas.value_or(std::vector<double>{0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.5});
  std::vector<int> s_stars = config.s_stars.value_or(std::vector<int>{9, 25, 41, 57});
  std::erase_if(s_stars, [t](int s) { return s > t; });

  const std::vector<Dataset> data = ctx.datasets(deltas);
  // results[s][task][delta]; task 0: design, task 1: first, tasks 2..: random replicates
  std::vector<std::vector<std::vector<ResultRow>>> results;
  std::vector<std::size_t> sizes;
  for (int s_star : s_stars) {
    const PointSet design = s_star == t ? ctx.training() : load_design(config.design_dir, s_star);
    const std::size_t m = design.size();
    if (m > ctx.training().size()) {
      throw config_error("s* = " + std::to_string(s_star) + " design has more points than the training set");
    }
    sizes.push_back(m);
    const std::size_t tasks = 2 + config.random_seeds;
    results.push_back(detail::parallel_map<std::vector<ResultRow>>(tasks, config.threads, [&](std::size_t i) {
      SketchMethod method = DesignSketch{s_star, config.design_dir};
      PointSet centers = design;
      if (i == 1) {
        method = FirstSketch{m};
        centers = select_sketch(method, ctx.training());
      } else if (i >= 2) {
        method = RandomSketch{m, ctx.random_seed(i - 2)};
        centers = select_sketch(method, ctx.training());
      }
      auto rows = ctx.search(data, centers);
      for (auto& row : rows) {
        row.method = method_name(method);
        row.s_star = s_star;
      }
      return rows;
    }));
  }

  Simulation2Result out;
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    for (std::size_t s = 0; s < s_stars.size(); ++s) {
      const auto& task = results[s];
      out.rows.push_back(task[0][d]);
      out.rows.push_back(task[1][d]);
      ResultRow mean = task[2][d];
      mean.lambda = std::numeric_limits<double>::quiet_NaN();
      mean.sigma.reset();
      double rmse_sum = 0.0;
      double time_sum = 0.0;
      for (std::size_t r = 2; r < task.size(); ++r) {
        const ResultRow& row = task[r][d];
        rmse_sum += row.rmse;
        time_sum += row.fit_seconds;
        out.replicates.push_back(RandomReplicate{row.target, deltas[d], s_stars[s], sizes[s], ctx.random_seed(r - 2),
                                                 row.lambda, row.sigma, row.rmse});
      }
      mean.rmse = rmse_sum / static_cast<double>(config.random_seeds);
      mean.fit_seconds = time_sum / static_cast<double>(config.random_seeds);
      out.rows.push_back(mean);
    }
  }
  detail::sort_rows(out.rows);
  return out;
}

/// Pointwise fields on a grid: exact target, one noisy sample, prediction,
/// and absolute error |prediction - exact|.
struct ErrorField {
  PointSet grid;
  Eigen::VectorXd exact;
  Eigen::VectorXd noisy;
  Eigen::VectorXd prediction;
  Eigen::VectorXd error;
};

inline ErrorField export_error_field(const FittedModel& model, const TargetFunction& target, const PointSet& grid,
                                     const NoiseModel& noise) {
  ErrorField f{grid, target(grid), {}, predict(model, grid), {}};
  f.noisy = f.exact + sample_truncated_gaussian(noise, grid.size());
  f.error = (f.prediction - f.exact).cwiseAbs();
  return f;
}

struct Simulation3Result {
  ResultRow row;
  ErrorField field;
};

/// Grid-searched fit with the s*-design at one noise level, exported on a
/// dense spiral grid.
inline Simulation3Result run_simulation3(const ExperimentConfig& config) {
  const ExperimentContext ctx(config);
  const int t = config.effective_training_t();
  const int s_star = config.field_s_star;
  if (s_star > t) {
    throw config_error("field.s_star exceeds the training design degree");
  }
  const Dataset data = ctx.dataset(config.field_delta);
  const PointSet centers = s_star == t ? ctx.training() : load_design(config.design_dir, s_star);
  ResultRow row = ctx.search(data, centers);
  row.method = "design";
  row.s_star = s_star;

  const KernelSpec kernel = detail::kernel_for(config.kernel_family(), row.sigma);
  const FittedModel model = fit_sketched(data.inputs, data.labels, centers, kernel, row.lambda).model;
  const NoiseModel field_noise{config.field_delta, config.noise_bound, splitmix64(config.noise_seed ^ 0xf1e1dULL)};
  return Simulation3Result{row, export_error_field(model, ctx.target(), generate_spiral(config.field_points),
                                                   field_noise)};
}

// ---------------------------------------------------------------------------
// CSV output

inline constexpr const char* kResultsHeader = "target,delta,method,s_star,m,sr,lambda,sigma,rmse,fit_seconds";

namespace detail {

inline std::string optional_real(std::optional<double> v) {
  return v && std::isfinite(*v) ? format_real(*v) : std::string();
}

}  // namespace detail

/// fit_seconds is left empty unless record_timing is set, so reruns with the
/// same configuration produce identical files.
inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool record_timing) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.target << ',' << format_real(r.delta) << ',' << r.method << ',' << r.s_star << ',' << r.m << ','
        << format_real(r.sr) << ',' << detail::optional_real(r.lambda) << ',' << detail::optional_real(r.sigma)
        << ',' << format_real(r.rmse) << ',' << (record_timing ? format_real(r.fit_seconds) : std::string()) << '\n';
  }
}

inline void write_replicates_csv(std::ostream& out, const std::vector<RandomReplicate>& reps) {
  out << "target,delta,s_star,m,seed,lambda,sigma,rmse\n";
  for (const auto& r : reps) {
    out << r.target << ',' << format_real(r.delta) << ',' << r.s_star << ',' << r.m << ',' << r.seed << ','
        << format_real(r.lambda) << ',' << detail::optional_real(r.sigma) << ',' << format_real(r.rmse) << '\n';
  }
}

/// Mean and standard deviation of the random-sketch RMSE per (delta, s*).
inline void write_random_summary_csv(std::ostream& out, const std::vector<RandomReplicate>& reps) {
  out << "target,delta,s_star,m,replicates,rmse_mean,rmse_std\n";
  std::size_t i = 0;
  while (i < reps.size()) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < reps.size() && reps[j].delta == reps[i].delta && reps[j].s_star == reps[i].s_star) {
      sum += reps[j].rmse;
      ++j;
    }
    const double count = static_cast<double>(j - i);
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t k = i; k < j; ++k) {
      ss += (reps[k].rmse - mean) * (reps[k].rmse - mean);
    }
    const double sd = count > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    out << reps[i].target << ',' << format_real(reps[i].delta) << ',' << reps[i].s_star << ',' << reps[i].m << ','
        << (j - i) << ',' << format_real(mean) << ',' << format_real(sd) << '\n';
    i = j;
  }
}

inline void write_error_field_csv(std::ostream& out, const ErrorField& f) {
  out << "x,y,z,exact,noisy,prediction,abs_error\n";
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const auto& p = f.grid[i];
    out << format_real(p.x()) << ',' << format_real(p.y()) << ',' << format_real(p.z()) << ','
        << format_real(f.exact(k)) << ',' << format_real(f.noisy(k)) << ',' << format_real(f.prediction(k)) << ','
        << format_real(f.error(k)) << '\n';
  }
}

}  // namespace sphsketch
