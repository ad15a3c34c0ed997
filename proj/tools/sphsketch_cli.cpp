// Command-line front end: point generation, design verification, fitting,
// data generation and the simulation drivers.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "sphsketch/sphsketch.hpp"

namespace fs = std::filesystem;
using namespace sphsketch;

namespace {

enum ExitCode { kOk = 0, kDesignNotVerified = 1, kConfigError = 2, kMissingData = 3, kNumericalFailure = 4 };

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw config_error("cannot write " + path.string());
  }
  return out;
}

int gen_points(const std::string& kind, std::size_t n, const fs::path& out) {
  if (n < 1) {
    throw config_error("--n must be >= 1");
  }
  PointSet set = [&] {
    if (kind == "spiral") {
      return generate_spiral(n);
    }
    return eq_area_centers(n);
  }();
  write_point_file(out, set);
  return kOk;
}

int verify(const fs::path& file, int t_max, double tol) {
  if (t_max < 0) {
    throw config_error("--t-max must be >= 0");
  }
  const PointSet set = load_point_file(file);
  const DesignReport report = verify_design(set, t_max, tol);
  std::printf("file      %s\n", file.string().c_str());
  std::printf("points    %zu\n", set.size());
  std::printf("tolerance %.3e\n", report.tolerance);
  std::printf("%5s  %-24s %s\n", "k", "residual", "ok");
  for (const auto& [k, r] : report.residuals) {
    std::printf("%5d  %-24.17g %s\n", k, r, r <= tol ? "yes" : "no");
  }
  std::printf("max_verified_degree %d\n", report.max_verified_degree);
  return report.max_verified_degree >= t_max ? kOk : kDesignNotVerified;
}

int fit(const fs::path& train, const fs::path& labels_file, const fs::path& centers_file, const std::string& kernel,
        double lambda, const fs::path& out) {
  KernelSpec spec = KernelSpec::wendland();
  try {
    spec = KernelSpec::parse(kernel);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  if (!(lambda >= 0.0)) {
    throw config_error("--lambda must be >= 0");
  }
  const PointSet inputs = load_point_file(train);
  const Eigen::VectorXd labels = read_labels_csv(labels_file);
  const PointSet centers = load_point_file(centers_file);
  if (static_cast<std::size_t>(labels.size()) != inputs.size()) {
    throw config_error(std::to_string(inputs.size()) + " training points but " + std::to_string(labels.size()) +
                       " labels");
  }
  const FitResult result = fit_sketched(inputs, labels, centers, spec, lambda);
  auto stream = open_output(out);
  write_model(stream, result.model);
  std::fprintf(stderr, "fitted %zu centers, rank %zu, %.3f s\n", centers.size(), result.diagnostics.rank_used,
               result.diagnostics.wall_time);
  return kOk;
}

int predict_cmd(const fs::path& model_file, const fs::path& points_file, const fs::path& out) {
  const FittedModel model = read_model_file(model_file);
  const PointSet points = load_point_file(points_file);
  const Eigen::VectorXd values = predict(model, points);
  auto stream = open_output(out);
  stream << "x,y,z,prediction\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    stream << format_real(points[i].x()) << ',' << format_real(points[i].y()) << ',' << format_real(points[i].z())
           << ',' << format_real(values(static_cast<Eigen::Index>(i))) << '\n';
  }
  return kOk;
}

int gen_data(const fs::path& design, const std::string& target, double delta, std::uint64_t seed,
             const fs::path& out) {
  if (!(delta >= 0.0)) {
    throw config_error("--delta must be >= 0");
  }
  const PointSet inputs = load_point_file(design);
  const Dataset data = make_dataset(inputs, TargetFunction::parse(target), NoiseModel{delta, 10.0, seed});
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  write_dataset_csv(out, data);
  return kOk;
}

void write_rows(const fs::path& path, const std::vector<ResultRow>& rows, bool timing) {
  auto out = open_output(path);
  write_results_csv(out, rows, timing);
}

int simulate(int sim, const fs::path& config_file, const fs::path& out_dir) {
  const ExperimentConfig config = load_config(config_file);
  fs::create_directories(out_dir);
  const std::string stem = "sim" + std::to_string(sim);
  if (sim == 1) {
    write_rows(out_dir / (stem + "_results.csv"), run_simulation1(config), config.record_timing);
  } else if (sim == 2) {
    const auto result = run_simulation2(config);
    write_rows(out_dir / (stem + "_results.csv"), result.rows, config.record_timing);
    auto reps = open_output(out_dir / (stem + "_random_replicates.csv"));
    write_replicates_csv(reps, result.replicates);
    auto summary = open_output(out_dir / (stem + "_random_summary.csv"));
    write_random_summary_csv(summary, result.replicates);
  } else {
    const auto result = run_simulation3(config);
    write_rows(out_dir / (stem + "_results.csv"), {result.row}, config.record_timing);
    auto field = open_output(out_dir / (stem + "_error_field.csv"));
    write_error_field_csv(field, result.field);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketched regularized least squares on the sphere"};
  app.require_subcommand(1);

  std::string kind;
  std::size_t n = 0;
  fs::path out;
  auto* gen = app.add_subcommand("gen-points", "Write a spiral or equal-area point set");
  gen->add_option("--kind", kind, "spiral or eq-centers")->required()->check(CLI::IsMember({"spiral", "eq-centers"}));
  gen->add_option("--n", n, "number of points")->required();
  gen->add_option("--out", out, "output point file")->required();

  fs::path file;
  int t_max = 0;
  double tol = kDefaultDesignTolerance;
  auto* ver = app.add_subcommand("verify-design", "Report design residuals r_k for k <= t-max");
  ver->add_option("--file", file, "point file")->required();
  ver->add_option("--t-max", t_max, "highest degree to check")->required();
  ver->add_option("--tol", tol, "residual tolerance")->capture_default_str();

  fs::path train, labels, centers;
  std::string kernel;
  double lambda = 0.0;
  auto* fitc = app.add_subcommand("fit", "Fit a sketched model and write it to a model file");
  fitc->add_option("--train", train, "training point file")->required();
  fitc->add_option("--labels", labels, "label CSV")->required();
  fitc->add_option("--centers", centers, "center point file")->required();
  fitc->add_option("--kernel", kernel, "gaussian:<sigma> or wendland")->required();
  fitc->add_option("--lambda", lambda, "regularization parameter")->required();
  fitc->add_option("--out", out, "output model file")->required();

  fs::path model_file, points_file;
  auto* pred = app.add_subcommand("predict", "Evaluate a model file at points");
  pred->add_option("--model", model_file, "model file")->required();
  pred->add_option("--points", points_file, "point file")->required();
  pred->add_option("--out", out, "output CSV")->required();

  fs::path design;
  std::string target;
  double delta = 0.0;
  std::uint64_t seed = 0;
  auto* data = app.add_subcommand("gen-data", "Sample noisy labels of a target function");
  data->add_option("--design", design, "input point file")->required();
  data->add_option("--target", target, "f1 or f2")->required()->check(CLI::IsMember({"f1", "f2"}));
  data->add_option("--delta", delta, "noise standard deviation")->required();
  data->add_option("--seed", seed, "noise seed")->required();
  data->add_option("--out", out, "output CSV")->required();

  int sim = 0;
  fs::path config, out_dir;
  auto* simc = app.add_subcommand("simulate", "Run a simulation study and write CSV results");
  simc->add_option("--sim", sim, "1, 2 or 3")->required()->check(CLI::IsMember({1, 2, 3}));
  simc->add_option("--config", config, "JSON configuration")->required();
  simc->add_option("--out-dir", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return gen_points(kind, n, out);
    if (*ver) return verify(file, t_max, tol);
    if (*fitc) return fit(train, labels, centers, kernel, lambda, out);
    if (*pred) return predict_cmd(model_file, points_file, out);
    if (*data) return gen_data(design, target, delta, seed, out);
    if (*simc) return simulate(sim, config, out_dir);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const missing_file_error& e) {
    std::cerr << "missing file: " << e.what() << '\n';
    return kMissingData;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kMissingData;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
  return kOk;
}
