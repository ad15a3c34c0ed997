// Fits the 20-center Wendland target from noisy samples on a 13-design,
// once with all training points as centers and once with a 5-design sketch.

#include <cstdio>

#include "sphsketch/sphsketch.hpp"

using namespace sphsketch;

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : SPHSKETCH_DEFAULT_DESIGN_DIR;
  const PointSet training = load_design(dir, 13);
  const PointSet sketch = load_design(dir, 5);
  const auto target = TargetFunction::wendland_sum();
  const Dataset data = make_dataset(training, target, NoiseModel{0.1, 10.0, 7});
  const TestSet test = make_test_set(target, 2000);
  const auto kernel = KernelSpec::wendland();

  for (double lambda : {1e-2, 1e-3, 1e-4}) {
    const auto full = fit_full(data.inputs, data.labels, kernel, lambda);
    const auto sketched = fit_sketched(data.inputs, data.labels, sketch, kernel, lambda);
    std::printf("lambda %-8g full rmse %.5f (m=%zu)   sketched rmse %.5f (m=%zu)\n", lambda,
                rmse(full.model, test.inputs, test.labels), full.model.centers.size(),
                rmse(sketched.model, test.inputs, test.labels), sketched.model.centers.size());
  }
  return 0;
}
