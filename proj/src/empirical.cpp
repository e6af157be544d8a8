#include "cvxlse/empirical.hpp"

#include <algorithm>
#include <cmath>

#include "cvxlse/errors.hpp"

namespace cvxlse {

EmpiricalMeasure::EmpiricalMeasure(Mode mode, std::size_t n, std::vector<double> atoms,
                                   std::vector<double> weights, std::vector<double> raw)
    : mode_(mode), n_(n), atoms_(std::move(atoms)), weights_(std::move(weights)), raw_(std::move(raw)) {}

EmpiricalMeasure EmpiricalMeasure::density(std::vector<double> sample) {
  for (double x : sample) {
    if (!std::isfinite(x)) throw InputError("density sample: non-finite observation");
    if (x < 0.0) throw InputError("density sample: observations must be >= 0");
  }
  std::sort(sample.begin(), sample.end());
  const std::size_t n = sample.size();
  std::vector<double> atoms;
  std::vector<double> weights;
  const double unit = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sample[j] == sample[i]) ++j;
    atoms.push_back(sample[i]);
    weights.push_back(static_cast<double>(j - i) * unit);
    i = j;
  }
  if (atoms.size() < 2) throw InputError("density sample: need at least two distinct observations");
  return EmpiricalMeasure(Mode::Density, n, std::move(atoms), std::move(weights), std::move(sample));
}

EmpiricalMeasure EmpiricalMeasure::regression(std::vector<double> design, std::vector<double> response) {
  if (design.size() != response.size()) throw InputError("regression data: size mismatch");
  const std::size_t n = design.size();
  if (n < 2) throw InputError("regression data: need n >= 2");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(design[i]) || !std::isfinite(response[i]))
      throw InputError("regression data: non-finite value");
    if (!(design[i] > 0.0 && design[i] < 1.0))
      throw InputError("regression data: design points must lie in (0, 1)");
    if (i > 0 && !(design[i] > design[i - 1]))
      throw InputError("regression data: design points must be strictly increasing");
  }
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = response[i] / static_cast<double>(n);
  return EmpiricalMeasure(Mode::Regression, n, std::move(design), std::move(weights), std::move(response));
}

std::vector<double> EmpiricalMeasure::fixed_design(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
  return x;
}

EmpiricalMeasure EmpiricalMeasure::regression_fixed_design(std::vector<double> response) {
  auto x = fixed_design(response.size());
  return regression(std::move(x), std::move(response));
}

StepFn EmpiricalMeasure::cumulative() const { return StepFn(atoms_, weights_, 0.0); }

double EmpiricalMeasure::integrated_cumulative(double t) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < atoms_.size() && atoms_[i] < t; ++i) acc += weights_[i] * (t - atoms_[i]);
  return acc;
}

}  // namespace cvxlse
