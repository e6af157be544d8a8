#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cvxlse/pwl.hpp"

namespace cvxlse {

enum class Mode { Density, Regression };

/// A density sample or a regression data set, stored as weighted atoms.
///
/// Density mode: atoms are the distinct observations, each weighted by its
/// multiplicity / n. Regression mode: atoms are the design points, each
/// weighted by Y_i / n. In both modes the fitting criterion is
/// 1/2 int g^2 - sum_i weight_i g(atom_i).
class EmpiricalMeasure {
 public:
  /// Throws InputError on non-finite or negative observations, or fewer than
  /// two distinct values.
  static EmpiricalMeasure density(std::vector<double> sample);

  /// Design points must be strictly increasing inside (0, 1).
  static EmpiricalMeasure regression(std::vector<double> design, std::vector<double> response);

  /// Fixed design X_i = i / (n + 1).
  static EmpiricalMeasure regression_fixed_design(std::vector<double> response);

  static std::vector<double> fixed_design(std::size_t n);

  Mode mode() const { return mode_; }
  std::size_t n() const { return n_; }
  std::span<const double> atoms() const { return atoms_; }
  std::span<const double> weights() const { return weights_; }
  /// Sorted observations (density) or responses (regression), as given.
  std::span<const double> raw() const { return raw_; }

  /// F_n in density mode, R_n(t) = (1/n) sum Y_i 1{X_i <= t} in regression mode.
  StepFn cumulative() const;

  /// int_0^t of cumulative(): sum_i weight_i (t - atom_i)_+.
  double integrated_cumulative(double t) const;

 private:
  EmpiricalMeasure(Mode mode, std::size_t n, std::vector<double> atoms, std::vector<double> weights,
                   std::vector<double> raw);

  Mode mode_;
  std::size_t n_;
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> raw_;
};

}  // namespace cvxlse
