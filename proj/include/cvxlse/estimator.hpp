#pragma once

// Convex least squares estimation of a decreasing convex density on [0, inf)
// and of a convex regression function on [0, 1].

#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvxlse/empirical.hpp"
#include "cvxlse/pwl.hpp"
#include "cvxlse/truth.hpp"

namespace cvxlse {

struct SolverOptions {
  double tol = 1e-8;           ///< tolerance on every characterization residual
  std::size_t max_iter = 0;    ///< 0 means 10 * n
  std::vector<double> initial_knots;
  bool record_trace = false;   ///< keep the objective after every iteration
};

/// Optimality diagnostics, computed by exact piecewise-polynomial arithmetic.
/// The gap is D(t) = int_0^t (G-hat - G_n) where G is F (density) or R
/// (regression); the estimate is the LSE iff D >= 0 with D = 0 at the knots.
struct CharacterizationReport {
  double min_gap = 0.0;
  double knot_equality_error = 0.0;
  double fubini_residual = 0.0;  ///< |sum over knots of slope jump * D(knot)|
  double df_match_error = 0.0;
  std::optional<double> marshall_ratio;
  double scale = 1.0;            ///< total slope variation of the estimate
};

struct ConvexFit {
  Mode mode = Mode::Density;
  PiecewiseLinearFn estimate{{0.0, 1.0}, {0.0, 0.0}};
  std::vector<double> knot_set;
  double objective = 0.0;
  CharacterizationReport diagnostics;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, ConvexFit best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const ConvexFit& best() const { return best_; }

 private:
  ConvexFit best_;
};

ConvexFit fit_convex_density(const EmpiricalMeasure& sample, const SolverOptions& opts = {});
ConvexFit fit_convex_regression(const EmpiricalMeasure& data, const SolverOptions& opts = {});

/// Throws ModeError when the fit and data modes differ.
CharacterizationReport characterization_report(const ConvexFit& fit, const EmpiricalMeasure& data,
                                               const TruthSpec* truth = nullptr);

/// sup |G-hat - G0| / sup |G_n - G0| with G the cumulative of the estimate,
/// truth and data.
double marshall_ratio(const ConvexFit& fit, const EmpiricalMeasure& data, const TruthSpec& truth);

struct MarshallDistances {
  double fit = 0.0;        ///< sup |G-hat - G0|
  double empirical = 0.0;  ///< sup |G_n - G0|
};
MarshallDistances marshall_distances(const ConvexFit& fit, const EmpiricalMeasure& data, const TruthSpec& truth);

/// Estimate at 0; throws ModeError in regression mode.
double value_at_zero(const ConvexFit& fit);

/// CSV rows "x,estimate[,truth]" on the given grid.
void write_fit_csv(std::ostream& os, const ConvexFit& fit, const std::vector<double>& grid,
                   const TruthSpec* truth = nullptr);

}  // namespace cvxlse
