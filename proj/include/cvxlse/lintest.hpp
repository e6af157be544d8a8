#pragma once

// Test of the triangular density 2(1 - t) on [0, 1] against convex
// decreasing alternatives, based on how far the density LSE dips below it.

#include <cstddef>

#include "cvxlse/empirical.hpp"
#include "cvxlse/estimator.hpp"
#include "cvxlse/invelope.hpp"
#include "cvxlse/pwl.hpp"

namespace cvxlse {

/// sqrt(n) sup_{t >= 0} {2 (1 - t) 1[0, 1](t) - f(t)}, computed exactly: the
/// difference is piecewise linear, so the sup over [0, max(1, last
/// breakpoint)] is attained at a breakpoint; beyond that range the
/// difference is -f(t) <= 0 with limit 0, so the result is floored at 0.
/// f must be a density estimate (clamped to zero on the right).
double t_statistic_of(const PiecewiseLinearFn& f, std::size_t n);

struct TStatistic {
  double T_n = 0.0;
  ConvexFit fit;
};

/// Fits the density LSE and evaluates the statistic. Throws InputError if
/// n < 2, ModeError for regression data and propagates fit errors.
TStatistic t_statistic(const EmpiricalMeasure& sample, const SolverOptions& opts = {});

struct TestDecision {
  double T_n = 0.0;
  double alpha = 0.0;
  double t_alpha = 0.0;
  bool reject = false;        ///< T_n > t_alpha
  std::size_t n = 0;
  bool interpolated = false;  ///< t_alpha interpolated between table levels
};

/// Decision for a given statistic. DomainError if alpha is outside the table.
TestDecision decide(double T_n, std::size_t n, double alpha, const QuantileTable& table);

TestDecision linearity_test(const EmpiricalMeasure& sample, double alpha, const QuantileTable& table,
                            const SolverOptions& opts = {});

/// The table shipped with the library (n_sims = 20000, m = 800).
const QuantileTable& default_quantile_table();

}  // namespace cvxlse
