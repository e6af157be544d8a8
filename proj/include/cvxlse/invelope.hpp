#pragma once

// The invelope limit process on [a, b]: H >= Y, H'' convex, H = Y at both
// ends and H = Y wherever H''' jumps. Computed on the path grid as the limit
// of k -> inf of the convex minimizer of 1/2 int g^2 - int g dX over g with
// g(a) = g(b) = k.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvxlse/stochastic.hpp"
#include "cvxlse/truth.hpp"

namespace cvxlse {

struct InvelopeOptions {
  std::vector<double> k_schedule = default_schedule();
  double margin = 0.05;        ///< interior margin (relative to [a, b]) for the stop rule
  double stop_tol = 1e-3;      ///< sup-change of g on the interior between consecutive k
  double qp_tol = 1e-10;       ///< optimality tolerance on H - Y
  std::size_t qp_max_iter = 0; ///< per k; 0 means 20 * m
  std::vector<std::size_t> initial_knots;  ///< grid indices used to start the first solve

  static std::vector<double> default_schedule();
};

struct InvelopeResiduals {
  double min_gap = 0.0;      ///< min over the grid of H - Y
  double left_value = 0.0;   ///< |H(a) - Y(a)|
  double right_value = 0.0;  ///< |H(b) - Y(b)|
  double left_slope = 0.0;   ///< |H'(a) - X(a)|, one-sided difference
  double right_slope = 0.0;  ///< |H'(b) - X(b)|
  double fubini = 0.0;       ///< |sum over knots of (H''' jump) (H - Y)|
};

struct InvelopeStep {
  double k = 0.0;
  double phi = 0.0;          ///< interior objective at the minimizer (end-node terms excluded)
  double sup_change = 0.0;   ///< interior sup |g_k - g_previous| (inf for the first step)
  InvelopeResiduals residuals;
  std::size_t iterations = 0;
  std::size_t knots = 0;
};

struct InvelopeResult {
  Interval interval;
  std::vector<double> grid;
  std::vector<double> H, dH, g, dg;  ///< H, H', H'' and H''' (right slope of g; left at b)
  std::vector<double> Y;             ///< integrated path as discretized (one-sided in the end cells)
  std::vector<std::size_t> knots;    ///< indices into grid where H''' jumps
  double k_final = 0.0;
  InvelopeResiduals residuals;
  std::vector<InvelopeStep> steps;
  bool converged = false;
  bool phi_monotone = true;          ///< phi nonincreasing over the schedule
  std::string warning;

  /// Linear interpolation of H'' and the piecewise-constant H''' at t.
  double second_derivative_at(double t) const;
  double third_derivative_at(double t) const;
  double scale() const;  ///< max |Y| + max |H|, for relative tolerances
};

/// Throws InputError if [a, b] is not spanned by at least 16 grid cells, and
/// std::logic_error if a QP fails (a bug, the constraints are consistent).
InvelopeResult compute_invelope(const GaussianPath& path, Interval interval = {0.0, 1.0},
                                const InvelopeOptions& opts = {});

/// T = -min of H'' over the interior grid nodes.
double limit_T(const InvelopeResult& inv);

struct QuantileTable {
  std::vector<double> alphas;     ///< upper-tail levels, increasing
  std::vector<double> quantiles;  ///< t_alpha, strictly decreasing
  std::vector<double> standard_errors;  ///< bootstrap standard errors
  std::size_t n_sims = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double min_T = 0.0;
  std::size_t non_converged = 0;
  InvelopeOptions options;

  struct Lookup {
    double t_alpha;
    bool interpolated;
  };
  /// Exact entry or linear interpolation in log(alpha); DomainError outside
  /// [alphas.front(), alphas.back()].
  Lookup lookup(double alpha) const;
};

std::vector<double> default_alphas();

/// Upper sample quantile at level alpha (linear interpolation between order
/// statistics of the sorted sample).
double upper_quantile(const std::vector<double>& sorted, double alpha);

struct QuantileSimulation {
  QuantileTable table;
  std::vector<double> T;  ///< replicate values in replicate order
};

/// i.i.d. replicates of T from bridge paths of the triangular truth (or of
/// the given density truth), with per-replicate derived seeds.
QuantileSimulation estimate_quantiles(std::size_t n_sims, const std::vector<double>& alphas, std::size_t m,
                                      const InvelopeOptions& opts, std::uint64_t seed, unsigned threads = 1,
                                      const TruthSpec* truth = nullptr);

/// Limit of sqrt(n) (r-hat - r0, r-hat' - r0') at x for a regression function
/// linear on [a, b] with noise level sigma, from a motion-mode invelope on
/// [0, 1]: (sigma H''(u) / sqrt(b - a), sigma H'''(u) / (b - a)^{3/2}) with
/// u = (x - a) / (b - a). DomainError unless a < x < b.
std::pair<double, double> rescale_regression_limit(const InvelopeResult& inv, double a, double b, double sigma,
                                                   double x);

}  // namespace cvxlse
