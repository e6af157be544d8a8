#pragma once

// Known truths for simulation: convex decreasing densities on [0, inf) and
// convex regression functions on [0, 1].

#include <optional>
#include <string>
#include <vector>

#include "cvxlse/pwl.hpp"

namespace cvxlse {

struct Interval {
  double a = 0.0;
  double b = 1.0;
};

enum class TruthKind { Triangular, PwlDensity, BoundaryCase, RegressionFn };

/// Local shape at the boundary point x0 of a linear region.
///   A: f = f(x0) + K1 (t - x0) + K2 (t - x0) 1{t >= x0}
///   B: f = f(x0) + K1 (t - x0) + K2 (t - x0)^alpha 1{t >= x0}
///   C: f = f(x0) + K1 (t - x0) + K2 (x0 - t)^alpha 1{t < x0}
enum class BoundaryShape { A, B, C };

/// Unnormalized shape parameters. The shape is completed to a density on
/// [0, end] (end = first zero to the right of x0) and divided by its mass, so
/// the slopes of the density are K1 / Z, K2 / Z.
struct BoundaryParams {
  BoundaryShape shape = BoundaryShape::A;
  double x0 = 0.4;
  double level = 1.0;  ///< unnormalized value at x0
  double K1 = -2.0;
  double K2 = 1.0;
  double alpha = 1.0;  ///< 1 for shape A

  static BoundaryParams defaults(BoundaryShape shape);
};

class TruthSpec {
 public:
  static TruthSpec triangular();
  /// f must be a nonnegative convex density (clamped to zero on the right)
  /// integrating to one within 1e-10.
  static TruthSpec pwl_density(PiecewiseLinearFn f, std::optional<Interval> linear_region = std::nullopt);
  static TruthSpec boundary_case(const BoundaryParams& p);
  static TruthSpec regression_pwl(PiecewiseLinearFn r, std::optional<Interval> linear_region = std::nullopt);
  /// r(t) = c0 + c1 t + c2 t^2 with c2 >= 0.
  static TruthSpec regression_quadratic(double c0, double c1, double c2);

  TruthKind kind() const { return kind_; }
  bool is_density() const { return kind_ != TruthKind::RegressionFn; }

  double value(double t) const;
  double derivative_right(double t) const;
  double derivative_left(double t) const;
  /// F0(t) = int_0^t f0 for densities, R0(t) = int_0^t r0 for regression.
  double cumulative(double t) const;
  /// Inverse of F0 on (0, 1); densities only.
  double quantile(double u) const;
  /// int t f0(t) dt; densities only.
  double mean() const;
  double support_end() const { return end_; }

  /// Exact piecewise-polynomial form of cumulative(), when it has degree <= 3.
  std::optional<PiecewisePoly> cumulative_poly() const;
  const std::optional<PiecewiseLinearFn>& pwl() const { return pwl_; }
  std::optional<Interval> linear_region() const { return linear_; }
  const std::optional<BoundaryParams>& boundary() const { return boundary_; }
  /// Boundary point x0 for boundary-case truths.
  double x0() const;

  /// Short human-readable description for headers and logs.
  std::string describe() const;

  /// Segment model: on [lo, hi], value = p + q u + k |u|^alpha with u = t - x0
  /// (the power term is active for u >= 0 on right-power segments and for
  /// u < 0 on left-power segments).
  struct Segment {
    double lo, hi, x0, p, q, k, alpha;
  };
  const std::vector<Segment>& segments() const { return segments_; }

 private:
  TruthSpec() = default;
  static TruthSpec from_pwl(TruthKind kind, PiecewiseLinearFn f, std::optional<Interval> linear);
  void build_cumulative();
  std::size_t segment_of(double t) const;
  double segment_integral(std::size_t i, double t) const;  // int_lo^t
  double segment_first_moment(std::size_t i) const;

  TruthKind kind_ = TruthKind::Triangular;
  std::vector<Segment> segments_;
  std::vector<double> cum_;  // cumulative at segment starts (size segments + 1)
  double end_ = 1.0;
  std::optional<PiecewiseLinearFn> pwl_;
  std::optional<Interval> linear_;
  std::optional<BoundaryParams> boundary_;
  std::optional<std::array<double, 3>> quadratic_;
};

}  // namespace cvxlse
