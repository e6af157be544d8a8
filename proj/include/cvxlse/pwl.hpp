#pragma once

// Exact arithmetic on piecewise polynomial functions of one variable.
//
// PiecewiseLinearFn is the representation used for every estimate and for
// piecewise-linear truths. Antiderivatives are returned as PiecewisePoly
// (degree <= 3), and StepFn holds right-continuous empirical functions such
// as the empirical distribution function. sup_diff computes the exact
// supremum of |f - g| (or f - g) for any pair of these.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace cvxlse {

enum class Extension {
  Extend,          ///< terminal segments are extrapolated linearly
  ClampZeroRight,  ///< zero to the right of the last breakpoint
};

class PiecewisePoly;

class PiecewiseLinearFn {
 public:
  /// Breakpoints closer than 1e-12 are merged, keeping the leftmost value.
  /// Throws InputError unless at least two distinct finite breakpoints remain.
  PiecewiseLinearFn(std::vector<double> x, std::vector<double> v,
                    Extension ext = Extension::Extend);

  double operator()(double x) const;

  /// One-sided slopes. DomainError outside [first, last], for the left
  /// derivative at the first breakpoint and the right derivative at the last.
  double derivative_left(double x) const;
  double derivative_right(double x) const;

  /// Interior breakpoints where the slope increases by more than tol.
  std::vector<double> knots(double tol) const;

  /// True iff every interior slope change is >= -tol. Under ClampZeroRight the
  /// drop to zero after the last breakpoint counts as well.
  bool is_convex(double tol) const;

  /// Slope of segment i (between breakpoints i and i+1).
  double slope(std::size_t i) const;

  std::span<const double> breakpoints() const { return x_; }
  std::span<const double> values() const { return v_; }
  Extension extension() const { return ext_; }
  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

  /// Exact piecewise-polynomial view including the extension tails.
  PiecewisePoly to_poly() const;

  /// Continuous antiderivative G with G(anchor_x) = anchor_v.
  PiecewisePoly antiderivative(double anchor_x, double anchor_v) const;

  friend bool operator==(const PiecewiseLinearFn&, const PiecewiseLinearFn&) = default;

 private:
  std::vector<double> x_;
  std::vector<double> v_;
  Extension ext_;
};

/// Right-continuous step function: base + sum of sizes[j] * 1{x >= jumps[j]}.
class StepFn {
 public:
  StepFn(std::vector<double> jumps, std::vector<double> sizes, double base = 0.0);

  double operator()(double x) const;
  double left_limit(double x) const;

  std::span<const double> jumps() const { return jumps_; }
  std::span<const double> sizes() const { return sizes_; }
  double base() const { return base_; }

  PiecewisePoly to_poly() const;

 private:
  std::vector<double> jumps_;
  std::vector<double> sizes_;
  std::vector<double> cumulative_;  // value on [jumps[j], jumps[j+1])
  double base_;
};

/// Piecewise cubic (or lower) polynomial on the whole real line.
///
/// With breakpoints b_0 < ... < b_{K-1} there are K+1 pieces: piece 0 covers
/// (-inf, b_0), piece j covers [b_{j-1}, b_j), and piece K covers
/// [b_{K-1}, inf). Each piece stores coefficients in s = x - origin, where the
/// origin is b_0 for piece 0 and b_{j-1} otherwise. Values are right-continuous;
/// jumps at breakpoints are allowed.
class PiecewisePoly {
 public:
  using Coeffs = std::array<double, 4>;

  PiecewisePoly(std::vector<double> breaks, std::vector<Coeffs> pieces);
  PiecewisePoly(const PiecewiseLinearFn& f) : PiecewisePoly(f.to_poly()) {}  // NOLINT
  PiecewisePoly(const StepFn& f) : PiecewisePoly(f.to_poly()) {}             // NOLINT

  double operator()(double x) const;
  double left_limit(double x) const;

  /// Derivative piece by piece (jumps in the function are dropped).
  PiecewisePoly derivative() const;

  /// Continuous antiderivative G with G(anchor_x) = anchor_v. Throws
  /// DomainError if a piece would exceed degree 3.
  PiecewisePoly antiderivative(double anchor_x, double anchor_v) const;

  std::span<const double> breakpoints() const { return breaks_; }
  std::span<const Coeffs> pieces() const { return pieces_; }
  std::size_t piece_index(double x) const;
  double origin(std::size_t piece) const;
  int degree() const;

 private:
  std::vector<double> breaks_;
  std::vector<Coeffs> pieces_;
};

struct SupResult {
  double value = 0.0;
  double argmax = 0.0;
  bool left_limit = false;  ///< attained as the limit from the left of argmax
};

/// Exact sup over [lo, hi] of |f - g| (or of f - g when signed_mode is set).
/// One-sided limits at jumps inside the interval are included; so is the left
/// limit at hi. Throws DomainError if lo > hi.
SupResult sup_diff(const PiecewisePoly& f, const PiecewisePoly& g, double lo, double hi,
                   bool signed_mode = false);

namespace poly {
/// Coefficients of p(s + delta) given those of p(s).
PiecewisePoly::Coeffs shift(const PiecewisePoly::Coeffs& c, double delta);
double eval(const PiecewisePoly::Coeffs& c, double s);
/// Real roots of c1 + 2 c2 s + 3 c3 s^2 (the derivative) inside (0, len).
int critical_points(const PiecewisePoly::Coeffs& c, double len, std::array<double, 2>& out);
}  // namespace poly

}  // namespace cvxlse
