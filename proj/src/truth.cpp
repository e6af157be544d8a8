#include "cvxlse/truth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cvxlse/errors.hpp"

namespace cvxlse {

namespace {

// int of |u|^alpha over [u0, u1], where the interval does not straddle 0.
double power_integral(double u0, double u1, double alpha) {
  if (u0 >= 0.0 && u1 >= 0.0) return (std::pow(u1, alpha + 1) - std::pow(u0, alpha + 1)) / (alpha + 1);
  return (std::pow(-u0, alpha + 1) - std::pow(-u1, alpha + 1)) / (alpha + 1);
}

// int of u |u|^alpha over [u0, u1] (same sign restriction).
double power_moment(double u0, double u1, double alpha) {
  if (u0 >= 0.0 && u1 >= 0.0) return (std::pow(u1, alpha + 2) - std::pow(u0, alpha + 2)) / (alpha + 2);
  return (std::pow(-u1, alpha + 2) - std::pow(-u0, alpha + 2)) / (alpha + 2);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e);
  return buf;
}

}  // namespace

BoundaryParams BoundaryParams::defaults(BoundaryShape shape) {
  BoundaryParams p;
  p.shape = shape;
  switch (shape) {
    case BoundaryShape::A:
      p = {BoundaryShape::A, 0.4, 1.0, -2.0, 1.0, 1.0};
      break;
    case BoundaryShape::B:
      // level chosen so the power segment reaches zero with zero slope
      p = {BoundaryShape::B, 0.4, 0.5, -2.0, 2.0, 2.0};
      break;
    case BoundaryShape::C:
      p = {BoundaryShape::C, 0.6, 0.5, -1.0, 2.0, 2.0};
      break;
  }
  return p;
}

TruthSpec TruthSpec::from_pwl(TruthKind kind, PiecewiseLinearFn f, std::optional<Interval> linear) {
  TruthSpec t;
  t.kind_ = kind;
  auto x = f.breakpoints();
  auto v = f.values();
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    t.segments_.push_back({x[i], x[i + 1], x[i], v[i], f.slope(i), 0.0, 1.0});
  t.end_ = x.back();
  t.pwl_ = std::move(f);
  t.linear_ = linear;
  t.build_cumulative();
  return t;
}

TruthSpec TruthSpec::triangular() {
  return from_pwl(TruthKind::Triangular, PiecewiseLinearFn({0.0, 1.0}, {2.0, 0.0}, Extension::ClampZeroRight),
                  Interval{0.0, 1.0});
}

TruthSpec TruthSpec::pwl_density(PiecewiseLinearFn f, std::optional<Interval> linear_region) {
  if (f.front() != 0.0) throw InputError("pwl density must start at 0");
  if (f.extension() != Extension::ClampZeroRight)
    f = PiecewiseLinearFn(std::vector<double>(f.breakpoints().begin(), f.breakpoints().end()),
                          std::vector<double>(f.values().begin(), f.values().end()), Extension::ClampZeroRight);
  for (double v : f.values())
    if (v < 0.0) throw InputError("pwl density must be nonnegative");
  // Convex and nonincreasing on its support; a drop to zero at the support
  // end is allowed (the uniform density is a valid truth).
  const PiecewiseLinearFn on_support(std::vector<double>(f.breakpoints().begin(), f.breakpoints().end()),
                                     std::vector<double>(f.values().begin(), f.values().end()), Extension::Extend);
  if (!on_support.is_convex(1e-12)) throw InputError("pwl density must be convex on its support");
  for (std::size_t i = 0; i + 1 < f.breakpoints().size(); ++i)
    if (f.slope(i) > 1e-12) throw InputError("pwl density must be nonincreasing");
  auto t = from_pwl(TruthKind::PwlDensity, std::move(f), linear_region);
  if (std::abs(t.cum_.back() - 1.0) > 1e-10) throw InputError("pwl density must integrate to 1");
  return t;
}

TruthSpec TruthSpec::regression_pwl(PiecewiseLinearFn r, std::optional<Interval> linear_region) {
  if (r.front() > 0.0 || r.back() < 1.0) throw InputError("regression truth must cover [0, 1]");
  if (!r.is_convex(1e-12)) throw InputError("regression truth must be convex");
  auto t = from_pwl(TruthKind::RegressionFn, std::move(r), linear_region);
  return t;
}

TruthSpec TruthSpec::regression_quadratic(double c0, double c1, double c2) {
  if (!(c2 >= 0.0) || !std::isfinite(c0) || !std::isfinite(c1) || !std::isfinite(c2))
    throw InputError("quadratic regression truth needs finite coefficients and c2 >= 0");
  TruthSpec t;
  t.kind_ = TruthKind::RegressionFn;
  t.segments_.push_back({0.0, 1.0, 0.0, c0, c1, c2, 2.0});
  t.end_ = 1.0;
  t.quadratic_ = std::array<double, 3>{c0, c1, c2};
  if (c2 == 0.0) t.linear_ = Interval{0.0, 1.0};
  t.build_cumulative();
  return t;
}

TruthSpec TruthSpec::boundary_case(const BoundaryParams& bp) {
  if (!(bp.x0 > 0.0) || !(bp.level > 0.0)) throw InputError("boundary case needs x0 > 0 and f(x0) > 0");
  TruthSpec t;
  t.kind_ = TruthKind::BoundaryCase;
  t.boundary_ = bp;
  const double x0 = bp.x0, v = bp.level, K1 = bp.K1, K2 = bp.K2;
  switch (bp.shape) {
    case BoundaryShape::A: {
      if (!(K1 + K2 < 0.0 && K2 > 0.0)) throw InputError("case A needs K1 + K2 < 0 and K2 > 0");
      double end = x0 + v / (-(K1 + K2));
      double f0 = v - K1 * x0;
      double Z = 0.5 * (f0 + v) * x0 + 0.5 * v * (end - x0);
      PiecewiseLinearFn f({0.0, x0, end}, {f0 / Z, v / Z, 0.0}, Extension::ClampZeroRight);
      auto out = from_pwl(TruthKind::BoundaryCase, std::move(f), Interval{0.0, x0});
      out.boundary_ = bp;
      return out;
    }
    case BoundaryShape::B: {
      if (!(K1 < 0.0 && K2 > 0.0 && bp.alpha > 1.0)) throw InputError("case B needs K1 < 0, K2 > 0, alpha > 1");
      const double a = bp.alpha;
      const double s_star = std::pow(-K1 / (a * K2), 1.0 / (a - 1.0));
      auto phi = [&](double s) { return v + K1 * s + K2 * std::pow(s, a); };
      double m = phi(s_star);
      if (m > 1e-12 * v) throw InputError("case B shape never reaches zero; lower f(x0)");
      double end_s = s_star;
      if (m < 0.0) {
        double lo = 0.0, hi = s_star;
        for (int it = 0; it < 200 && hi - lo > 1e-16 * s_star; ++it) {
          double mid = 0.5 * (lo + hi);
          (phi(mid) > 0.0 ? lo : hi) = mid;
        }
        end_s = 0.5 * (lo + hi);
      }
      t.segments_.push_back({0.0, x0, x0, v, K1, 0.0, 1.0});
      t.segments_.push_back({x0, x0 + end_s, x0, v, K1, K2, a});
      t.end_ = x0 + end_s;
      t.linear_ = Interval{0.0, x0};
      break;
    }
    case BoundaryShape::C: {
      if (!(K1 < 0.0 && K2 > 0.0 && bp.alpha > 1.0)) throw InputError("case C needs K1 < 0, K2 > 0, alpha > 1");
      double end = x0 + v / (-K1);
      t.segments_.push_back({0.0, x0, x0, v, K1, K2, bp.alpha});
      t.segments_.push_back({x0, end, x0, v, K1, 0.0, 1.0});
      t.end_ = end;
      t.linear_ = Interval{x0, end};
      break;
    }
  }
  t.build_cumulative();
  const double Z = t.cum_.back();
  for (auto& s : t.segments_) {
    s.p /= Z;
    s.q /= Z;
    s.k /= Z;
  }
  t.build_cumulative();
  return t;
}

void TruthSpec::build_cumulative() {
  cum_.assign(1, 0.0);
  for (std::size_t i = 0; i < segments_.size(); ++i) cum_.push_back(cum_.back() + segment_integral(i, segments_[i].hi));
}

std::size_t TruthSpec::segment_of(double t) const {
  std::size_t i = 0;
  while (i + 1 < segments_.size() && t >= segments_[i].hi) ++i;
  return i;
}

double TruthSpec::segment_integral(std::size_t i, double t) const {
  const auto& s = segments_[i];
  double u0 = s.lo - s.x0, u1 = t - s.x0;
  double r = s.p * (t - s.lo) + 0.5 * s.q * (u1 * u1 - u0 * u0);
  if (s.k != 0.0) r += s.k * power_integral(u0, u1, s.alpha);
  return r;
}

double TruthSpec::segment_first_moment(std::size_t i) const {
  const auto& s = segments_[i];
  double u0 = s.lo - s.x0, u1 = s.hi - s.x0;
  double r = s.x0 * segment_integral(i, s.hi) + s.p * 0.5 * (u1 * u1 - u0 * u0) +
             s.q * (u1 * u1 * u1 - u0 * u0 * u0) / 3.0;
  if (s.k != 0.0) r += s.k * power_moment(u0, u1, s.alpha);
  return r;
}

double TruthSpec::value(double t) const {
  if (is_density() && (t < 0.0 || t >= end_)) return 0.0;
  const auto& s = segments_[segment_of(t)];
  double u = t - s.x0;
  double r = s.p + s.q * u;
  if (s.k != 0.0) r += s.k * std::pow(std::abs(u), s.alpha);
  return r;
}

double TruthSpec::derivative_right(double t) const {
  if (is_density() && (t < 0.0 || t >= end_)) return 0.0;
  const auto& s = segments_[segment_of(t)];
  double u = t - s.x0;
  double r = s.q;
  if (s.k != 0.0 && u != 0.0) r += s.k * s.alpha * std::pow(std::abs(u), s.alpha - 1.0) * (u > 0 ? 1.0 : -1.0);
  return r;
}

double TruthSpec::derivative_left(double t) const {
  if (is_density() && (t <= 0.0 || t > end_)) return 0.0;
  std::size_t i = 0;
  while (i + 1 < segments_.size() && t > segments_[i].hi) ++i;
  const auto& s = segments_[i];
  double u = t - s.x0;
  double r = s.q;
  if (s.k != 0.0 && u != 0.0) r += s.k * s.alpha * std::pow(std::abs(u), s.alpha - 1.0) * (u > 0 ? 1.0 : -1.0);
  return r;
}

double TruthSpec::cumulative(double t) const {
  if (is_density()) {
    if (t <= 0.0) return 0.0;
    if (t >= end_) return cum_.back();
  }
  std::size_t i = segment_of(t);
  if (!is_density() && t < segments_.front().lo) i = 0;
  return cum_[i] + segment_integral(i, t);
}

double TruthSpec::quantile(double u) const {
  if (!is_density()) throw ModeError("quantile: density truths only");
  if (!(u >= 0.0 && u <= 1.0)) throw InputError("quantile: u must lie in [0, 1]");
  if (u <= 0.0) return 0.0;
  std::size_t i = 0;
  while (i + 1 < segments_.size() && u >= cum_[i + 1]) ++i;
  const auto& s = segments_[i];
  double r = u - cum_[i];
  if (s.k == 0.0) {
    double fa = s.p + s.q * (s.lo - s.x0);
    double disc = std::max(0.0, fa * fa + 2.0 * s.q * r);
    double denom = fa + std::sqrt(disc);
    double x = denom > 0.0 ? s.lo + 2.0 * r / denom : s.hi;
    return std::min(x, s.hi);
  }
  // Power segment: safeguarded Newton on the (increasing) segment integral.
  double lo = s.lo, hi = s.hi, x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double g = segment_integral(i, x) - r;
    if (g > 0.0) hi = x; else lo = x;
    double d = value(x);
    double nx = d > 0.0 ? x - g / d : 0.5 * (lo + hi);
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (std::abs(nx - x) <= 1e-15 * std::max(1.0, std::abs(x))) {
      x = nx;
      break;
    }
    x = nx;
  }
  return x;
}

double TruthSpec::mean() const {
  if (!is_density()) throw ModeError("mean: density truths only");
  double m = 0.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) m += segment_first_moment(i);
  return m;
}

double TruthSpec::x0() const {
  if (!boundary_) throw ModeError("x0: not a boundary-case truth");
  return boundary_->x0;
}

std::optional<PiecewisePoly> TruthSpec::cumulative_poly() const {
  for (const auto& s : segments_)
    if (s.k != 0.0 && s.alpha != 2.0) return std::nullopt;
  std::vector<double> breaks;
  std::vector<PiecewisePoly::Coeffs> pieces;
  auto seg_poly = [](const Segment& s, double origin) {
    return poly::shift({s.p, s.q, s.k, 0.0}, origin - s.x0);
  };
  const PiecewisePoly::Coeffs zero{0, 0, 0, 0};
  pieces.push_back(is_density() ? zero : seg_poly(segments_.front(), segments_.front().lo));
  for (const auto& s : segments_) {
    breaks.push_back(s.lo);
    pieces.push_back(seg_poly(s, s.lo));
  }
  breaks.push_back(end_);
  pieces.push_back(is_density() ? zero : seg_poly(segments_.back(), end_));
  return PiecewisePoly(std::move(breaks), std::move(pieces)).antiderivative(0.0, 0.0);
}

std::string TruthSpec::describe() const {
  switch (kind_) {
    case TruthKind::Triangular:
      return "triangular";
    case TruthKind::PwlDensity:
      return "pwl-density";
    case TruthKind::BoundaryCase: {
      const auto& b = *boundary_;
      const char* name = b.shape == BoundaryShape::A ? "A" : b.shape == BoundaryShape::B ? "B" : "C";
      return std::string("boundary-") + name +
             fmt("(x0=%g,level=%g,K1=%g,K2=%g,alpha=%g)", b.x0, b.level, b.K1, b.K2, b.alpha);
    }
    case TruthKind::RegressionFn:
      if (quadratic_) return fmt("regression-quadratic(%g,%g,%g)", (*quadratic_)[0], (*quadratic_)[1], (*quadratic_)[2]);
      return "regression-pwl";
  }
  return "unknown";
}

}  // namespace cvxlse
