#include "cvxlse/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvxlse/errors.hpp"

namespace cvxlse {

namespace {

constexpr double kDedupTol = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// polynomial helpers

namespace poly {

PiecewisePoly::Coeffs shift(const PiecewisePoly::Coeffs& c, double d) {
  // p(s + d) expanded in s
  return {c[0] + d * (c[1] + d * (c[2] + d * c[3])),
          c[1] + d * (2.0 * c[2] + 3.0 * d * c[3]),
          c[2] + 3.0 * d * c[3],
          c[3]};
}

double eval(const PiecewisePoly::Coeffs& c, double s) {
  return c[0] + s * (c[1] + s * (c[2] + s * c[3]));
}

int critical_points(const PiecewisePoly::Coeffs& c, double len, std::array<double, 2>& out) {
  const double a = 3.0 * c[3];
  const double b = 2.0 * c[2];
  const double k = c[1];
  int count = 0;
  auto keep = [&](double s) {
    if (s > 0.0 && s < len && std::isfinite(s)) out[count++] = s;
  };
  const double scale = std::abs(a) * len + std::abs(b);
  if (std::abs(a) * len <= 1e-14 * std::max(scale, 1e-300)) {
    if (b != 0.0) keep(-k / b);
    return count;
  }
  const double disc = b * b - 4.0 * a * k;
  if (disc < 0.0) return 0;
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + std::copysign(sq, b));
  if (q != 0.0) {
    keep(q / a);
    keep(k / q);
  } else {
    keep(0.0);
  }
  if (count == 2 && out[0] > out[1]) std::swap(out[0], out[1]);
  return count;
}

}  // namespace poly

// ---------------------------------------------------------------------------
// PiecewiseLinearFn

PiecewiseLinearFn::PiecewiseLinearFn(std::vector<double> x, std::vector<double> v, Extension ext)
    : ext_(ext) {
  if (x.size() != v.size()) throw InputError("PiecewiseLinearFn: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(v[i]))
      throw InputError("PiecewiseLinearFn: non-finite breakpoint or value");
    if (i > 0 && x[i] < x[i - 1] - kDedupTol)
      throw InputError("PiecewiseLinearFn: breakpoints must be increasing");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x_.empty() && x[i] - x_.back() <= kDedupTol) continue;
    x_.push_back(x[i]);
    v_.push_back(v[i]);
  }
  if (x_.size() < 2) throw InputError("PiecewiseLinearFn: need at least two distinct breakpoints");
  if (ext_ == Extension::ClampZeroRight && v_.back() < 0.0)
    throw InputError("PiecewiseLinearFn: clamp-to-zero-right requires a nonnegative last value");
}

double PiecewiseLinearFn::slope(std::size_t i) const {
  return (v_[i + 1] - v_[i]) / (x_[i + 1] - x_[i]);
}

double PiecewiseLinearFn::operator()(double x) const {
  const std::size_t n = x_.size();
  if (x > x_.back()) {
    if (ext_ == Extension::ClampZeroRight) return 0.0;
    return v_.back() + slope(n - 2) * (x - x_.back());
  }
  if (x <= x_.front()) return v_.front() + slope(0) * (x - x_.front());
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  if (i + 1 >= n) return v_.back();
  return v_[i] + slope(i) * (x - x_[i]);
}

double PiecewiseLinearFn::derivative_left(double x) const {
  if (!(x > x_.front() && x <= x_.back()))
    throw DomainError("derivative_left: x outside (first, last]");
  const auto it = std::lower_bound(x_.begin(), x_.end(), x);
  return slope(static_cast<std::size_t>(it - x_.begin()) - 1);
}

double PiecewiseLinearFn::derivative_right(double x) const {
  if (!(x >= x_.front() && x < x_.back()))
    throw DomainError("derivative_right: x outside [first, last)");
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  return slope(static_cast<std::size_t>(it - x_.begin()) - 1);
}

std::vector<double> PiecewiseLinearFn::knots(double tol) const {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < x_.size(); ++i)
    if (slope(i) - slope(i - 1) > tol) out.push_back(x_[i]);
  if (ext_ == Extension::ClampZeroRight && v_.back() == 0.0 && -slope(x_.size() - 2) > tol)
    out.push_back(x_.back());
  return out;
}

bool PiecewiseLinearFn::is_convex(double tol) const {
  for (std::size_t i = 1; i + 1 < x_.size(); ++i)
    if (slope(i) - slope(i - 1) < -tol) return false;
  if (ext_ == Extension::ClampZeroRight) {
    if (v_.back() > tol) return false;
    if (slope(x_.size() - 2) > tol) return false;
  }
  return true;
}

PiecewisePoly PiecewiseLinearFn::to_poly() const {
  const std::size_t n = x_.size();
  std::vector<PiecewisePoly::Coeffs> pieces;
  pieces.reserve(n + 1);
  pieces.push_back({v_[0], slope(0), 0.0, 0.0});
  for (std::size_t j = 0; j + 1 < n; ++j) pieces.push_back({v_[j], slope(j), 0.0, 0.0});
  if (ext_ == Extension::ClampZeroRight)
    pieces.push_back({0.0, 0.0, 0.0, 0.0});
  else
    pieces.push_back({v_[n - 1], slope(n - 2), 0.0, 0.0});
  return PiecewisePoly(x_, std::move(pieces));
}

PiecewisePoly PiecewiseLinearFn::antiderivative(double anchor_x, double anchor_v) const {
  return to_poly().antiderivative(anchor_x, anchor_v);
}

// ---------------------------------------------------------------------------
// StepFn

StepFn::StepFn(std::vector<double> jumps, std::vector<double> sizes, double base)
    : jumps_(std::move(jumps)), sizes_(std::move(sizes)), base_(base) {
  if (jumps_.size() != sizes_.size()) throw InputError("StepFn: size mismatch");
  if (!std::isfinite(base_)) throw InputError("StepFn: non-finite base");
  double acc = base_;
  cumulative_.reserve(jumps_.size());
  for (std::size_t j = 0; j < jumps_.size(); ++j) {
    if (!std::isfinite(jumps_[j]) || !std::isfinite(sizes_[j]))
      throw InputError("StepFn: non-finite jump");
    if (j > 0 && !(jumps_[j] > jumps_[j - 1]))
      throw InputError("StepFn: jump locations must be strictly increasing");
    acc += sizes_[j];
    cumulative_.push_back(acc);
  }
}

double StepFn::operator()(double x) const {
  const auto it = std::upper_bound(jumps_.begin(), jumps_.end(), x);
  const auto k = it - jumps_.begin();
  return k == 0 ? base_ : cumulative_[static_cast<std::size_t>(k - 1)];
}

double StepFn::left_limit(double x) const {
  const auto it = std::lower_bound(jumps_.begin(), jumps_.end(), x);
  const auto k = it - jumps_.begin();
  return k == 0 ? base_ : cumulative_[static_cast<std::size_t>(k - 1)];
}

PiecewisePoly StepFn::to_poly() const {
  if (jumps_.empty()) return PiecewisePoly({0.0}, {{base_, 0, 0, 0}, {base_, 0, 0, 0}});
  std::vector<PiecewisePoly::Coeffs> pieces;
  pieces.reserve(jumps_.size() + 1);
  pieces.push_back({base_, 0, 0, 0});
  for (double c : cumulative_) pieces.push_back({c, 0, 0, 0});
  return PiecewisePoly(jumps_, std::move(pieces));
}

// ---------------------------------------------------------------------------
// PiecewisePoly

PiecewisePoly::PiecewisePoly(std::vector<double> breaks, std::vector<Coeffs> pieces)
    : breaks_(std::move(breaks)), pieces_(std::move(pieces)) {
  if (breaks_.empty()) throw InputError("PiecewisePoly: need at least one breakpoint");
  if (pieces_.size() != breaks_.size() + 1)
    throw InputError("PiecewisePoly: expected one more piece than breakpoints");
  for (std::size_t j = 1; j < breaks_.size(); ++j)
    if (!(breaks_[j] > breaks_[j - 1]))
      throw InputError("PiecewisePoly: breakpoints must be strictly increasing");
}

std::size_t PiecewisePoly::piece_index(double x) const {
  return static_cast<std::size_t>(std::upper_bound(breaks_.begin(), breaks_.end(), x) -
                                  breaks_.begin());
}

double PiecewisePoly::origin(std::size_t piece) const {
  return piece == 0 ? breaks_.front() : breaks_[piece - 1];
}

double PiecewisePoly::operator()(double x) const {
  const std::size_t k = piece_index(x);
  return poly::eval(pieces_[k], x - origin(k));
}

double PiecewisePoly::left_limit(double x) const {
  const auto k = static_cast<std::size_t>(std::lower_bound(breaks_.begin(), breaks_.end(), x) -
                                          breaks_.begin());
  return poly::eval(pieces_[k], x - origin(k));
}

int PiecewisePoly::degree() const {
  int deg = 0;
  for (const auto& c : pieces_)
    for (int d = 3; d > deg; --d)
      if (c[static_cast<std::size_t>(d)] != 0.0) {
        deg = d;
        break;
      }
  return deg;
}

PiecewisePoly PiecewisePoly::derivative() const {
  std::vector<Coeffs> out;
  out.reserve(pieces_.size());
  for (const auto& c : pieces_) out.push_back({c[1], 2.0 * c[2], 3.0 * c[3], 0.0});
  return PiecewisePoly(breaks_, std::move(out));
}

PiecewisePoly PiecewisePoly::antiderivative(double anchor_x, double anchor_v) const {
  std::vector<Coeffs> out(pieces_.size());
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const auto& c = pieces_[k];
    if (c[3] != 0.0) throw DomainError("antiderivative: degree would exceed 3");
    out[k] = {0.0, c[0], c[1] / 2.0, c[2] / 3.0};
  }
  // Pieces 0 and 1 share origin b_0 with value 0 there; chain the rest.
  for (std::size_t k = 2; k < out.size(); ++k) {
    const double len = breaks_[k - 1] - breaks_[k - 2];
    out[k][0] = poly::eval(out[k - 1], len);
  }
  PiecewisePoly g(breaks_, std::move(out));
  const double delta = anchor_v - g(anchor_x);
  for (auto& c : g.pieces_) c[0] += delta;
  return g;
}

// ---------------------------------------------------------------------------
// sup_diff

SupResult sup_diff(const PiecewisePoly& f, const PiecewisePoly& g, double lo, double hi,
                   bool signed_mode) {
  if (!(lo <= hi)) throw DomainError("sup_diff: empty interval");
  std::vector<double> pts{lo, hi};
  for (double b : f.breakpoints())
    if (b > lo && b < hi) pts.push_back(b);
  for (double b : g.breakpoints())
    if (b > lo && b < hi) pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  SupResult best;
  bool have = false;
  auto consider = [&](double diff, double at, bool left) {
    const double val = signed_mode ? diff : std::abs(diff);
    if (!have || val > best.value) {
      best = {val, at, left};
      have = true;
    }
  };

  if (pts.size() == 1) {
    consider(f(lo) - g(lo), lo, false);
    return best;
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double p = pts[i];
    const double q = pts[i + 1];
    const double mid = 0.5 * (p + q);
    const std::size_t kf = f.piece_index(mid);
    const std::size_t kg = g.piece_index(mid);
    const auto cf = poly::shift(f.pieces()[kf], p - f.origin(kf));
    const auto cg = poly::shift(g.pieces()[kg], p - g.origin(kg));
    const PiecewisePoly::Coeffs d{cf[0] - cg[0], cf[1] - cg[1], cf[2] - cg[2], cf[3] - cg[3]};
    const double len = q - p;
    consider(d[0], p, false);
    std::array<double, 2> crit{};
    const int nc = poly::critical_points(d, len, crit);
    for (int c = 0; c < nc; ++c) consider(poly::eval(d, crit[static_cast<std::size_t>(c)]), p + crit[static_cast<std::size_t>(c)], false);
    consider(poly::eval(d, len), q, true);
  }
  consider(f(hi) - g(hi), hi, false);
  return best;
}

}  // namespace cvxlse
