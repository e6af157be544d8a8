#include "cvxlse/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cone_solver.hpp"
#include "cvxlse/errors.hpp"

namespace cvxlse {

namespace {

std::vector<double> slope_jumps(const PiecewiseLinearFn& f, const std::vector<double>& knots) {
  std::vector<double> out;
  for (double k : knots) {
    double right = (f.extension() == Extension::ClampZeroRight && k >= f.back()) ? 0.0 : f.derivative_right(k);
    out.push_back(right - f.derivative_left(k));
  }
  return out;
}

// Distance from v to the closed interval spanned by a and b.
double interval_distance(double v, double a, double b) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0.0;
}

ConvexFit run(Mode mode, const EmpiricalMeasure& data, const SolverOptions& opts) {
  if (!(opts.tol > 0.0)) throw InputError("solver tolerance must be positive");
  auto atoms = std::vector<double>(data.atoms().begin(), data.atoms().end());
  auto weights = std::vector<double>(data.weights().begin(), data.weights().end());
  const auto kind = mode == Mode::Density ? detail::ConeKind::Density : detail::ConeKind::Regression;
  detail::ConeProblem prob(kind, atoms, weights);
  const std::size_t cap = opts.max_iter ? opts.max_iter : 10 * data.n();
  auto res = prob.solve(opts.initial_knots, opts.tol, cap, opts.record_trace);

  ConvexFit fit;
  fit.mode = mode;
  auto nodes = res.iterate.nodes;
  auto values = res.iterate.values;
  if (mode == Mode::Density) {
    if (nodes.size() == 1) {
      nodes = {0.0, atoms.back()};
      values = {0.0, 0.0};
    }
    values.back() = 0.0;
    fit.estimate = PiecewiseLinearFn(nodes, values, Extension::ClampZeroRight);
  } else {
    fit.estimate = PiecewiseLinearFn(nodes, values, Extension::Extend);
  }
  fit.knot_set = prob.knots_of(res.iterate);
  fit.objective = res.objective;
  fit.iterations = res.iterations;
  fit.objective_trace = std::move(res.objective_trace);
  fit.diagnostics = characterization_report(fit, data);
  const auto& d = fit.diagnostics;
  fit.converged = d.min_gap >= -opts.tol && d.knot_equality_error <= opts.tol &&
                  d.df_match_error <= opts.tol && d.fubini_residual <= opts.tol * d.scale;
  if (fit.converged && mode == Mode::Density) {
    double mass = fit.estimate.antiderivative(0.0, 0.0)(fit.estimate.back());
    if (std::abs(mass - 1.0) > 1e-8) fit.converged = false;
  }
  if (!fit.converged) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "convex LSE did not meet the characterization tolerance (min_gap=%.3g, knot=%.3g, df=%.3g)",
                  d.min_gap, d.knot_equality_error, d.df_match_error);
    throw ConvergenceError(buf, std::move(fit));
  }
  return fit;
}

}  // namespace

ConvexFit fit_convex_density(const EmpiricalMeasure& sample, const SolverOptions& opts) {
  if (sample.mode() != Mode::Density) throw ModeError("fit_convex_density needs a density sample");
  return run(Mode::Density, sample, opts);
}

ConvexFit fit_convex_regression(const EmpiricalMeasure& data, const SolverOptions& opts) {
  if (data.mode() != Mode::Regression) throw ModeError("fit_convex_regression needs regression data");
  return run(Mode::Regression, data, opts);
}

CharacterizationReport characterization_report(const ConvexFit& fit, const EmpiricalMeasure& data,
                                               const TruthSpec* truth) {
  if (fit.mode != data.mode()) throw ModeError("characterization_report: fit and data modes differ");
  const bool dens = fit.mode == Mode::Density;
  CharacterizationReport rep;
  const PiecewisePoly F = fit.estimate.antiderivative(0.0, 0.0);
  const PiecewisePoly H = F.antiderivative(0.0, 0.0);
  const StepFn Fn = data.cumulative();
  const PiecewisePoly Y = PiecewisePoly(Fn).antiderivative(0.0, 0.0);
  const double hi = dens ? std::max(fit.estimate.back(), data.atoms().back()) : 1.0;

  rep.min_gap = -sup_diff(Y, H, 0.0, hi, true).value;

  std::vector<double> pts = fit.knot_set;
  if (!dens) pts.push_back(1.0);
  for (double t : pts) {
    rep.knot_equality_error = std::max(rep.knot_equality_error, std::abs(H(t) - Y(t)));
    rep.df_match_error = std::max(rep.df_match_error, interval_distance(F(t), Fn.left_limit(t), Fn(t)));
  }

  const auto jumps = slope_jumps(fit.estimate, fit.knot_set);
  double fub = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    fub += jumps[k] * (H(fit.knot_set[k]) - Y(fit.knot_set[k]));
    scale += std::abs(jumps[k]);
  }
  rep.fubini_residual = std::abs(fub);
  rep.scale = scale > 0.0 ? scale : 1.0;

  if (truth) {
    if (truth->is_density() != dens) throw ModeError("characterization_report: truth kind does not match the fit");
    rep.marshall_ratio = marshall_ratio(fit, data, *truth);
  }
  return rep;
}

double marshall_ratio(const ConvexFit& fit, const EmpiricalMeasure& data, const TruthSpec& truth) {
  const auto d = marshall_distances(fit, data, truth);
  return d.fit / d.empirical;
}

MarshallDistances marshall_distances(const ConvexFit& fit, const EmpiricalMeasure& data, const TruthSpec& truth) {
  const bool dens = fit.mode == Mode::Density;
  const PiecewisePoly F = fit.estimate.antiderivative(0.0, 0.0);
  const PiecewisePoly Fn = data.cumulative();
  const double hi = dens ? std::max({fit.estimate.back(), data.atoms().back(), truth.support_end()}) : 1.0;
  if (auto F0 = truth.cumulative_poly()) {
    const double num = sup_diff(F, *F0, 0.0, hi).value;
    const double den = sup_diff(Fn, *F0, 0.0, hi).value;
    return {num, den};
  }
  // Truth cumulative without a cubic form: scan every breakpoint of the
  // estimate and the data (both one-sided limits) plus a fine uniform grid.
  std::vector<double> pts(fit.estimate.breakpoints().begin(), fit.estimate.breakpoints().end());
  pts.insert(pts.end(), data.atoms().begin(), data.atoms().end());
  const int m = 200000;
  for (int i = 0; i <= m; ++i) pts.push_back(hi * i / m);
  double num = 0.0, den = 0.0;
  for (double t : pts) {
    if (t < 0.0 || t > hi) continue;
    const double f0 = truth.cumulative(t);
    num = std::max(num, std::abs(F(t) - f0));
    den = std::max({den, std::abs(Fn(t) - f0), std::abs(Fn.left_limit(t) - f0)});
  }
  return {num, den};
}

double value_at_zero(const ConvexFit& fit) {
  if (fit.mode != Mode::Density) throw ModeError("value_at_zero is defined for density fits only");
  return fit.estimate(0.0);
}

void write_fit_csv(std::ostream& os, const ConvexFit& fit, const std::vector<double>& grid, const TruthSpec* truth) {
  os << (truth ? "x,estimate,truth\n" : "x,estimate\n");
  char buf[128];
  for (double x : grid) {
    if (truth)
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, fit.estimate(x), truth->value(x));
    else
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x, fit.estimate(x));
    os << buf;
  }
}

}  // namespace cvxlse
