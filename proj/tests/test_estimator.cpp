#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cone_solver.hpp"
#include "cvxlse/errors.hpp"
#include "cvxlse/estimator.hpp"
#include "cvxlse/stochastic.hpp"
#include "oracle/grid_qp.hpp"

using namespace cvxlse;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

double oracle_distance(const ConvexFit& fit, const EmpiricalMeasure& data) {
  const bool dens = data.mode() == Mode::Density;
  const double hi = dens ? 3.0 * data.atoms().back() : 1.0;
  auto o = oracle::solve_grid_qp(0.0, hi, 2000, vec(data.atoms()), vec(data.weights()), dens);
  return oracle::sup_distance(
      o, [&](double t) { return fit.estimate(t); }, vec(fit.estimate.breakpoints()), 0.0, hi);
}

void check_characterization(const ConvexFit& fit, double tol = 1e-8) {
  const auto& d = fit.diagnostics;
  CHECK(d.min_gap >= -tol);
  CHECK(d.knot_equality_error <= tol);
  CHECK(d.df_match_error <= tol);
  CHECK(d.fubini_residual <= tol * d.scale);
}

TruthSpec linear_regression_truth() {
  return TruthSpec::regression_pwl(PiecewiseLinearFn({0.0, 1.0}, {0.0, 1.0}, Extension::Extend));
}

}  // namespace

TEST_CASE("segment terms match finite differences") {
  const std::vector<double> xs{0.31, 0.47, 0.52, 0.9};
  const std::vector<double> ws{0.2, -0.1, 0.35, 0.15};
  auto value = [&](const std::array<double, 4>& p) {
    double W = 0, P = 0, Q = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      W += ws[i];
      P += ws[i] * (p[3] - xs[i]);
      Q += ws[i] * (xs[i] - p[2]);
    }
    return detail::segment_terms(p[0], p[1], p[2], p[3], W, P, Q);
  };
  const std::array<double, 4> p0{1.3, -0.4, 0.2, 1.1};
  auto t0 = value(p0);
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    auto pp = p0, pm = p0;
    pp[i] += h;
    pm[i] -= h;
    auto tp = value(pp), tm = value(pm);
    CHECK(t0.grad[i] == doctest::Approx((tp.value - tm.value) / (2 * h)).epsilon(1e-7));
    for (int j = 0; j < 4; ++j)
      CHECK(t0.hess[i][j] == doctest::Approx((tp.grad[j] - tm.grad[j]) / (2 * h)).epsilon(1e-6));
  }
  // Closed-form value check: g linear, 1/2 int g^2 - sum w g(x).
  double direct = 0.5 * (p0[3] - p0[2]) * (p0[0] * p0[0] + p0[0] * p0[1] + p0[1] * p0[1]) / 3.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double s = (xs[i] - p0[2]) / (p0[3] - p0[2]);
    direct -= ws[i] * ((1 - s) * p0[0] + s * p0[1]);
  }
  CHECK(t0.value == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("density objective is never positive") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = sample_triangular(40 + 7 * seed, seed);
    auto fit = fit_convex_density(s);
    CHECK(fit.objective <= 0.0);
  }
}

TEST_CASE("density fit invariants and characterization") {
  for (std::size_t n : {10u, 100u, 1000u}) {
    auto s = sample_triangular(n, 17 + n);
    auto fit = fit_convex_density(s);
    CHECK(fit.converged);
    CHECK(fit.mode == Mode::Density);
    CHECK(fit.estimate.is_convex(1e-9));
    CHECK(fit.estimate.extension() == Extension::ClampZeroRight);
    auto v = fit.estimate.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(v[i] >= 0.0);
      if (i) CHECK(v[i] <= v[i - 1]);
    }
    const double mass = fit.estimate.antiderivative(0.0, 0.0)(fit.estimate.back());
    CHECK(std::abs(mass - 1.0) <= 1e-8);
    check_characterization(fit);
    CHECK(std::is_sorted(fit.knot_set.begin(), fit.knot_set.end()));
    // The last knot is the support end, which may lie beyond the data.
    CHECK(fit.knot_set.back() == doctest::Approx(fit.estimate.back()));
  }
}

TEST_CASE("density fit matches the grid oracle, n = 25") {
  auto s = sample_triangular(25, 2024);
  auto fit = fit_convex_density(s);
  CHECK(oracle_distance(fit, s) <= 1e-4);
}

TEST_CASE("regression fit matches the grid oracle, n = 30") {
  auto d = simulate_regression(linear_regression_truth(), 30, 0.1, 2024);
  auto fit = fit_convex_regression(d);
  CHECK(oracle_distance(fit, d) <= 1e-4);
}

TEST_CASE("oracle equivalence on twenty small instances") {
  std::mt19937_64 pick(99);
  for (int r = 0; r < 20; ++r) {
    const std::size_t n = 5 + pick() % 26;
    const std::uint64_t seed = 5000 + r;
    if (r % 2 == 0) {
      auto s = sample_triangular(n, seed);
      auto fit = fit_convex_density(s);
      CHECK(oracle_distance(fit, s) <= 1e-4);
    } else {
      auto truth = r % 4 == 1 ? linear_regression_truth() : TruthSpec::regression_quadratic(0.2, -1.0, 1.5);
      auto d = simulate_regression(truth, n, 0.2, seed);
      auto fit = fit_convex_regression(d);
      CHECK(oracle_distance(fit, d) <= 1e-4);
    }
  }
}

TEST_CASE("Marshall inequality, density n = 500") {
  auto s = sample_triangular(500, 7);
  auto fit = fit_convex_density(s);
  const auto tri = TruthSpec::triangular();
  auto rep = characterization_report(fit, s, &tri);
  REQUIRE(rep.marshall_ratio.has_value());
  CHECK(*rep.marshall_ratio <= 2.0);
  CHECK(marshall_ratio(fit, s, TruthSpec::triangular()) == doctest::Approx(*rep.marshall_ratio));
}

TEST_CASE("Marshall inequality holds for regression fits") {
  auto truth = TruthSpec::regression_quadratic(0.0, -0.5, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = simulate_regression(truth, 300, 0.5, seed);
    auto fit = fit_convex_regression(d);
    auto rep = characterization_report(fit, d, &truth);
    CHECK(*rep.marshall_ratio <= 2.0 + 1e-9);
  }
}

TEST_CASE("regression characterization and knot conditions") {
  auto d = simulate_regression(TruthSpec::regression_quadratic(0.1, -0.3, 2.0), 400, 0.3, 3);
  auto fit = fit_convex_regression(d);
  CHECK(fit.estimate.is_convex(1e-9));
  CHECK(fit.estimate.extension() == Extension::Extend);
  check_characterization(fit);
  // R-hat(1) = R_n(1).
  const double R1 = fit.estimate.antiderivative(0.0, 0.0)(1.0);
  CHECK(std::abs(R1 - d.cumulative()(1.0)) <= 1e-8);
}

TEST_CASE("noiseless linear regression satisfies the defining conditions") {
  auto d = simulate_regression(linear_regression_truth(), 5000, 0.0, 1);
  auto fit = fit_convex_regression(d);
  CHECK(fit.diagnostics.min_gap >= -1e-8);
  CHECK(fit.diagnostics.knot_equality_error <= 1e-8);
}

TEST_CASE("noiseless quadratic regression is close to the truth") {
  const std::size_t n = 200;
  auto truth = TruthSpec::regression_quadratic(0.0, 0.0, 1.0);
  auto d = simulate_regression(truth, n, 0.0, 0);
  auto fit = fit_convex_regression(d);
  auto o = oracle::solve_grid_qp(0.0, 1.0, 2000, vec(d.atoms()), vec(d.weights()), false, 1);
  double sup_fit = 0.0, sup_oracle = 0.0;
  for (int i = 0; i <= 6000; ++i) {
    const double t = 0.2 + 0.6 * i / 6000.0;
    sup_fit = std::max(sup_fit, std::abs(fit.estimate(t) - t * t));
    sup_oracle = std::max(sup_oracle, std::abs(o(t) - t * t));
  }
  CHECK(sup_oracle <= 0.05);
  CHECK(sup_fit <= 0.05);
}

TEST_CASE("value at zero") {
  ConvexFit f;
  f.estimate = PiecewiseLinearFn({0.0, 1.0}, {2.0, 0.0}, Extension::ClampZeroRight);
  CHECK(value_at_zero(f) == 2.0);
  f.estimate = PiecewiseLinearFn({0.0, 0.5, 2.0}, {3.0, 1.0, 0.0}, Extension::ClampZeroRight);
  CHECK(value_at_zero(f) == 3.0);
  f.mode = Mode::Regression;
  CHECK_THROWS_AS(value_at_zero(f), ModeError);
}

TEST_CASE("objective trace is nonincreasing") {
  SolverOptions opts;
  opts.record_trace = true;
  auto s = sample_triangular(300, 12);
  auto fit = fit_convex_density(s, opts);
  REQUIRE(fit.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-14 * std::abs(fit.objective_trace[i - 1]));
  CHECK(fit.objective_trace.back() == doctest::Approx(fit.objective).epsilon(1e-14));

  auto d = simulate_regression(linear_regression_truth(), 300, 0.2, 12);
  auto rfit = fit_convex_regression(d, opts);
  for (std::size_t i = 1; i < rfit.objective_trace.size(); ++i)
    CHECK(rfit.objective_trace[i] <= rfit.objective_trace[i - 1] + 1e-14 * std::abs(rfit.objective_trace[i - 1]));
}

TEST_CASE("refitting from the solution's knots is idempotent") {
  auto s = sample_triangular(250, 31);
  auto fit = fit_convex_density(s);
  SolverOptions opts;
  opts.initial_knots = fit.knot_set;
  auto again = fit_convex_density(s, opts);
  double sup = 0.0;
  for (double t : fit.estimate.breakpoints()) sup = std::max(sup, std::abs(fit.estimate(t) - again.estimate(t)));
  for (double t : again.estimate.breakpoints()) sup = std::max(sup, std::abs(fit.estimate(t) - again.estimate(t)));
  CHECK(sup <= 1e-10);

  auto d = simulate_regression(linear_regression_truth(), 250, 0.2, 31);
  auto rfit = fit_convex_regression(d);
  opts.initial_knots = rfit.knot_set;
  auto ragain = fit_convex_regression(d, opts);
  sup = 0.0;
  for (double t : rfit.estimate.breakpoints()) sup = std::max(sup, std::abs(rfit.estimate(t) - ragain.estimate(t)));
  for (double t : ragain.estimate.breakpoints()) sup = std::max(sup, std::abs(rfit.estimate(t) - ragain.estimate(t)));
  CHECK(sup <= 1e-10);
}

TEST_CASE("ties are merged into weighted atoms") {
  auto s = EmpiricalMeasure::density({0.5, 0.1, 0.5, 0.3, 0.1, 0.1});
  REQUIRE(s.atoms().size() == 3);
  CHECK(s.weights()[0] == doctest::Approx(0.5));
  CHECK(s.weights()[2] == doctest::Approx(1.0 / 3.0));
  auto fit = fit_convex_density(s);
  check_characterization(fit);
}

TEST_CASE("input and mode errors") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(EmpiricalMeasure::density({0.1, nan, 0.3}), InputError);
  CHECK_THROWS_AS(EmpiricalMeasure::density({0.2, 0.2, 0.2}), InputError);
  CHECK_THROWS_AS(EmpiricalMeasure::density({-0.1, 0.3}), InputError);
  CHECK_THROWS_AS(EmpiricalMeasure::regression({0.2, 0.1}, {1.0, 2.0}), InputError);
  CHECK_THROWS_AS(EmpiricalMeasure::regression({0.0, 0.5}, {1.0, 2.0}), InputError);
  CHECK_THROWS_AS(EmpiricalMeasure::regression({0.2, 0.5}, {1.0, nan}), InputError);
  auto s = sample_triangular(50, 1);
  auto d = simulate_regression(linear_regression_truth(), 50, 0.1, 1);
  CHECK_THROWS_AS(fit_convex_density(d), ModeError);
  CHECK_THROWS_AS(fit_convex_regression(s), ModeError);
  auto fit = fit_convex_density(s);
  CHECK_THROWS_AS(characterization_report(fit, d), ModeError);
  auto tri = TruthSpec::triangular();
  auto rfit = fit_convex_regression(d);
  CHECK_THROWS_AS(characterization_report(rfit, d, &tri), ModeError);
}

TEST_CASE("iteration cap raises a convergence error carrying the best iterate") {
  auto s = sample_triangular(2000, 5);
  SolverOptions opts;
  opts.max_iter = 1;
  try {
    (void)fit_convex_density(s, opts);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK_FALSE(e.best().converged);
    CHECK(e.best().estimate.is_convex(1e-9));
    CHECK(e.best().objective <= 0.0);
  }
}

TEST_CASE("csv export") {
  ConvexFit f;
  f.estimate = PiecewiseLinearFn({0.0, 1.0}, {2.0, 0.0}, Extension::ClampZeroRight);
  std::ostringstream os;
  auto tri = TruthSpec::triangular();
  write_fit_csv(os, f, {0.0, 0.5, 1.5}, &tri);
  CHECK(os.str() == "x,estimate,truth\n0,2,2\n0.5,1,1\n1.5,0,0\n");
}
