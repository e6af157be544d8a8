#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cvxlse/errors.hpp"
#include "cvxlse/invelope.hpp"
#include "cvxlse/stochastic.hpp"
#include "cvxlse/truth.hpp"

using namespace cvxlse;

namespace {

GaussianPath zero_path(std::size_t m) {
  GaussianPath p;
  p.mode = PathMode::Bridge;
  for (std::size_t i = 0; i <= m; ++i) p.grid.push_back(static_cast<double>(i) / m);
  p.X.assign(m + 1, 0.0);
  p.Y.assign(m + 1, 0.0);
  return p;
}

// Every other node of a path, with Y recomputed on the coarse grid.
GaussianPath coarsen(const GaussianPath& fine) {
  GaussianPath c;
  c.mode = fine.mode;
  for (std::size_t i = 0; i < fine.grid.size(); i += 2) {
    c.grid.push_back(fine.grid[i]);
    c.X.push_back(fine.X[i]);
  }
  c.Y = trapezoid_integral(c.X, 1.0 / static_cast<double>(c.grid.size() - 1));
  return c;
}

InvelopeOptions single_k(double k) {
  InvelopeOptions o;
  o.k_schedule = {k};
  return o;
}

}  // namespace

TEST_CASE("zero path: interior second derivative vanishes") {
  auto inv = compute_invelope(zero_path(200));
  CHECK(inv.converged);
  for (std::size_t i = 1; i < 200; ++i) CHECK(std::abs(inv.g[i]) <= 1e-9);
  CHECK(std::abs(limit_T(inv)) <= 1e-9);
}

TEST_CASE("KKT certificate of the discrete problem at a finite boundary value") {
  // Independent check from the problem definition: with A the second
  // difference operator, the gradient of the objective in the interior
  // values must equal A^T lambda with lambda >= 0 and lambda * (A g) = 0.
  const std::size_t m = 64;
  const auto tri = TruthSpec::triangular();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto path = bridge_path(m, tri, seed);
    for (double k : {1.0, 8.0, 1e3}) {
      auto inv = compute_invelope(path, {0.0, 1.0}, single_k(k));
      const double h = 1.0 / m;
      const auto& X = path.X;
      const std::size_t N = m;
      Eigen::VectorXd grad(N - 1);
      for (std::size_t i = 1; i < N; ++i) {
        double p = 0.5 * (X[i + 1] - X[i - 1]);
        if (i == 1) p += 0.5 * (X[1] - X[0]);
        if (i == N - 1) p += 0.5 * (X[N] - X[N - 1]);
        grad[i - 1] = h * inv.g[i] - p;
      }
      // A^T is the (N-1) x (N-1) tridiagonal (1, -2, 1) acting on lambda.
      Eigen::MatrixXd At = Eigen::MatrixXd::Zero(N - 1, N - 1);
      for (std::size_t r = 0; r + 1 < N; ++r) {
        At(r, r) = -2.0;
        if (r > 0) At(r, r - 1) = 1.0;
        if (r + 2 < N) At(r, r + 1) = 1.0;
      }
      // Stationarity: grad - A^T lambda = 0 (minimizing with constraint A g >= 0).
      Eigen::VectorXd lambda = At.fullPivLu().solve(grad);
      double lmax = lambda.cwiseAbs().maxCoeff();
      for (std::size_t j = 1; j < N; ++j) {
        const double sd = inv.g[j - 1] - 2.0 * inv.g[j] + inv.g[j + 1];
        CHECK(sd >= -1e-10 * std::max(1.0, k));
        CHECK(lambda[j - 1] >= -1e-10 * std::max(1.0, lmax));
        CHECK(std::abs(lambda[j - 1] * sd) <= 1e-10 * std::max(1.0, lmax * k));
      }
      CHECK(inv.g.front() == k);
      CHECK(inv.g.back() == k);
    }
  }
}

TEST_CASE("bridge path at m = 800: defining conditions") {
  auto path = bridge_path(800, TruthSpec::triangular(), 20240611);
  auto inv = compute_invelope(path);
  CHECK(inv.converged);
  CHECK(inv.warning.empty());
  const auto& r = inv.residuals;
  CHECK(r.min_gap >= -1e-6);
  CHECK(r.fubini <= 1e-6 * inv.scale());
  CHECK(r.left_value <= 1e-12);
  CHECK(r.right_value <= 1e-12);
  // One-sided slopes agree with X up to the discretization floor.
  CHECK(r.left_slope <= 1e-3);
  CHECK(r.right_slope <= 1e-3);
  for (std::size_t i = 1; i + 1 < inv.g.size(); ++i) CHECK(inv.g[i - 1] - 2 * inv.g[i] + inv.g[i + 1] >= -1e-10);
  // H touches Y at every knot.
  for (auto j : inv.knots) CHECK(std::abs(inv.H[j] - inv.Y[j]) <= 1e-10);
  // The discretized Y differs from the trapezoid path only in the end cells.
  for (std::size_t i = 0; i < inv.Y.size(); ++i) CHECK(std::abs(inv.Y[i] - path.Y[i]) <= 1e-4);
  CHECK(inv.phi_monotone);
  CHECK(inv.k_final >= inv.steps.front().k);
}

TEST_CASE("boundary residuals and objective over the last schedule steps") {
  const auto tri = TruthSpec::triangular();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    InvelopeOptions o;
    o.stop_tol = -1.0;  // run the whole schedule
    auto inv = compute_invelope(bridge_path(400, tri, seed), {0.0, 1.0}, o);
    const auto& s = inv.steps;
    REQUIRE(s.size() == o.k_schedule.size());
    for (std::size_t i = s.size() - 2; i < s.size(); ++i) {
      CHECK(s[i].residuals.left_slope <= s[i - 1].residuals.left_slope + 1e-12);
      CHECK(s[i].residuals.right_slope <= s[i - 1].residuals.right_slope + 1e-12);
    }
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].phi <= s[i - 1].phi + 1e-12);
    CHECK(inv.phi_monotone);
  }
}

TEST_CASE("grid refinement: m = 400 against m = 800 on the same path") {
  const auto tri = TruthSpec::triangular();
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto fine = bridge_path(800, tri, seed);
    auto coarse = coarsen(fine);
    auto a = compute_invelope(fine), b = compute_invelope(coarse);
    double d = 0.0;
    for (std::size_t i = 0; i < b.grid.size(); ++i) {
      const double t = b.grid[i];
      if (t < 0.05 || t > 0.95) continue;
      d = std::max(d, std::abs(a.g[2 * i] - b.g[i]));
    }
    CHECK(d <= 0.1);
  }
}

TEST_CASE("T is nonnegative and the interior second derivative integrates to X(1) - X(0)") {
  const auto tri = TruthSpec::triangular();
  InvelopeOptions full;
  full.stop_tol = -1.0;
  for (std::uint64_t r = 0; r < 300; ++r) {
    auto path = bridge_path(200, tri, derive_seed(3, r));
    CHECK(limit_T(compute_invelope(path)) >= -1e-6);
    auto inv = compute_invelope(path, {0.0, 1.0}, full);
    CHECK(limit_T(inv) >= -1e-6);
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < inv.g.size(); ++i) s += inv.g[i] / 200.0;
    CHECK(std::abs(s - (path.X.back() - path.X.front())) <= 1e-6);
  }
}

TEST_CASE("two starting knot sets give the same solution") {
  auto path = bridge_path(800, TruthSpec::triangular(), 99);
  InvelopeOptions o1, o2;
  o2.initial_knots = {5, 100, 250, 400, 401, 402, 600, 790};
  auto a = compute_invelope(path, {0.0, 1.0}, o1);
  InvelopeOptions o3 = o2;
  o3.k_schedule = {o1.k_schedule.back()};
  auto b = compute_invelope(path, {0.0, 1.0}, o3);
  auto c = compute_invelope(path, {0.0, 1.0}, o2);
  for (std::size_t i = 40; i <= 760; ++i) {
    CHECK(std::abs(a.g[i] - b.g[i]) <= 1e-8);
    CHECK(std::abs(a.g[i] - c.g[i]) <= 1e-8);
  }
}

TEST_CASE("sub-interval mode") {
  auto path = bridge_path(800, TruthSpec::triangular(), 5);
  InvelopeOptions full;
  full.stop_tol = -1.0;
  auto inv = compute_invelope(path, {0.25, 0.75}, full);
  CHECK(inv.phi_monotone);
  CHECK(inv.grid.front() == doctest::Approx(0.25));
  CHECK(inv.grid.back() == doctest::Approx(0.75));
  CHECK(inv.grid.size() == 401);
  CHECK(inv.H.front() == path.Y[200]);
  CHECK(inv.H.back() == path.Y[600]);
  CHECK(inv.residuals.min_gap >= -1e-10);
  CHECK(inv.residuals.left_slope <= 1e-3);
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < inv.g.size(); ++i) s += inv.g[i] / 800.0;
  CHECK(std::abs(s - (path.X[600] - path.X[200])) <= 1e-6);
  CHECK_THROWS_AS(compute_invelope(path, {0.25, 0.26}), InputError);
  CHECK_THROWS_AS(compute_invelope(path, {0.5, 0.25}), InputError);
}

TEST_CASE("motion mode and rescaling of the regression limit") {
  auto path = gaussian_path(800, PathMode::Motion, 17);
  auto inv = compute_invelope(path);
  CHECK(inv.converged);
  CHECK(inv.residuals.min_gap >= -1e-10);
  for (double x : {0.3, 0.5, 0.71}) {
    auto [v, d] = rescale_regression_limit(inv, 0.0, 1.0, 1.0, x);
    CHECK(v == doctest::Approx(inv.second_derivative_at(x)).epsilon(1e-15));
    CHECK(d == doctest::Approx(inv.third_derivative_at(x)).epsilon(1e-15));
    auto [v2, d2] = rescale_regression_limit(inv, 0.0, 1.0, 2.0, x);
    CHECK(v2 == doctest::Approx(2 * v).epsilon(1e-15));
    CHECK(d2 == doctest::Approx(2 * d).epsilon(1e-15));
  }
  auto [v, d] = rescale_regression_limit(inv, 0.25, 0.75, 1.0, 0.5);
  CHECK(v == doctest::Approx(inv.second_derivative_at(0.5) / std::sqrt(0.5)).epsilon(1e-14));
  CHECK(d == doctest::Approx(inv.third_derivative_at(0.5) / std::pow(0.5, 1.5)).epsilon(1e-14));
  CHECK_THROWS_AS(rescale_regression_limit(inv, 0.25, 0.75, 1.0, 0.8), DomainError);
  CHECK_THROWS_AS(rescale_regression_limit(inv, 0.25, 0.75, 1.0, 0.25), DomainError);
}

TEST_CASE("regression rescaling agrees with the invelope computed on the sub-interval") {
  // W on [a, b] equals X(a) + sqrt(b - a) W~((t - a) / (b - a)); build W~ from
  // the same increments and compare the two discretizations node by node.
  const double a = 0.25, b = 0.75, L = b - a;
  InvelopeOptions full;
  full.stop_tol = -1.0;
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    auto path = gaussian_path(800, PathMode::Motion, seed);
    auto direct = compute_invelope(path, {a, b}, full);
    GaussianPath std_path;
    std_path.mode = PathMode::Motion;
    for (std::size_t i = 0; i <= 400; ++i) {
      std_path.grid.push_back(i / 400.0);
      std_path.X.push_back((path.X[200 + i] - path.X[200]) / std::sqrt(L));
    }
    std_path.Y = trapezoid_integral(std_path.X, 1.0 / 400);
    auto unit = compute_invelope(std_path, {0.0, 1.0}, full);
    for (std::size_t i = 20; i <= 380; i += 10) {
      const double x = a + L * i / 400.0;
      auto [v, d] = rescale_regression_limit(unit, a, b, 1.0, x);
      CHECK(v == doctest::Approx(direct.g[i]).epsilon(1e-8).scale(1.0));
      CHECK(d == doctest::Approx(direct.dg[i]).epsilon(1e-7).scale(1.0));
    }
  }
}

TEST_CASE("interpolated derivatives") {
  auto inv = compute_invelope(bridge_path(100, TruthSpec::triangular(), 8));
  CHECK(inv.second_derivative_at(0.5) == inv.g[50]);
  CHECK(inv.second_derivative_at(0.505) == doctest::Approx(0.5 * (inv.g[50] + inv.g[51])));
  CHECK(inv.third_derivative_at(0.505) == inv.dg[50]);
  CHECK(inv.dg[50] == doctest::Approx((inv.g[51] - inv.g[50]) * 100));
  CHECK_THROWS_AS(inv.second_derivative_at(1.5), DomainError);
}

TEST_CASE("option validation") {
  auto path = bridge_path(64, TruthSpec::triangular(), 1);
  InvelopeOptions o;
  o.k_schedule = {4, 2};
  CHECK_THROWS_AS(compute_invelope(path, {0, 1}, o), InputError);
  o = {};
  o.margin = 0.5;
  CHECK_THROWS_AS(compute_invelope(path, {0, 1}, o), InputError);
  o = {};
  o.k_schedule = {2, 4};
  o.stop_tol = -1;  // never met: the schedule runs out
  auto inv = compute_invelope(path, {0, 1}, o);
  CHECK_FALSE(inv.converged);
  CHECK_FALSE(inv.warning.empty());
  CHECK(inv.k_final == 4);
}

TEST_CASE("quantile estimation: order, metadata, determinism") {
  auto a = estimate_quantiles(300, default_alphas(), 200, {}, 42, 1);
  auto b = estimate_quantiles(300, default_alphas(), 200, {}, 42, 3);
  CHECK(a.T == b.T);
  CHECK(a.table.quantiles == b.table.quantiles);
  CHECK(a.table.standard_errors == b.table.standard_errors);
  const auto& t = a.table;
  CHECK(t.n_sims == 300);
  CHECK(t.m == 200);
  CHECK(t.seed == 42);
  CHECK(t.non_converged == 0);
  for (std::size_t i = 1; i < t.quantiles.size(); ++i) CHECK(t.quantiles[i] < t.quantiles[i - 1]);
  for (double s : t.standard_errors) CHECK(s > 0.0);
  CHECK(t.min_T >= -1e-6);
  auto c = estimate_quantiles(300, default_alphas(), 200, {}, 43, 1);
  CHECK(c.T != a.T);
  CHECK_THROWS_AS(estimate_quantiles(99, default_alphas(), 200, {}, 1), InputError);
}

TEST_CASE("upper quantiles and table lookup") {
  std::vector<double> s{1, 2, 3, 4, 5};
  CHECK(upper_quantile(s, 0.5) == 3.0);
  CHECK(upper_quantile(s, 0.25) == 4.0);
  CHECK(upper_quantile(s, 0.1) == doctest::Approx(4.6));
  QuantileTable t;
  t.alphas = {0.01, 0.05, 0.2};
  t.quantiles = {4.0, 3.0, 2.0};
  auto e = t.lookup(0.05);
  CHECK(e.t_alpha == 3.0);
  CHECK_FALSE(e.interpolated);
  auto i = t.lookup(0.1);
  CHECK(i.interpolated);
  CHECK(i.t_alpha == doctest::Approx(3.0 - std::log(2.0) / std::log(4.0)));
  CHECK_THROWS_AS(t.lookup(0.3), DomainError);
  CHECK_THROWS_AS(t.lookup(0.005), DomainError);
}
