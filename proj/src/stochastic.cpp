#include "cvxlse/stochastic.hpp"

#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <cstdio>

#include "cvxlse/errors.hpp"

namespace cvxlse {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t tag) {
  return mix64(mix64(mix64(master) ^ replicate) ^ (tag * 0xd1b54a32d192ed03ULL));
}

Rng::Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

double Rng::uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  boost::random::normal_distribution<double> nd(0.0, 1.0);
  return nd(gen_);
}

double triangular_quantile(double u) { return 1.0 - std::sqrt(1.0 - u); }

EmpiricalMeasure sample_triangular(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = triangular_quantile(rng.uniform());
  return EmpiricalMeasure::density(std::move(x));
}

std::vector<double> draw_density(const TruthSpec& truth, std::size_t n, std::uint64_t seed) {
  if (!truth.is_density()) throw ModeError("draw_density needs a density truth");
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = truth.quantile(rng.uniform());
  return x;
}

EmpiricalMeasure sample_pwl_density(const TruthSpec& truth, std::size_t n, std::uint64_t seed) {
  return EmpiricalMeasure::density(draw_density(truth, n, seed));
}

EmpiricalMeasure simulate_regression(const TruthSpec& truth, std::size_t n, double sigma, std::uint64_t seed) {
  if (truth.is_density()) throw ModeError("simulate_regression needs a regression truth");
  if (!(sigma >= 0.0)) throw InputError("noise level must be >= 0");
  Rng rng(seed);
  auto x = EmpiricalMeasure::fixed_design(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eps = rng.normal();
    y[i] = truth.value(x[i]) + sigma * eps;
  }
  return EmpiricalMeasure::regression(std::move(x), std::move(y));
}

std::vector<double> trapezoid_integral(const std::vector<double>& X, double h) {
  std::vector<double> Y(X.size(), 0.0);
  for (std::size_t i = 1; i < X.size(); ++i) Y[i] = Y[i - 1] + 0.5 * h * (X[i - 1] + X[i]);
  return Y;
}

GaussianPath gaussian_path(std::size_t m, PathMode mode, const std::function<double(double)>& F0,
                           std::uint64_t seed) {
  if (m < 16) throw InputError("gaussian_path: m must be >= 16");
  if (mode == PathMode::Bridge && !F0) throw InputError("gaussian_path: bridge mode needs F0");
  GaussianPath p;
  p.mode = mode;
  p.grid.resize(m + 1);
  const double h = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i <= m; ++i) p.grid[i] = static_cast<double>(i) * h;
  p.grid[m] = 1.0;
  Rng rng(seed);
  p.X.assign(m + 1, 0.0);
  if (mode == PathMode::Motion) {
    const double sd = std::sqrt(h);
    for (std::size_t i = 1; i <= m; ++i) p.X[i] = p.X[i - 1] + sd * rng.normal();
  } else {
    std::vector<double> u(m + 1), W(m + 1, 0.0);
    for (std::size_t i = 0; i <= m; ++i) u[i] = F0(p.grid[i]);
    for (std::size_t i = 1; i <= m; ++i) {
      double du = u[i] - u[i - 1];
      if (du < 0.0) throw InputError("gaussian_path: F0 must be nondecreasing");
      W[i] = W[i - 1] + std::sqrt(du) * rng.normal();
    }
    double W1 = W[m];
    if (u[m] < 1.0) W1 += std::sqrt(1.0 - u[m]) * rng.normal();
    for (std::size_t i = 0; i <= m; ++i) p.X[i] = W[i] - u[i] * W1;
    if (u[0] == 0.0) p.X[0] = 0.0;
    if (u[m] == 1.0) p.X[m] = 0.0;
  }
  p.Y = trapezoid_integral(p.X, h);
  return p;
}

GaussianPath gaussian_path(std::size_t m, PathMode mode, std::uint64_t seed) {
  return gaussian_path(m, mode, std::function<double(double)>{}, seed);
}

GaussianPath bridge_path(std::size_t m, const TruthSpec& truth, std::uint64_t seed) {
  return gaussian_path(m, PathMode::Bridge, [&truth](double t) { return truth.cumulative(t); }, seed);
}

void write_sample_csv(std::ostream& os, const EmpiricalMeasure& data, const std::string& header) {
  if (!header.empty()) os << "# " << header << "\n";
  char buf[96];
  if (data.mode() == Mode::Density) {
    os << "x\n";
    for (double v : data.raw()) {
      std::snprintf(buf, sizeof buf, "%.17g\n", v);
      os << buf;
    }
  } else {
    os << "x,y\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", data.atoms()[i], data.raw()[i]);
      os << buf;
    }
  }
}

void write_path_csv(std::ostream& os, const GaussianPath& path, const std::string& header) {
  if (!header.empty()) os << "# " << header << "\n";
  os << "t,X,Y\n";
  char buf[128];
  for (std::size_t i = 0; i < path.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", path.grid[i], path.X[i], path.Y[i]);
    os << buf;
  }
}

}  // namespace cvxlse
