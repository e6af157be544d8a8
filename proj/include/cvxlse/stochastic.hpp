#pragma once

// Seeded samplers: densities, fixed-design regression data and discretized
// Gaussian paths for the limit processes.

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "cvxlse/empirical.hpp"
#include "cvxlse/truth.hpp"

namespace cvxlse {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Independent stream seed for (master seed, replicate index, stream tag).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t tag = 0);

/// mt19937_64 seeded through mix64, with 53-bit uniforms and ziggurat normals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  /// Uniform on [0, 1).
  double uniform();
  double normal();

 private:
  std::mt19937_64 gen_;
};

/// F0^{-1}(u) = 1 - sqrt(1 - u) for the triangular density 2(1 - t) on [0, 1].
double triangular_quantile(double u);

EmpiricalMeasure sample_triangular(std::size_t n, std::uint64_t seed);
/// Inverse-CDF sampling from any density truth. Throws ModeError for a
/// regression truth.
EmpiricalMeasure sample_pwl_density(const TruthSpec& truth, std::size_t n, std::uint64_t seed);
/// Raw (unsorted) draws, in generation order.
std::vector<double> draw_density(const TruthSpec& truth, std::size_t n, std::uint64_t seed);

/// Y_i = r0(i / (n + 1)) + sigma * eps_i with standard normal eps.
EmpiricalMeasure simulate_regression(const TruthSpec& truth, std::size_t n, double sigma, std::uint64_t seed);

enum class PathMode { Bridge, Motion };

/// X and Y = int_0^t X (trapezoid rule) on the uniform grid t_i = i / m.
struct GaussianPath {
  std::vector<double> grid;
  std::vector<double> X;
  std::vector<double> Y;
  PathMode mode = PathMode::Motion;

  std::size_t m() const { return grid.size() - 1; }
};

/// Bridge mode: X(t) = U(F0(t)) for a standard Brownian bridge U, built as
/// W(u) - u W(1) from Gaussian increments in the u-scale. Motion mode: X is
/// standard Brownian motion. Throws InputError if m < 16 or bridge mode has
/// no F0.
GaussianPath gaussian_path(std::size_t m, PathMode mode, const std::function<double(double)>& F0,
                           std::uint64_t seed);
GaussianPath gaussian_path(std::size_t m, PathMode mode, std::uint64_t seed);
GaussianPath bridge_path(std::size_t m, const TruthSpec& truth, std::uint64_t seed);

/// Y from X on a uniform grid by the trapezoid rule.
std::vector<double> trapezoid_integral(const std::vector<double>& X, double h);

void write_sample_csv(std::ostream& os, const EmpiricalMeasure& data, const std::string& header);
void write_path_csv(std::ostream& os, const GaussianPath& path, const std::string& header);

}  // namespace cvxlse
