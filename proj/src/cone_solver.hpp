#pragma once

// Internal solver for the convex least squares problems.
//
// Both problems minimize  Phi(g) = 1/2 int g^2 - sum_i w_i g(x_i)  over a cone
// of continuous convex piecewise-linear functions:
//   density:    g = sum_j theta_j (tau_j - t)_+ with theta_j >= 0 on [0, inf)
//   regression: g = c0 + c1 t + sum_j theta_j (t - tau_j)_+, theta_j >= 0 on [0, 1]
// The directional derivative of Phi along a hinge at tau is
// d(tau) = H(tau) - Y(tau), a piecewise cubic in tau, where H is the second
// antiderivative of g and Y(tau) = sum_i w_i (tau - x_i)_+. The optimum has
// d >= 0 everywhere with d = d' = 0 at every knot.

#include <array>
#include <cstddef>
#include <vector>

namespace cvxlse::detail {

enum class ConeKind { Density, Regression };

/// A piecewise-linear iterate. nodes[0] = 0. Density: the last node is the
/// support end and its value is 0. Regression: the last node is 1.
struct Iterate {
  std::vector<double> nodes;
  std::vector<double> values;
  std::vector<char> pinned;  // regression: knot held on a design point

  std::size_t size() const { return nodes.size(); }
};

struct GapScan {
  double min_value = 0.0;
  double argmin = 0.0;
  // One entry per region between consecutive nodes (density adds the tail
  // region beyond the support end).
  std::vector<double> region_min;
  std::vector<double> region_arg;
  // d, d'(t-) and d'(t+) at every node.
  std::vector<double> d_node;
  std::vector<double> dl_node;
  std::vector<double> dr_node;
  // Cumulative of g at every node (F-hat or R-hat).
  std::vector<double> G_node;
};

struct SolveResult {
  Iterate iterate;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

/// Derivatives of one segment's contribution 1/2 int_A^B g^2 - sum w_i g(x_i)
/// (atoms x_i in [A, B)) with respect to (a, b, A, B), where g is linear with
/// g(A) = a, g(B) = b. P = sum w (B - x), Q = sum w (x - A), W = sum w.
struct SegmentTerms {
  double value;
  std::array<double, 4> grad;
  std::array<std::array<double, 4>, 4> hess;
};
SegmentTerms segment_terms(double a, double b, double A, double B, double W, double P, double Q);

class ConeProblem {
 public:
  ConeProblem(ConeKind kind, std::vector<double> atoms, std::vector<double> weights);

  ConeKind kind() const { return kind_; }
  double search_cap() const { return cap_; }

  /// Least squares values at the given nodes (hat basis, tridiagonal Gram).
  std::vector<double> least_squares(const std::vector<double>& nodes) const;
  /// Iterate with the given knots (density: includes the support end).
  Iterate fit_knots(std::vector<double> knots) const;
  std::vector<double> knots_of(const Iterate& it) const;
  /// Slope changes at the knots, in the order of knots_of().
  std::vector<double> slope_changes(const Iterate& it) const;
  double objective(const Iterate& it) const;
  double eval(const Iterate& it, double t) const;
  GapScan scan(const Iterate& it) const;

  SolveResult solve(const std::vector<double>& initial_knots, double tol, std::size_t max_iter,
                    bool record_trace) const;

  /// Public for testing.
  bool support_reduction(Iterate& it, double eps, std::size_t& iterations, std::size_t max_iter,
                         std::vector<double>* trace) const;
  Iterate merge_clusters(const Iterate& it) const;
  void polish(Iterate& it, std::size_t& iterations, std::size_t max_iter) const;
  bool verify(const Iterate& it, double tol) const;
  /// Moves density knots between their neighbouring atoms until the one-sided
  /// gap slope vanishes, refitting the values at every trial position.
  void refine_positions(Iterate& it) const;

 private:
  Iterate empty_iterate() const;
  std::size_t gap_index(double t) const;  // number of atoms strictly below t
  bool on_atom(double t) const;
  double snap_to_atom(double t) const;

  ConeKind kind_;
  std::vector<double> x_;
  std::vector<double> w_;
  double cap_;
  double range_;
};

}  // namespace cvxlse::detail
