#pragma once

// JSON and CSV serialization. Doubles are written in shortest round-trip
// form, so every value reads back bit for bit.

#include <istream>
#include <string>

#include "cvxlse/empirical.hpp"
#include "cvxlse/estimator.hpp"
#include "cvxlse/invelope.hpp"
#include "cvxlse/pwl.hpp"
#include "cvxlse/truth.hpp"

namespace cvxlse {

/// {"x": [...], "v": [...], "ext": "clamp" | "extend"}
std::string to_json(const PiecewiseLinearFn& f);
PiecewiseLinearFn pwl_from_json(const std::string& text);

/// Estimate, knots, objective, iterations, convergence and diagnostics.
std::string to_json(const ConvexFit& fit);
ConvexFit fit_from_json(const std::string& text);

/// {"alphas", "quantiles", "stderr", "n_sims", "m", "seed", "min_T",
/// "non_converged", "options"}
std::string to_json(const QuantileTable& table);
QuantileTable table_from_json(const std::string& text);

/// {"kind": "triangular"} | {"kind": "uniform"}
/// | {"kind": "pwl_density", "f": pwl, "linear_region": [a, b]}
/// | {"kind": "boundary", "shape": "A" | "B" | "C", optional parameter overrides}
/// | {"kind": "regression_pwl", "r": pwl, "linear_region": [a, b]}
/// | {"kind": "regression_quadratic", "c": [c0, c1, c2]}
TruthSpec truth_from_json(const std::string& text);

/// One value per line (density), or "x,y" / "y" per line (regression; a
/// single column uses the fixed design). Lines starting with '#' and a
/// non-numeric header line are skipped.
EmpiricalMeasure read_sample_csv(std::istream& is, Mode mode);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace cvxlse
