#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cvxlse/errors.hpp"
#include "cvxlse/estimator.hpp"
#include "cvxlse/experiments.hpp"
#include "cvxlse/invelope.hpp"
#include "cvxlse/io.hpp"
#include "cvxlse/lintest.hpp"
#include "cvxlse/stochastic.hpp"

namespace py = pybind11;
using namespace cvxlse;

namespace {

py::dict diagnostics(const CharacterizationReport& d) {
  py::dict out;
  out["min_gap"] = d.min_gap;
  out["knot_equality_error"] = d.knot_equality_error;
  out["fubini_residual"] = d.fubini_residual;
  out["df_match_error"] = d.df_match_error;
  out["scale"] = d.scale;
  out["marshall_ratio"] = d.marshall_ratio ? py::cast(*d.marshall_ratio) : py::none();
  return out;
}

SolverOptions options(double tol) {
  SolverOptions o;
  o.tol = tol;
  return o;
}

// Convergence failures still return the best iterate; the flag tells.
ConvexFit fit(const EmpiricalMeasure& data, double tol) {
  try {
    return data.mode() == Mode::Density ? fit_convex_density(data, options(tol))
                                        : fit_convex_regression(data, options(tol));
  } catch (const ConvergenceError& e) {
    return e.best();
  }
}

py::dict table_dict(const QuantileTable& t) {
  py::dict out;
  out["alphas"] = t.alphas;
  out["quantiles"] = t.quantiles;
  out["stderr"] = t.standard_errors;
  out["n_sims"] = t.n_sims;
  out["m"] = t.m;
  out["seed"] = t.seed;
  out["min_T"] = t.min_T;
  out["non_converged"] = t.non_converged;
  return out;
}

}  // namespace

PYBIND11_MODULE(_cvxlse, m) {
  m.doc() = "Convex least squares density and regression estimation";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ModeError>(m, "ModeError", PyExc_TypeError);
  py::register_exception<ExperimentError>(m, "ExperimentError", PyExc_RuntimeError);

  py::class_<ConvexFit>(m, "ConvexFit")
      .def_property_readonly("mode",
                             [](const ConvexFit& f) { return f.mode == Mode::Density ? "density" : "regression"; })
      .def_property_readonly("x", [](const ConvexFit& f) {
        return std::vector<double>(f.estimate.breakpoints().begin(), f.estimate.breakpoints().end());
      })
      .def_property_readonly("values", [](const ConvexFit& f) {
        return std::vector<double>(f.estimate.values().begin(), f.estimate.values().end());
      })
      .def_readonly("knots", &ConvexFit::knot_set)
      .def_readonly("objective", &ConvexFit::objective)
      .def_readonly("iterations", &ConvexFit::iterations)
      .def_readonly("converged", &ConvexFit::converged)
      .def_property_readonly("diagnostics", [](const ConvexFit& f) { return diagnostics(f.diagnostics); })
      .def("__call__", [](const ConvexFit& f, double t) { return f.estimate(t); })
      .def("__call__",
           [](const ConvexFit& f, const std::vector<double>& ts) {
             std::vector<double> out;
             out.reserve(ts.size());
             for (double t : ts) out.push_back(f.estimate(t));
             return out;
           })
      .def("to_json", [](const ConvexFit& f) { return to_json(f); });

  m.def(
      "fit_density", [](std::vector<double> sample, double tol) { return fit(EmpiricalMeasure::density(std::move(sample)), tol); },
      py::arg("sample"), py::arg("tol") = 1e-8, "Convex decreasing density LSE on [0, inf).");
  m.def(
      "fit_regression",
      [](std::vector<double> y, std::optional<std::vector<double>> x, double tol) {
        auto data = x ? EmpiricalMeasure::regression(std::move(*x), std::move(y))
                      : EmpiricalMeasure::regression_fixed_design(std::move(y));
        return fit(data, tol);
      },
      py::arg("y"), py::arg("x") = py::none(), py::arg("tol") = 1e-8,
      "Convex regression LSE on [0, 1]; without x the design is i / (n + 1).");

  m.def(
      "sample_density",
      [](const std::string& truth, std::size_t n, std::uint64_t seed) {
        return draw_density(truth_from_json(truth), n, seed);
      },
      py::arg("truth"), py::arg("n"), py::arg("seed"), "Draw a seeded sample from a density truth (JSON).");
  m.def(
      "simulate_regression",
      [](const std::string& truth, std::size_t n, double sigma, std::uint64_t seed) {
        const auto d = simulate_regression(truth_from_json(truth), n, sigma, seed);
        std::vector<double> x(d.atoms().begin(), d.atoms().end()), y(d.raw().begin(), d.raw().end());
        return py::make_tuple(x, y);
      },
      py::arg("truth"), py::arg("n"), py::arg("sigma"), py::arg("seed"),
      "Seeded fixed-design regression data (x, y) from a regression truth (JSON).");

  m.def(
      "t_statistic", [](std::vector<double> sample) { return t_statistic(EmpiricalMeasure::density(std::move(sample))).T_n; },
      py::arg("sample"), "Scaled largest dip of the density LSE below the triangular density.");
  m.def(
      "linearity_test",
      [](std::vector<double> sample, double alpha) {
        const auto d = linearity_test(EmpiricalMeasure::density(std::move(sample)), alpha, default_quantile_table());
        py::dict out;
        out["T_n"] = d.T_n;
        out["alpha"] = d.alpha;
        out["t_alpha"] = d.t_alpha;
        out["reject"] = d.reject;
        out["n"] = d.n;
        out["interpolated"] = d.interpolated;
        return out;
      },
      py::arg("sample"), py::arg("alpha") = 0.05, "Test of the triangular density with the shipped table.");
  m.def("quantile_table", [] { return table_dict(default_quantile_table()); }, "The shipped quantile table.");
  m.def(
      "make_quantile_table",
      [](std::size_t n_sims, std::size_t grid, std::uint64_t seed, unsigned threads) {
        QuantileSimulation sim;
        {
          py::gil_scoped_release release;
          sim = estimate_quantiles(n_sims, default_alphas(), grid, {}, seed, threads);
        }
        return table_dict(sim.table);
      },
      py::arg("n_sims"), py::arg("m") = 800, py::arg("seed") = 1, py::arg("threads") = 0);

  m.def(
      "simulate_invelope",
      [](std::size_t grid, std::uint64_t seed, const std::string& mode, double a, double b) {
        if (mode != "bridge" && mode != "motion") throw InputError("mode must be bridge or motion");
        const auto path = mode == "bridge" ? bridge_path(grid, TruthSpec::triangular(), seed)
                                           : gaussian_path(grid, PathMode::Motion, seed);
        const auto inv = compute_invelope(path, {a, b});
        py::dict out;
        out["t"] = inv.grid;
        out["Y"] = inv.Y;
        out["H"] = inv.H;
        out["H1"] = inv.dH;
        out["H2"] = inv.g;
        out["H3"] = inv.dg;
        out["T"] = limit_T(inv);
        out["k_final"] = inv.k_final;
        out["converged"] = inv.converged;
        out["min_gap"] = inv.residuals.min_gap;
        return out;
      },
      py::arg("m") = 800, py::arg("seed") = 1, py::arg("mode") = "bridge", py::arg("a") = 0.0, py::arg("b") = 1.0,
      "One invelope path: grid, integrated path and H with three derivatives.");

  m.def(
      "experiment_config", [](const std::string& name) { return to_json(ExperimentConfig::defaults(experiment_from_name(name))); },
      py::arg("name"), "Default configuration JSON of an experiment.");
  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::optional<std::string>& out_dir) {
        const auto cfg = config_from_json(config_json);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        if (out_dir) write_experiment_outputs(*out_dir, r);
        py::list checks;
        for (const auto& c : r.checks) {
          py::dict d;
          d["name"] = c.name;
          d["value"] = c.value;
          d["lo"] = c.lo;
          d["hi"] = c.hi;
          d["pass"] = c.pass;
          checks.append(d);
        }
        py::dict out;
        out["experiment"] = experiment_name(r.id);
        out["checks"] = checks;
        out["fits"] = r.fits;
        out["fit_failures"] = r.fit_failures;
        out["all_pass"] = r.all_pass();
        out["json"] = to_json(r);
        return out;
      },
      py::arg("config"), py::arg("out_dir") = py::none(), "Run a simulation study from a config JSON.");
}
