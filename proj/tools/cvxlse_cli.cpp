// Command-line front end: fitting, invelope simulation, quantile tables,
// the linearity test and the experiment harness.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cvxlse/errors.hpp"
#include "cvxlse/estimator.hpp"
#include "cvxlse/experiments.hpp"
#include "cvxlse/invelope.hpp"
#include "cvxlse/io.hpp"
#include "cvxlse/lintest.hpp"
#include "cvxlse/stochastic.hpp"

using namespace cvxlse;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  unsigned threads = 0;
  std::string config;
};

void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_text_file(g.out, text.back() == '\n' ? text : text + "\n");
  }
}

EmpiricalMeasure load_data(const std::string& path, Mode mode) {
  if (path == "-") return read_sample_csv(std::cin, mode);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_sample_csv(in, mode);
}

std::string fit_output(const ConvexFit& fit, std::size_t grid, const TruthSpec* truth) {
  if (grid == 0) return to_json(fit);
  std::vector<double> xs;
  const double hi = fit.mode == Mode::Density ? fit.estimate.back() : 1.0;
  for (std::size_t i = 0; i <= grid; ++i) xs.push_back(hi * static_cast<double>(i) / static_cast<double>(grid));
  std::ostringstream os;
  write_fit_csv(os, fit, xs, truth);
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex least squares estimation, invelope simulation and the linearity test"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output file (directory for experiments)");
  app.add_option("--threads", g.threads, "Worker threads (0 = all)");
  app.add_option("--config", g.config, "Experiment config JSON");

  // fit-density / fit-regression
  std::string data_path;
  double tol = 1e-8;
  std::size_t grid = 0;
  std::string truth_json;
  for (const char* name : {"fit-density", "fit-regression"}) {
    auto* sc = app.add_subcommand(name, std::string("Fit the convex LSE (") +
                                            (name[4] == 'd' ? "density" : "regression") + ") to a CSV sample");
    sc->add_option("--data", data_path, "CSV file ('-' for stdin)")->required();
    sc->add_option("--tol", tol, "Characterization tolerance");
    sc->add_option("--grid", grid, "Write x,estimate CSV on this many cells instead of JSON");
    sc->add_option("--truth", truth_json, "Truth JSON: adds Marshall ratio and a truth column");
  }

  // simulate-invelope
  auto* inv_cmd = app.add_subcommand("simulate-invelope", "Simulate one invelope path; CSV t,X,Y,H,H1,H2,H3");
  std::size_t m = 800;
  std::string path_mode = "bridge";
  double ia = 0.0, ib = 1.0;
  inv_cmd->add_option("--m", m, "Grid cells on [0, 1]");
  inv_cmd->add_option("--mode", path_mode, "bridge (triangular truth) or motion")
      ->check(CLI::IsMember({"bridge", "motion"}));
  inv_cmd->add_option("--a", ia, "Left end of the interval");
  inv_cmd->add_option("--b", ib, "Right end of the interval");
  inv_cmd->add_option("--truth", truth_json, "Density truth JSON for bridge mode (default triangular)");

  // make-quantile-table
  auto* tab_cmd = app.add_subcommand("make-quantile-table", "Monte Carlo upper quantiles of T");
  std::size_t n_sims = 20000;
  std::vector<double> alphas = default_alphas();
  tab_cmd->add_option("--n-sims", n_sims, "Replicates");
  tab_cmd->add_option("--m", m, "Grid cells");
  tab_cmd->add_option("--alphas", alphas, "Upper-tail levels, increasing");

  // test-linearity
  auto* test_cmd = app.add_subcommand("test-linearity", "Test the triangular density; JSON decision");
  double alpha = 0.05;
  std::string table_path;
  test_cmd->add_option("--data", data_path, "CSV sample ('-' for stdin)")->required();
  test_cmd->add_option("--alpha", alpha, "Level");
  test_cmd->add_option("--table", table_path, "Quantile table JSON (default: shipped table)");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a simulation study; writes CSV and JSON to --out");
  std::string exp_id;
  exp_cmd->add_option("id", exp_id, "interior_rate | boundary_adaptation | zero_behavior | test_calibration | "
                                    "regression_suite")
      ->required();
  bool print_config = false;
  exp_cmd->add_flag("--print-config", print_config, "Print the effective config and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    auto* sc = app.get_subcommands().front();
    const std::string cmd = sc->get_name();
    if (cmd == "fit-density" || cmd == "fit-regression") {
      const bool dens = cmd == "fit-density";
      const auto data = load_data(data_path, dens ? Mode::Density : Mode::Regression);
      SolverOptions opts;
      opts.tol = tol;
      ConvexFit fit;
      int status = 0;
      try {
        fit = dens ? fit_convex_density(data, opts) : fit_convex_regression(data, opts);
      } catch (const ConvergenceError& e) {
        std::cerr << "warning: " << e.what() << "\n";
        fit = e.best();
        status = 3;
      }
      std::optional<TruthSpec> truth;
      if (!truth_json.empty()) {
        truth = truth_from_json(truth_json);
        fit.diagnostics = characterization_report(fit, data, &*truth);
      }
      emit(g, fit_output(fit, grid, truth ? &*truth : nullptr));
      return status;
    }
    if (cmd == "simulate-invelope") {
      const auto truth = truth_json.empty() ? TruthSpec::triangular() : truth_from_json(truth_json);
      const auto path = path_mode == "bridge" ? bridge_path(m, truth, g.seed) : gaussian_path(m, PathMode::Motion, g.seed);
      const auto inv = compute_invelope(path, {ia, ib});
      std::ostringstream os;
      const auto& r = inv.residuals;
      char buf[512];
      std::snprintf(buf, sizeof buf,
                    "# mode=%s m=%zu seed=%llu interval=[%.17g,%.17g] k_final=%.17g converged=%d T=%.17g "
                    "min_gap=%.3g left_slope=%.3g right_slope=%.3g fubini=%.3g\n",
                    path_mode.c_str(), m, static_cast<unsigned long long>(g.seed), inv.interval.a, inv.interval.b,
                    inv.k_final, inv.converged ? 1 : 0, limit_T(inv), r.min_gap, r.left_slope, r.right_slope,
                    r.fubini);
      os << buf << "t,X,Y,H,H1,H2,H3\n";
      const std::size_t off = static_cast<std::size_t>(std::llround(inv.interval.a * static_cast<double>(m)));
      for (std::size_t i = 0; i < inv.grid.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", inv.grid[i],
                      path.X[off + i], inv.Y[i], inv.H[i], inv.dH[i], inv.g[i], inv.dg[i]);
        os << buf;
      }
      if (!inv.warning.empty()) std::cerr << "warning: " << inv.warning << "\n";
      emit(g, os.str());
      return 0;
    }
    if (cmd == "make-quantile-table") {
      const auto t0 = std::chrono::steady_clock::now();
      auto sim = estimate_quantiles(n_sims, alphas, m, {}, g.seed, g.threads);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "%zu replicates on m=%zu in %.1f s; min T = %.3g; non-converged = %zu\n", n_sims, m, secs,
                   sim.table.min_T, sim.table.non_converged);
      emit(g, to_json(sim.table));
      return 0;
    }
    if (cmd == "test-linearity") {
      const auto data = load_data(data_path, Mode::Density);
      const QuantileTable table = table_path.empty() ? default_quantile_table() : table_from_json(read_text_file(table_path));
      const auto d = linearity_test(data, alpha, table);
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "{\"T_n\": %.17g, \"alpha\": %.17g, \"t_alpha\": %.17g, \"reject\": %s, \"n\": %zu, "
                    "\"interpolated\": %s}",
                    d.T_n, d.alpha, d.t_alpha, d.reject ? "true" : "false", d.n, d.interpolated ? "true" : "false");
      emit(g, buf);
      return 0;
    }
    if (cmd == "experiment") {
      auto cfg = g.config.empty() ? ExperimentConfig::defaults(experiment_from_name(exp_id))
                                  : config_from_json(read_text_file(g.config));
      if (experiment_name(cfg.id) != exp_id) throw InputError("config is for experiment " + experiment_name(cfg.id));
      if (app.get_option("--seed")->count() > 0) cfg.seed = g.seed;
      if (app.get_option("--threads")->count() > 0) cfg.threads = g.threads;
      if (print_config) {
        std::cout << to_json(cfg) << "\n";
        return 0;
      }
      const auto res = run_experiment(cfg);
      const std::string dir = g.out.empty() ? "." : g.out;
      write_experiment_outputs(dir, res);
      for (const auto& c : res.checks)
        std::printf("%-40s %12.6g  [%g, %g]  %s\n", c.name.c_str(), c.value, c.lo, c.hi, c.pass ? "ok" : "FAIL");
      std::printf("%zu fits, %zu outside tolerance; outputs in %s\n", res.fits, res.fit_failures, dir.c_str());
      return res.all_pass() ? 0 : 4;
    }
  } catch (const ExperimentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
