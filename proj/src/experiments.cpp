#include "cvxlse/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cvxlse/errors.hpp"
#include "cvxlse/io.hpp"
#include "cvxlse/lintest.hpp"
#include "cvxlse/stochastic.hpp"
#include "parallel.hpp"

namespace cvxlse {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Seed streams.
constexpr std::uint64_t kTagSample = 1, kTagAlternative = 2, kTagInvelope = 3, kTagBootstrap = 4,
                        kTagNoiseless = 5;

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t n, std::size_t r, std::uint64_t tag) {
  return derive_seed(derive_seed(seed, n, tag), r);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Short form for check names and messages.
std::string tag(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

const char* names[] = {"interior_rate", "boundary_adaptation", "zero_behavior", "test_calibration",
                       "regression_suite"};

// One fit with everything the experiments read from it.
struct FitOutcome {
  ConvexFit fit;
  bool ok = true;
  double marshall_excess = -kInf;  // sup|G-hat - G0| - 2 sup|G_n - G0|
};

FitOutcome fit_density(const TruthSpec& truth, std::size_t n, std::uint64_t seed, bool marshall) {
  const auto data = sample_pwl_density(truth, n, seed);
  FitOutcome out;
  try {
    out.fit = fit_convex_density(data);
  } catch (const ConvergenceError& e) {
    out.fit = e.best();
    out.ok = false;
  }
  if (marshall && truth.cumulative_poly()) {
    const auto d = marshall_distances(out.fit, data, truth);
    out.fit.diagnostics.marshall_ratio = d.fit / d.empirical;
    out.marshall_excess = d.fit - 2.0 * d.empirical;
  }
  return out;
}

FitOutcome fit_regression(const TruthSpec& truth, std::size_t n, double sigma, std::uint64_t seed) {
  const auto data = simulate_regression(truth, n, sigma, seed);
  FitOutcome out;
  try {
    out.fit = fit_convex_regression(data);
  } catch (const ConvergenceError& e) {
    out.fit = e.best();
    out.ok = false;
  }
  const auto d = marshall_distances(out.fit, data, truth);
  if (d.empirical > 0.0) out.fit.diagnostics.marshall_ratio = d.fit / d.empirical;
  out.marshall_excess = d.fit - 2.0 * d.empirical;
  return out;
}

// Exact sup over [lo, hi] of |f - r0| when r0 is piecewise linear; otherwise
// breakpoints plus a 2000-cell grid.
double sup_abs_error(const PiecewiseLinearFn& f, const TruthSpec& truth, double lo, double hi) {
  std::vector<double> pts{lo, hi};
  for (double x : f.breakpoints())
    if (x > lo && x < hi) pts.push_back(x);
  if (truth.pwl()) {
    for (double x : truth.pwl()->breakpoints())
      if (x > lo && x < hi) pts.push_back(x);
  } else {
    for (int i = 1; i < 2000; ++i) pts.push_back(lo + (hi - lo) * i / 2000.0);
  }
  double s = 0.0;
  for (double x : pts) s = std::max(s, std::abs(f(x) - truth.value(x)));
  return s;
}

struct Collector {
  ExperimentResult res;
  const ExperimentConfig& cfg;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> series;  // (label@x, n) -> values

  explicit Collector(const ExperimentConfig& c) : cfg(c) {
    res.id = c.id;
    res.seed = c.seed;
  }

  static std::string key(const std::string& label, double x) { return label + "@" + fmt(x); }

  void add(const std::string& label, std::size_t n, std::size_t r, double x, double v, const FitOutcome* fo) {
    series[{key(label, x), n}].push_back(v);
    if (!cfg.keep_records) return;
    ReplicateRecord rec;
    rec.label = label;
    rec.n = n;
    rec.replicate = r;
    rec.x = x;
    rec.value = v;
    if (fo) {
      rec.converged = fo->ok;
      rec.diagnostics = fo->fit.diagnostics;
    }
    res.records.push_back(rec);
  }

  void count(const std::vector<FitOutcome>& fits) {
    for (const auto& f : fits) {
      ++res.fits;
      if (!f.ok) ++res.fit_failures;
    }
  }

  const std::vector<double>& values(const std::string& label, double x, std::size_t n) const {
    auto it = series.find({key(label, x), n});
    if (it == series.end()) throw InputError("experiment: no values for " + key(label, x));
    return it->second;
  }

  void summarize(const std::string& label, double x, std::size_t n) {
    const auto& v = values(label, x, n);
    res.summary.push_back({label, n, x, v.size(), sample_quantile(v, 0.5), sample_quantile(v, 0.25),
                           sample_quantile(v, 0.75)});
  }

  void check(const std::string& name, double value, double lo, double hi) {
    res.checks.push_back({name, value, lo, hi, value >= lo && value <= hi});
  }

  // max / min of the medians across the n grid.
  double median_ratio(const std::string& label, double x) const {
    double mx = -kInf, mn = kInf;
    for (std::size_t n : cfg.n_grid) {
      const double m = sample_quantile(values(label, x, n), 0.5);
      mx = std::max(mx, m);
      mn = std::min(mn, m);
    }
    if (mx == 0.0) return 1.0;
    return mn > 0.0 ? mx / mn : kInf;
  }

  void slope(const std::string& label, double x, std::uint64_t stream) {
    const std::size_t K = cfg.n_grid.size();
    std::vector<double> lx(K);
    for (std::size_t i = 0; i < K; ++i) lx[i] = std::log(static_cast<double>(cfg.n_grid[i]));
    auto ols = [&](const std::vector<double>& ly) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < K; ++i) mx += lx[i] / K, my += ly[i] / K;
      double sxy = 0, sxx = 0;
      for (std::size_t i = 0; i < K; ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
      return sxy / sxx;
    };
    std::vector<double> ly(K);
    for (std::size_t i = 0; i < K; ++i) ly[i] = std::log(sample_quantile(values(label, x, cfg.n_grid[i]), 0.5));
    SlopeFit sf;
    sf.label = label;
    sf.x = x;
    sf.slope = ols(ly);
    Rng rng(derive_seed(cfg.seed, stream, kTagBootstrap));
    std::vector<double> boot;
    for (int b = 0; b < 200; ++b) {
      for (std::size_t i = 0; i < K; ++i) {
        const auto& v = values(label, x, cfg.n_grid[i]);
        std::vector<double> rs(v.size());
        for (auto& e : rs) e = v[std::min(v.size() - 1, static_cast<std::size_t>(rng.uniform() * v.size()))];
        ly[i] = std::log(sample_quantile(rs, 0.5));
      }
      boot.push_back(ols(ly));
    }
    double mean = 0, ss = 0;
    for (double s : boot) mean += s / boot.size();
    for (double s : boot) ss += (s - mean) * (s - mean);
    sf.se = std::sqrt(ss / (boot.size() - 1));
    sf.ci_lo = sample_quantile(boot, 0.025);
    sf.ci_hi = sample_quantile(boot, 0.975);
    res.slopes.push_back(sf);
  }

  ExperimentResult finish() {
    if (res.fits > 0 && static_cast<double>(res.fit_failures) > cfg.max_failure_rate * static_cast<double>(res.fits)) {
      throw ExperimentError(experiment_name(cfg.id) + ": " + std::to_string(res.fit_failures) + " of " +
                            std::to_string(res.fits) + " fits missed the characterization tolerances");
    }
    return std::move(res);
  }
};

// Replicates needed at each n: the grid count, or more at the law size.
std::size_t reps_at(const ExperimentConfig& c, std::size_t n) {
  return (c.law_n == n) ? std::max(c.replicates, c.law_replicates) : c.replicates;
}

std::vector<double> invelope_draws(const ExperimentConfig& c, const TruthSpec& truth, double x, Interval region,
                                   bool regression) {
  std::vector<double> out(c.invelope_sims);
  detail::parallel_for(c.invelope_sims, c.threads, [&](std::size_t i) {
    const std::uint64_t s = replicate_seed(c.seed, c.m, i, kTagInvelope);
    if (regression) {
      const auto inv = compute_invelope(gaussian_path(c.m, PathMode::Motion, s));
      out[i] = rescale_regression_limit(inv, region.a, region.b, c.sigma, x).first;
    } else {
      const auto inv = compute_invelope(bridge_path(c.m, truth, s), region);
      out[i] = inv.second_derivative_at(x);
    }
  });
  return out;
}

TruthSpec truth_of(const ExperimentConfig& c) { return truth_from_json(c.truth_json); }

Interval region_of(const TruthSpec& t) {
  auto r = t.linear_region();
  if (!r) throw InputError("experiment: the truth has no declared linear region");
  return *r;
}

void check_marshall(Collector& col, const std::vector<FitOutcome>& fits) {
  double worst = -kInf;
  for (const auto& f : fits) worst = std::max(worst, f.marshall_excess);
  if (worst > -kInf) col.check("marshall_excess", worst, -kInf, 1e-9);
}

}  // namespace

std::string experiment_name(ExperimentId id) { return names[static_cast<int>(id)]; }

ExperimentId experiment_from_name(const std::string& name) {
  for (int i = 0; i < 5; ++i)
    if (name == names[i]) return static_cast<ExperimentId>(i);
  throw InputError("unknown experiment: " + name);
}

ExperimentConfig ExperimentConfig::defaults(ExperimentId id) {
  ExperimentConfig c;
  c.id = id;
  switch (id) {
    case ExperimentId::InteriorRate:
      c.truth_json = R"({"kind":"triangular"})";
      c.n_grid = {500, 2000, 8000};
      c.points = {0.5};
      c.law_n = 8000;
      break;
    case ExperimentId::BoundaryAdaptation:
      c.truth_json = R"({"kind":"boundary","shape":"A"})";
      c.n_grid = {500, 2000, 8000, 32000};
      break;
    case ExperimentId::ZeroBehavior:
      c.truth_json = R"({"kind":"triangular"})";
      c.n_grid = {500, 4000};
      c.points = {0.0};
      break;
    case ExperimentId::TestCalibration:
      c.truth_json = R"({"kind":"triangular"})";
      c.alternative_json = R"({"kind":"uniform"})";
      c.n_grid = {2000};
      c.replicates = 500;
      c.alphas = {0.05, 0.20};
      break;
    case ExperimentId::RegressionSuite:
      c.truth_json =
          R"({"kind":"regression_pwl","r":{"x":[0,0.25,0.75,1],"v":[1,0.25,0.5,1.25],"ext":"extend"},)"
          R"("linear_region":[0.25,0.75]})";
      c.n_grid = {500, 2000, 8000};
      c.points = {0.5};
      c.law_n = 8000;
      c.noiseless_n = 4000;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (n_grid.empty()) throw InputError("config: empty n grid");
  for (std::size_t i = 0; i < n_grid.size(); ++i)
    if (n_grid[i] < 2 || (i > 0 && n_grid[i] <= n_grid[i - 1])) throw InputError("config: n grid must be increasing and >= 2");
  if (replicates < 10) throw InputError("config: replicates must be >= 10");
  if (law_n && (law_replicates < 10 || invelope_sims < 10)) throw InputError("config: law runs need >= 10 draws");
  if (m < 16) throw InputError("config: m must be >= 16");
  if (!(delta >= 0.0)) throw InputError("config: delta must be >= 0");
  if (!(sigma >= 0.0)) throw InputError("config: sigma must be >= 0");
  const auto truth = truth_from_json(truth_json);
  const bool needs_region = id == ExperimentId::InteriorRate || id == ExperimentId::RegressionSuite;
  if (needs_region) {
    const auto r = region_of(truth);
    if (points.empty()) throw InputError("config: no evaluation points");
    for (double x : points)
      if (!(x >= r.a + delta && x <= r.b - delta))
        throw InputError("config: evaluation point " + tag(x) + " outside [a + delta, b - delta]");
  }
  if ((id == ExperimentId::RegressionSuite) == truth.is_density())
    throw InputError("config: truth kind does not match the experiment");
  if (id == ExperimentId::BoundaryAdaptation && truth.kind() != TruthKind::BoundaryCase)
    throw InputError("config: boundary_adaptation needs a boundary-case truth");
  if (id == ExperimentId::BoundaryAdaptation && n_grid.size() < 2) throw InputError("config: slope fit needs two n");
  if (id == ExperimentId::TestCalibration) {
    if (alphas.empty()) throw InputError("config: no alphas");
    if (truth.kind() != TruthKind::Triangular) throw InputError("config: calibration null must be triangular");
    if (!alternative_json.empty() && !truth_from_json(alternative_json).is_density())
      throw InputError("config: alternative must be a density");
  }
}

ExperimentResult run_interior_rate(const ExperimentConfig& c) {
  c.validate();
  const auto truth = truth_of(c);
  const auto region = region_of(truth);
  Collector col(c);
  std::vector<FitOutcome> all;
  for (std::size_t n : c.n_grid) {
    const std::size_t R = reps_at(c, n);
    std::vector<FitOutcome> fits(R);
    detail::parallel_for(R, c.threads, [&](std::size_t r) {
      fits[r] = fit_density(truth, n, replicate_seed(c.seed, n, r, kTagSample), true);
    });
    const double rn = std::sqrt(static_cast<double>(n));
    for (std::size_t r = 0; r < R; ++r) {
      const auto& f = fits[r].fit.estimate;
      for (double x : c.points) {
        const double e = f(x) - truth.value(x);
        if (r < c.replicates) {
          col.add("value_error", n, r, x, rn * std::abs(e), &fits[r]);
          col.add("derivative_error", n, r, x, rn * std::abs(f.derivative_right(x) - truth.derivative_right(x)),
                  &fits[r]);
        }
        if (n == c.law_n && r < c.law_replicates) col.add("law_value", n, r, x, rn * e, &fits[r]);
      }
    }
    col.count(fits);
    all.insert(all.end(), std::make_move_iterator(fits.begin()), std::make_move_iterator(fits.end()));
  }
  for (double x : c.points) {
    for (std::size_t n : c.n_grid) {
      col.summarize("value_error", x, n);
      col.summarize("derivative_error", x, n);
    }
    col.check("value_median_ratio@" + tag(x), col.median_ratio("value_error", x), 0.0, c.ratio_max);
    col.check("derivative_median_ratio@" + tag(x), col.median_ratio("derivative_error", x), 0.0, c.ratio_max);
    if (c.law_n) {
      const auto h2 = invelope_draws(c, truth, x, region, false);
      for (std::size_t i = 0; i < h2.size(); ++i) col.add("invelope_H2", c.m, i, x, h2[i], nullptr);
      col.summarize("law_value", x, c.law_n);
      col.summarize("invelope_H2", x, c.m);
      col.check("ks_value@" + tag(x), ks_distance(col.values("law_value", x, c.law_n), h2), 0.0, c.ks_max);
    }
  }
  check_marshall(col, all);
  return col.finish();
}

ExperimentResult run_boundary_adaptation(const ExperimentConfig& c) {
  c.validate();
  const auto truth = truth_of(c);
  const std::vector<double> pts = c.points.empty() ? std::vector<double>{truth.x0()} : c.points;
  Collector col(c);
  std::vector<FitOutcome> all;
  for (std::size_t n : c.n_grid) {
    std::vector<FitOutcome> fits(c.replicates);
    detail::parallel_for(c.replicates, c.threads, [&](std::size_t r) {
      fits[r] = fit_density(truth, n, replicate_seed(c.seed, n, r, kTagSample), true);
    });
    const double rn = std::sqrt(static_cast<double>(n));
    for (std::size_t r = 0; r < c.replicates; ++r)
      for (double x : pts) {
        const double e = fits[r].fit.estimate(x) - truth.value(x);
        col.add("abs_error", n, r, x, std::abs(e), &fits[r]);
        col.add("scaled_negative_part", n, r, x, rn * std::max(-e, 0.0), &fits[r]);
      }
    col.count(fits);
    all.insert(all.end(), std::make_move_iterator(fits.begin()), std::make_move_iterator(fits.end()));
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i];
    for (std::size_t n : c.n_grid) {
      col.summarize("abs_error", x, n);
      col.summarize("scaled_negative_part", x, n);
    }
    col.slope("abs_error", x, i);
    col.check("slope@" + tag(x), col.res.slopes.back().slope, c.slope_lo, c.slope_hi);
    col.check("negative_part_median_ratio@" + tag(x), col.median_ratio("scaled_negative_part", x), 0.0, c.ratio_max);
  }
  check_marshall(col, all);
  return col.finish();
}

ExperimentResult run_zero_behavior(const ExperimentConfig& c) {
  c.validate();
  const auto truth = truth_of(c);
  Collector col(c);
  double min_value = kInf;
  for (std::size_t n : c.n_grid) {
    std::vector<FitOutcome> fits(c.replicates);
    detail::parallel_for(c.replicates, c.threads, [&](std::size_t r) {
      fits[r] = fit_density(truth, n, replicate_seed(c.seed, n, r, kTagSample), false);
    });
    for (std::size_t r = 0; r < c.replicates; ++r) {
      const double v = value_at_zero(fits[r].fit);
      min_value = std::min(min_value, v);
      col.add("value_at_zero", n, r, 0.0, v, &fits[r]);
    }
    col.count(fits);
    col.summarize("value_at_zero", 0.0, n);
  }
  const double first = sample_quantile(col.values("value_at_zero", 0.0, c.n_grid.front()), 0.5);
  const double last = sample_quantile(col.values("value_at_zero", 0.0, c.n_grid.back()), 0.5);
  col.check("median_ratio", last / first, c.ratio_min, c.ratio_max);
  col.check("min_value", min_value, 0.0, kInf);
  return col.finish();
}

ExperimentResult run_test_calibration(const ExperimentConfig& c) {
  c.validate();
  const auto truth = truth_of(c);
  const QuantileTable& table = c.table ? *c.table : default_quantile_table();
  Collector col(c);
  auto run = [&](const TruthSpec& t, std::size_t n, std::size_t R, std::uint64_t tag, const std::string& label,
                 std::vector<FitOutcome>& fits) {
    fits.assign(R, {});
    std::vector<double> T(R);
    detail::parallel_for(R, c.threads, [&](std::size_t r) {
      fits[r] = fit_density(t, n, replicate_seed(c.seed, n, r, tag), tag == kTagSample);
      T[r] = t_statistic_of(fits[r].fit.estimate, n);
    });
    for (std::size_t r = 0; r < R; ++r) col.add(label, n, r, 0.0, T[r], &fits[r]);
    col.count(fits);
    col.summarize(label, 0.0, n);
    return T;
  };
  auto rate = [&](const std::vector<double>& T, double alpha) {
    const double t = table.lookup(alpha).t_alpha;
    std::size_t k = 0;
    for (double v : T) k += v > t ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(T.size());
  };
  std::vector<FitOutcome> nulls_all;
  for (std::size_t n : c.n_grid) {
    std::vector<FitOutcome> fits;
    const auto T = run(truth, n, c.replicates, kTagSample, "T_null", fits);
    for (std::size_t i = 0; i < c.alphas.size(); ++i) {
      const double lo = i == 0 ? c.size_lo : i == 1 ? c.size2_lo : 0.0;
      const double hi = i == 0 ? c.size_hi : i == 1 ? c.size2_hi : 1.0;
      col.check("size(alpha=" + tag(c.alphas[i]) + ",n=" + std::to_string(n) + ")", rate(T, c.alphas[i]), lo, hi);
    }
    nulls_all.insert(nulls_all.end(), std::make_move_iterator(fits.begin()), std::make_move_iterator(fits.end()));
    if (!c.alternative_json.empty()) {
      const auto alt = truth_from_json(c.alternative_json);
      std::vector<FitOutcome> afits;
      const auto Ta = run(alt, n, c.power_replicates, kTagAlternative, "T_alternative", afits);
      col.check("power(alpha=" + tag(c.alphas.front()) + ",n=" + std::to_string(n) + ")", rate(Ta, c.alphas.front()),
                c.power_min, 1.0);
    }
  }
  check_marshall(col, nulls_all);
  return col.finish();
}

ExperimentResult run_regression_suite(const ExperimentConfig& c) {
  c.validate();
  const auto truth = truth_of(c);
  const auto region = region_of(truth);
  const double lo = region.a + c.delta, hi = region.b - c.delta;
  Collector col(c);
  std::vector<FitOutcome> all;
  for (std::size_t n : c.n_grid) {
    const std::size_t R = reps_at(c, n);
    std::vector<FitOutcome> fits(R);
    detail::parallel_for(R, c.threads, [&](std::size_t r) {
      fits[r] = fit_regression(truth, n, c.sigma, replicate_seed(c.seed, n, r, kTagSample));
    });
    const double rn = std::sqrt(static_cast<double>(n));
    for (std::size_t r = 0; r < R; ++r) {
      const auto& f = fits[r].fit.estimate;
      if (r < c.replicates) col.add("sup_error", n, r, 0.5 * (lo + hi), rn * sup_abs_error(f, truth, lo, hi), &fits[r]);
      if (n == c.law_n && r < c.law_replicates)
        for (double x : c.points) col.add("law_value", n, r, x, rn * (f(x) - truth.value(x)), &fits[r]);
    }
    col.count(fits);
    all.insert(all.end(), std::make_move_iterator(fits.begin()), std::make_move_iterator(fits.end()));
  }
  const double mid = 0.5 * (lo + hi);
  for (std::size_t n : c.n_grid) col.summarize("sup_error", mid, n);
  col.check("sup_error_median_ratio", col.median_ratio("sup_error", mid), 0.0, c.ratio_max);
  if (c.law_n)
    for (double x : c.points) {
      const auto h2 = invelope_draws(c, truth, x, region, true);
      for (std::size_t i = 0; i < h2.size(); ++i) col.add("invelope_H2", c.m, i, x, h2[i], nullptr);
      col.summarize("law_value", x, c.law_n);
      col.summarize("invelope_H2", x, c.m);
      col.check("ks_value@" + tag(x), ks_distance(col.values("law_value", x, c.law_n), h2), 0.0, c.ks_max);
    }
  check_marshall(col, all);
  if (c.noiseless_n) {
    std::vector<FitOutcome> f(1);
    f[0] = fit_regression(truth, c.noiseless_n, 0.0, replicate_seed(c.seed, c.noiseless_n, 0, kTagNoiseless));
    const double e = sup_abs_error(f[0].fit.estimate, truth, lo, hi);
    col.add("noiseless_sup_error", c.noiseless_n, 0, mid, e, &f[0]);
    col.count(f);
    col.check("noiseless_sup_error", e, 0.0, c.noiseless_max);
  }
  return col.finish();
}

ExperimentResult run_experiment(const ExperimentConfig& c) {
  switch (c.id) {
    case ExperimentId::InteriorRate: return run_interior_rate(c);
    case ExperimentId::BoundaryAdaptation: return run_boundary_adaptation(c);
    case ExperimentId::ZeroBehavior: return run_zero_behavior(c);
    case ExperimentId::TestCalibration: return run_test_calibration(c);
    case ExperimentId::RegressionSuite: return run_regression_suite(c);
  }
  throw InputError("unknown experiment id");
}

bool ExperimentResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

const CheckResult& ExperimentResult::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw InputError("no check named " + name);
}

// ---------------------------------------------------------------- config JSON

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"] != kConfigSchemaVersion)
    throw InputError("config: schema_version must be " + std::to_string(kConfigSchemaVersion));
  if (!j.contains("experiment")) throw InputError("config: missing 'experiment'");
  static const char* known[] = {"schema_version", "experiment", "truth", "alternative", "n_grid", "points", "alphas",
                                "replicates", "delta", "sigma", "seed", "threads", "keep_records", "law_n",
                                "law_replicates", "invelope_sims", "m", "power_replicates", "noiseless_n",
                                "ratio_max", "ratio_min", "slope_lo", "slope_hi", "ks_max", "size_lo", "size_hi",
                                "size2_lo", "size2_hi", "power_min", "noiseless_max", "max_failure_rate", "table"};
  for (const auto& [key, value] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw InputError("config: unknown field '" + key + "'");
  auto c = ExperimentConfig::defaults(experiment_from_name(j["experiment"].get<std::string>()));
  try {
    if (j.contains("truth")) c.truth_json = j["truth"].dump();
    if (j.contains("alternative")) c.alternative_json = j["alternative"].is_null() ? "" : j["alternative"].dump();
    if (j.contains("n_grid")) c.n_grid = j["n_grid"].get<std::vector<std::size_t>>();
    if (j.contains("points")) c.points = j["points"].get<std::vector<double>>();
    if (j.contains("alphas")) c.alphas = j["alphas"].get<std::vector<double>>();
#define CVXLSE_FIELD(name) \
  if (j.contains(#name)) c.name = j[#name].get<decltype(c.name)>();
    CVXLSE_FIELD(replicates)
    CVXLSE_FIELD(delta)
    CVXLSE_FIELD(sigma)
    CVXLSE_FIELD(seed)
    CVXLSE_FIELD(threads)
    CVXLSE_FIELD(keep_records)
    CVXLSE_FIELD(law_n)
    CVXLSE_FIELD(law_replicates)
    CVXLSE_FIELD(invelope_sims)
    CVXLSE_FIELD(m)
    CVXLSE_FIELD(power_replicates)
    CVXLSE_FIELD(noiseless_n)
    CVXLSE_FIELD(ratio_max)
    CVXLSE_FIELD(ratio_min)
    CVXLSE_FIELD(slope_lo)
    CVXLSE_FIELD(slope_hi)
    CVXLSE_FIELD(ks_max)
    CVXLSE_FIELD(size_lo)
    CVXLSE_FIELD(size_hi)
    CVXLSE_FIELD(size2_lo)
    CVXLSE_FIELD(size2_hi)
    CVXLSE_FIELD(power_min)
    CVXLSE_FIELD(noiseless_max)
    CVXLSE_FIELD(max_failure_rate)
#undef CVXLSE_FIELD
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (j.contains("table")) {
    const auto& t = j["table"];
    c.table = table_from_json(t.is_string() ? read_text_file(t.get<std::string>()) : t.dump());
  }
  c.validate();
  return c;
}

std::string to_json(const ExperimentConfig& c) {
  json j = {{"schema_version", kConfigSchemaVersion},
            {"experiment", experiment_name(c.id)},
            {"truth", json::parse(c.truth_json)},
            {"n_grid", c.n_grid},
            {"replicates", c.replicates},
            {"points", c.points},
            {"alphas", c.alphas},
            {"delta", c.delta},
            {"sigma", c.sigma},
            {"seed", c.seed},
            {"keep_records", c.keep_records},
            {"law_n", c.law_n},
            {"law_replicates", c.law_replicates},
            {"invelope_sims", c.invelope_sims},
            {"m", c.m},
            {"power_replicates", c.power_replicates},
            {"noiseless_n", c.noiseless_n},
            {"ratio_max", c.ratio_max},
            {"ratio_min", c.ratio_min},
            {"slope_lo", c.slope_lo},
            {"slope_hi", c.slope_hi},
            {"ks_max", c.ks_max},
            {"size_lo", c.size_lo},
            {"size_hi", c.size_hi},
            {"size2_lo", c.size2_lo},
            {"size2_hi", c.size2_hi},
            {"power_min", c.power_min},
            {"noiseless_max", c.noiseless_max},
            {"max_failure_rate", c.max_failure_rate}};
  j["alternative"] = c.alternative_json.empty() ? json(nullptr) : json::parse(c.alternative_json);
  if (c.table) j["table"] = json::parse(to_json(*c.table));
  return j.dump(2);
}

// ---------------------------------------------------------------- outputs

void write_summary_csv(std::ostream& os, const ExperimentResult& r) {
  const auto id = experiment_name(r.id);
  os << "experiment,label,n,x,count,median,q25,q75\n";
  for (const auto& s : r.summary)
    os << id << ',' << s.label << ',' << s.n << ',' << fmt(s.x) << ',' << s.count << ',' << fmt(s.median) << ','
       << fmt(s.q25) << ',' << fmt(s.q75) << '\n';
}

void write_slopes_csv(std::ostream& os, const ExperimentResult& r) {
  const auto id = experiment_name(r.id);
  os << "experiment,label,x,slope,se,ci_lo,ci_hi\n";
  for (const auto& s : r.slopes)
    os << id << ',' << s.label << ',' << fmt(s.x) << ',' << fmt(s.slope) << ',' << fmt(s.se) << ',' << fmt(s.ci_lo)
       << ',' << fmt(s.ci_hi) << '\n';
}

void write_checks_csv(std::ostream& os, const ExperimentResult& r) {
  const auto id = experiment_name(r.id);
  os << "experiment,check,value,lo,hi,pass\n";
  for (const auto& c : r.checks)
    os << id << ",\"" << c.name << "\"," << fmt(c.value) << ',' << fmt(c.lo) << ',' << fmt(c.hi) << ','
       << (c.pass ? "true" : "false") << '\n';
}

void write_records_csv(std::ostream& os, const ExperimentResult& r) {
  const auto id = experiment_name(r.id);
  os << "experiment,label,n,replicate,x,value,converged,min_gap,knot_equality_error,fubini_residual,"
        "df_match_error,marshall_ratio\n";
  for (const auto& c : r.records) {
    const auto& d = c.diagnostics;
    os << id << ',' << c.label << ',' << c.n << ',' << c.replicate << ',' << fmt(c.x) << ',' << fmt(c.value) << ','
       << (c.converged ? "true" : "false") << ',' << fmt(d.min_gap) << ',' << fmt(d.knot_equality_error) << ','
       << fmt(d.fubini_residual) << ',' << fmt(d.df_match_error) << ','
       << (d.marshall_ratio ? fmt(*d.marshall_ratio) : std::string()) << '\n';
  }
}

std::string to_json(const ExperimentResult& r) {
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : v < 0 ? "-inf" : "nan"); };
  json j = {{"experiment", experiment_name(r.id)},
            {"seed", r.seed},
            {"fits", r.fits},
            {"fit_failures", r.fit_failures},
            {"all_pass", r.all_pass()}};
  j["summary"] = json::array();
  for (const auto& s : r.summary)
    j["summary"].push_back({{"label", s.label}, {"n", s.n}, {"x", s.x}, {"count", s.count},
                            {"median", s.median}, {"q25", s.q25}, {"q75", s.q75}});
  j["slopes"] = json::array();
  for (const auto& s : r.slopes)
    j["slopes"].push_back({{"label", s.label}, {"x", s.x}, {"slope", s.slope}, {"se", s.se},
                           {"ci_lo", s.ci_lo}, {"ci_hi", s.ci_hi}});
  j["checks"] = json::array();
  for (const auto& c : r.checks)
    j["checks"].push_back({{"name", c.name}, {"value", finite(c.value)}, {"lo", finite(c.lo)}, {"hi", finite(c.hi)},
                           {"pass", c.pass}});
  return j.dump(2);
}

void write_experiment_outputs(const std::string& dir, const ExperimentResult& r) {
  std::filesystem::create_directories(dir);
  const auto base = (std::filesystem::path(dir) / experiment_name(r.id)).string();
  auto write = [](const std::string& path, auto&& fn) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    fn(out);
  };
  write(base + "_summary.csv", [&](std::ostream& o) { write_summary_csv(o, r); });
  write(base + "_slopes.csv", [&](std::ostream& o) { write_slopes_csv(o, r); });
  write(base + "_checks.csv", [&](std::ostream& o) { write_checks_csv(o, r); });
  write(base + "_records.csv", [&](std::ostream& o) { write_records_csv(o, r); });
  write(base + ".json", [&](std::ostream& o) { o << to_json(r) << '\n'; });
}

// ---------------------------------------------------------------- statistics

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == t) ++i;
    while (j < b.size() && b[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double sample_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InputError("sample_quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("sample_quantile: p must be in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (pos - static_cast<double>(k)) * (v[k + 1] - v[k]);
}

}  // namespace cvxlse
