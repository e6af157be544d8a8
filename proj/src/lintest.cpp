#include "cvxlse/lintest.hpp"

#include <algorithm>
#include <cmath>

#include "cvxlse/errors.hpp"
#include "cvxlse/io.hpp"

namespace cvxlse {

namespace detail {
const char* default_table_json();
}

double t_statistic_of(const PiecewiseLinearFn& f, std::size_t n) {
  if (f.extension() != Extension::ClampZeroRight)
    throw InputError("t statistic: the estimate must be a density (clamped to zero on the right)");
  if (n == 0) throw InputError("t statistic: n must be positive");
  const double hi = std::max(1.0, f.back());
  auto diff = [&](double t) { return (t <= 1.0 ? 2.0 * (1.0 - t) : 0.0) - f(t); };
  double sup = std::max(diff(0.0), diff(1.0));
  for (double x : f.breakpoints())
    if (x >= 0.0 && x <= hi) sup = std::max(sup, diff(x));
  return std::sqrt(static_cast<double>(n)) * std::max(sup, 0.0);
}

TStatistic t_statistic(const EmpiricalMeasure& sample, const SolverOptions& opts) {
  if (sample.mode() != Mode::Density) throw ModeError("t statistic needs density data");
  if (sample.n() < 2) throw InputError("t statistic: need n >= 2");
  TStatistic out;
  out.fit = fit_convex_density(sample, opts);
  out.T_n = t_statistic_of(out.fit.estimate, sample.n());
  return out;
}

TestDecision decide(double T_n, std::size_t n, double alpha, const QuantileTable& table) {
  const auto q = table.lookup(alpha);
  TestDecision d;
  d.T_n = T_n;
  d.alpha = alpha;
  d.t_alpha = q.t_alpha;
  d.interpolated = q.interpolated;
  d.reject = T_n > q.t_alpha;
  d.n = n;
  return d;
}

TestDecision linearity_test(const EmpiricalMeasure& sample, double alpha, const QuantileTable& table,
                            const SolverOptions& opts) {
  table.lookup(alpha);  // range check before the fit
  const auto s = t_statistic(sample, opts);
  return decide(s.T_n, sample.n(), alpha, table);
}

const QuantileTable& default_quantile_table() {
  static const QuantileTable table = [] {
    const std::string text = detail::default_table_json();
    if (text.empty()) throw InputError("no quantile table was shipped with this build");
    return table_from_json(text);
  }();
  return table;
}

}  // namespace cvxlse
