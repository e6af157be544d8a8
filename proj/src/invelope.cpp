#include "cvxlse/invelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cvxlse/errors.hpp"
#include "parallel.hpp"

namespace cvxlse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Discrete problem on nodes 0..N with spacing h:
//   min 1/2 sum_i h w_i g_i^2 - sum_i p_i g_i
//   s.t. g_{i-1} - 2 g_i + g_{i+1} >= 0 (0 < i < N), g_0 = g_N = k,
// with trapezoid weights w and p_i = (X_{i+1} - X_{i-1}) / 2, the exact
// integral of g against the linear interpolant of X. The end values k carry
// no information as k grows, so the half-cell increments next to the ends are
// paired with nodes 1 and N - 1 instead; then sum_i p_i = X_N - X_0 exactly.
// The partial derivative along the kink at node j is exactly (H - Y)_j, where
// Y has second differences h p_i and H has second differences h^2 g, both
// matching the path at the ends.
class GridQp {
 public:
  GridQp(std::vector<double> p, std::vector<double> Y, double h) : p_(std::move(p)), Y_(std::move(Y)), h_(h) {
    N_ = p_.size() - 1;
    w_.assign(N_ + 1, 1.0);
    w_.front() = w_.back() = 0.5;
    active_.assign(N_ + 1, 0);
    g_.assign(N_ + 1, 0.0);
  }

  std::size_t N() const { return N_; }
  const std::vector<double>& g() const { return g_; }
  const std::vector<double>& H() const { return H_; }
  const std::vector<double>& gap() const { return D_; }

  std::vector<std::size_t> knots() const {
    std::vector<std::size_t> s;
    for (std::size_t i = 1; i < N_; ++i)
      if (active_[i]) s.push_back(i);
    return s;
  }

  /// Starts from g = k with the given kink candidates.
  void start(double k, const std::vector<std::size_t>& initial) {
    k_ = k;
    g_.assign(N_ + 1, k);
    std::fill(active_.begin(), active_.end(), 0);
    for (std::size_t j : initial)
      if (j > 0 && j < N_) active_[j] = 1;
  }

  /// Moves to a new boundary value keeping the current kinks; g + (k' - k)
  /// stays feasible.
  void shift(double k) {
    for (double& v : g_) v += k - k_;
    k_ = k;
  }

  /// Active-set solve at the current boundary value. Returns the number of
  /// iterations, or throws if max_iter is exceeded.
  std::size_t solve(double tol, std::size_t max_iter) {
    std::size_t it = 0;
    reduce(it, max_iter);
    for (;;) {
      compute_gap();
      double best = -tol;
      std::size_t arg = 0;
      for (std::size_t i = 1; i < N_; ++i)
        if (!active_[i] && D_[i] < best) {
          best = D_[i];
          arg = i;
        }
      if (arg == 0) break;
      active_[arg] = 1;
      reduce(it, max_iter);
    }
    return it;
  }

  // Objective without the end-node terms, which are fixed by k. Raising the
  // end values keeps any feasible g convex, so this is nonincreasing in k.
  double phi() const {
    double s = 0.0;
    for (std::size_t i = 1; i < N_; ++i) s += 0.5 * h_ * g_[i] * g_[i] - p_[i] * g_[i];
    return s;
  }

  double second_difference(const std::vector<double>& g, std::size_t i) const {
    return g[i - 1] - 2.0 * g[i] + g[i + 1];
  }

 private:
  // Minimizer over g that are linear between consecutive anchors
  // {0} u kinks u {N}, with the end values fixed at k.
  void unconstrained(std::vector<double>& out) const {
    std::vector<std::size_t> A{0};
    for (std::size_t i = 1; i < N_; ++i)
      if (active_[i]) A.push_back(i);
    A.push_back(N_);
    const std::size_t q = A.size() - 2;
    std::vector<double> d(q, 0.0), e(q > 0 ? q - 1 : 0, 0.0), r(q, 0.0);
    for (std::size_t s = 0; s + 1 < A.size(); ++s) {
      const std::size_t a = A[s], b = A[s + 1];
      const double len = static_cast<double>(b - a);
      const std::size_t last = (s + 2 == A.size()) ? b : b - 1;
      // unknown indices: left anchor s-1 (if interior), right anchor s (if interior)
      const bool left_free = s > 0, right_free = s < q;
      for (std::size_t i = a; i <= last; ++i) {
        const double lam = static_cast<double>(i - a) / len, mu = 1.0 - lam;
        const double hw = h_ * w_[i];
        if (left_free) {
          d[s - 1] += hw * mu * mu;
          r[s - 1] += p_[i] * mu;
          if (right_free) e[s - 1] += hw * mu * lam;
          else r[s - 1] -= hw * mu * lam * k_;
        }
        if (right_free) {
          d[s] += hw * lam * lam;
          r[s] += p_[i] * lam;
          if (!left_free) r[s] -= hw * mu * lam * k_;
        }
      }
    }
    // Thomas algorithm on the symmetric positive definite tridiagonal system.
    for (std::size_t i = 1; i < q; ++i) {
      const double f = e[i - 1] / d[i - 1];
      d[i] -= f * e[i - 1];
      r[i] -= f * r[i - 1];
    }
    std::vector<double> v(q);
    for (std::size_t i = q; i-- > 0;) v[i] = (r[i] - (i + 1 < q ? e[i] * v[i + 1] : 0.0)) / d[i];
    out.assign(N_ + 1, 0.0);
    for (std::size_t s = 0; s + 1 < A.size(); ++s) {
      const std::size_t a = A[s], b = A[s + 1];
      const double va = s == 0 ? k_ : v[s - 1], vb = s == q ? k_ : v[s];
      for (std::size_t i = a; i <= b; ++i) {
        const double lam = static_cast<double>(i - a) / static_cast<double>(b - a);
        out[i] = va + lam * (vb - va);
      }
      out[a] = va;
      out[b] = vb;
    }
  }

  // From the feasible g_, move toward the unconstrained minimizer on the
  // current kinks, dropping kinks whose slope jump would turn negative.
  void reduce(std::size_t& it, std::size_t max_iter) {
    std::vector<double> cand;
    for (;;) {
      if (++it > max_iter) throw std::logic_error("invelope QP exceeded its iteration cap");
      unconstrained(cand);
      double t = 1.0;
      bool blocked = false;
      for (std::size_t i = 1; i < N_; ++i) {
        if (!active_[i]) continue;
        const double sn = second_difference(cand, i);
        if (sn < 0.0) {
          const double so = std::max(second_difference(g_, i), 0.0);
          const double ti = so / (so - sn);
          if (ti < t) t = ti;
          blocked = true;
        }
      }
      if (!blocked) {
        g_.swap(cand);
        return;
      }
      for (std::size_t i = 0; i <= N_; ++i) g_[i] += t * (cand[i] - g_[i]);
      // Drop kinks that reached zero (relative to the local magnitude).
      for (std::size_t i = 1; i < N_; ++i) {
        if (!active_[i]) continue;
        const double mag = std::abs(g_[i - 1]) + 2.0 * std::abs(g_[i]) + std::abs(g_[i + 1]);
        if (second_difference(g_, i) <= 1e-15 * mag) active_[i] = 0;
      }
    }
  }

  void compute_gap() {
    H_.assign(N_ + 1, 0.0);
    double slope = 0.0;
    for (std::size_t i = 1; i <= N_; ++i) {
      if (i > 1) slope += h_ * g_[i - 1];
      H_[i] = H_[i - 1] + h_ * slope;
    }
    const double drift = (Y_[N_] - Y_[0] - H_[N_]) / static_cast<double>(N_);
    D_.assign(N_ + 1, 0.0);
    for (std::size_t i = 0; i <= N_; ++i) {
      H_[i] += Y_[0] + drift * static_cast<double>(i);
      D_[i] = H_[i] - Y_[i];
    }
    H_[0] = Y_[0];
    H_[N_] = Y_[N_];
    D_[0] = D_[N_] = 0.0;
  }

  std::vector<double> p_, Y_, w_, g_, H_, D_;
  std::vector<char> active_;
  double h_;
  double k_ = 0.0;
  std::size_t N_ = 0;
};

std::size_t grid_index(const GaussianPath& path, double t) {
  const double m = static_cast<double>(path.m());
  const double r = std::round(t * m);
  if (std::abs(t * m - r) > 1e-6) throw InputError("invelope interval ends must lie on the path grid");
  return static_cast<std::size_t>(r);
}

}  // namespace

std::vector<double> InvelopeOptions::default_schedule() {
  std::vector<double> s;
  for (int e = 1; e <= 14; ++e) s.push_back(std::ldexp(1.0, e));
  return s;
}

std::vector<double> default_alphas() { return {0.01, 0.025, 0.05, 0.10, 0.20}; }

InvelopeResult compute_invelope(const GaussianPath& path, Interval interval, const InvelopeOptions& opts) {
  if (path.grid.size() < 17 || path.X.size() != path.grid.size() || path.Y.size() != path.grid.size())
    throw InputError("invelope: malformed path");
  if (!(interval.a >= 0.0 && interval.b <= 1.0 && interval.a < interval.b))
    throw InputError("invelope: interval must satisfy 0 <= a < b <= 1");
  if (opts.k_schedule.empty()) throw InputError("invelope: empty k schedule");
  for (std::size_t i = 0; i < opts.k_schedule.size(); ++i)
    if (!(opts.k_schedule[i] > 0.0) || (i > 0 && !(opts.k_schedule[i] > opts.k_schedule[i - 1])))
      throw InputError("invelope: k schedule must be positive and increasing");
  if (!(opts.margin > 0.0 && opts.margin < 0.5)) throw InputError("invelope: margin must be in (0, 0.5)");

  const std::size_t ia = grid_index(path, interval.a), ib = grid_index(path, interval.b);
  if (ib < ia + 16) throw InputError("invelope: interval needs at least 16 grid cells");
  const std::size_t N = ib - ia;
  const double h = 1.0 / static_cast<double>(path.m());

  const auto& X = path.X;
  std::vector<double> p(N + 1, 0.0);
  for (std::size_t i = 1; i < N; ++i) p[i] = 0.5 * (X[ia + i + 1] - X[ia + i - 1]);
  p[1] += 0.5 * (X[ia + 1] - X[ia]);
  p[N - 1] += 0.5 * (X[ib] - X[ib - 1]);
  // Integrated path consistent with p: trapezoid inside, one-sided in the end
  // cells, anchored at the path values Y(a) and Y(b).
  std::vector<double> Y(N + 1, 0.0);
  {
    double slope = X[ia];
    for (std::size_t i = 1; i <= N; ++i) {
      if (i > 1) slope += p[i - 1];
      Y[i] = Y[i - 1] + h * slope;
    }
    const double ya = path.Y[ia], drift = (path.Y[ib] - ya - Y[N]) / static_cast<double>(N);
    for (std::size_t i = 0; i <= N; ++i) Y[i] += ya + drift * static_cast<double>(i);
    Y[N] = path.Y[ib];
  }

  GridQp qp(std::move(p), Y, h);
  const std::size_t max_iter = opts.qp_max_iter ? opts.qp_max_iter : 20 * N;
  const auto lo = static_cast<std::size_t>(std::ceil(opts.margin * static_cast<double>(N)));
  const std::size_t hi = N - lo;

  InvelopeResult res;
  res.interval = {path.grid[ia], path.grid[ib]};
  res.grid.assign(path.grid.begin() + ia, path.grid.begin() + ib + 1);
  res.Y = Y;

  std::vector<double> prev;
  for (std::size_t s = 0; s < opts.k_schedule.size(); ++s) {
    const double k = opts.k_schedule[s];
    if (s == 0) {
      std::vector<std::size_t> init;
      for (std::size_t j : opts.initial_knots)
        if (j > ia && j < ib) init.push_back(j - ia);
      qp.start(k, init);
    } else {
      qp.shift(k);
    }
    InvelopeStep step;
    step.k = k;
    step.iterations = qp.solve(opts.qp_tol, max_iter);
    step.phi = qp.phi();
    const auto& g = qp.g();
    step.sup_change = kInf;
    if (!prev.empty()) {
      step.sup_change = 0.0;
      for (std::size_t i = lo; i <= hi; ++i) step.sup_change = std::max(step.sup_change, std::abs(g[i] - prev[i]));
    }
    prev = g;

    const auto& H = qp.H();
    const auto& D = qp.gap();
    auto& r = step.residuals;
    r.min_gap = *std::min_element(D.begin(), D.end());
    r.left_value = std::abs(H[0] - Y[0]);
    r.right_value = std::abs(H[N] - Y[N]);
    r.left_slope = std::abs((H[1] - H[0]) / h - X[ia]);
    r.right_slope = std::abs((H[N] - H[N - 1]) / h - X[ib]);
    double fub = 0.0;
    for (std::size_t i = 1; i < N; ++i) fub += qp.second_difference(g, i) / h * D[i];
    r.fubini = std::abs(fub);
    step.knots = qp.knots().size();
    res.steps.push_back(step);

    if (step.sup_change <= opts.stop_tol) {
      res.converged = true;
      break;
    }
  }

  const auto& g = qp.g();
  res.k_final = res.steps.back().k;
  res.residuals = res.steps.back().residuals;
  res.knots = qp.knots();
  res.H = qp.H();
  res.g = g;
  res.dH.assign(N + 1, 0.0);
  res.dH[0] = (res.H[1] - res.H[0]) / h;
  res.dH[N] = (res.H[N] - res.H[N - 1]) / h;
  for (std::size_t i = 1; i < N; ++i) res.dH[i] = (res.H[i + 1] - res.H[i - 1]) / (2.0 * h);
  res.dg.assign(N + 1, 0.0);
  for (std::size_t i = 0; i < N; ++i) res.dg[i] = (g[i + 1] - g[i]) / h;
  res.dg[N] = res.dg[N - 1];

  for (std::size_t s = 1; s < res.steps.size(); ++s)
    if (res.steps[s].phi > res.steps[s - 1].phi + 1e-12 * std::max(1.0, std::abs(res.steps[s - 1].phi)))
      res.phi_monotone = false;
  if (!res.converged) res.warning = "k schedule exhausted before the interior solution stabilised";
  if (!res.phi_monotone) res.warning += (res.warning.empty() ? "" : "; ") + std::string("objective increased with k (QP failure)");
  return res;
}

double InvelopeResult::second_derivative_at(double t) const {
  if (t < grid.front() || t > grid.back()) throw DomainError("invelope: point outside the interval");
  const auto it = std::upper_bound(grid.begin(), grid.end(), t);
  if (it == grid.end()) return g.back();
  const std::size_t j = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double lam = (t - grid[j]) / (grid[j + 1] - grid[j]);
  return g[j] + lam * (g[j + 1] - g[j]);
}

double InvelopeResult::third_derivative_at(double t) const {
  if (t < grid.front() || t > grid.back()) throw DomainError("invelope: point outside the interval");
  const auto it = std::upper_bound(grid.begin(), grid.end(), t);
  if (it == grid.end()) return dg.back();
  return dg[static_cast<std::size_t>(it - grid.begin()) - 1];
}

double InvelopeResult::scale() const {
  double s = 0.0, t = 0.0;
  for (double v : Y) s = std::max(s, std::abs(v));
  for (double v : H) t = std::max(t, std::abs(v));
  return s + t;
}

double limit_T(const InvelopeResult& inv) {
  double mn = kInf;
  for (std::size_t i = 1; i + 1 < inv.g.size(); ++i) mn = std::min(mn, inv.g[i]);
  return -mn;
}

double upper_quantile(const std::vector<double>& sorted, double alpha) {
  if (sorted.empty()) throw InputError("upper_quantile: empty sample");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("upper_quantile: alpha must be in (0, 1)");
  const double pos = (1.0 - alpha) * static_cast<double>(sorted.size() - 1);
  const auto j = static_cast<std::size_t>(std::floor(pos));
  if (j + 1 >= sorted.size()) return sorted.back();
  return sorted[j] + (pos - static_cast<double>(j)) * (sorted[j + 1] - sorted[j]);
}

QuantileTable::Lookup QuantileTable::lookup(double alpha) const {
  if (alphas.empty() || alphas.size() != quantiles.size()) throw InputError("quantile table is malformed");
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (std::abs(alphas[i] - alpha) <= 1e-12 * alphas[i]) return {quantiles[i], false};
  if (!(alpha > alphas.front() && alpha < alphas.back()))
    throw DomainError("alpha outside the range of the quantile table");
  std::size_t j = 1;
  while (alphas[j] < alpha) ++j;
  const double la = std::log(alphas[j - 1]), lb = std::log(alphas[j]);
  const double lam = (std::log(alpha) - la) / (lb - la);
  return {quantiles[j - 1] + lam * (quantiles[j] - quantiles[j - 1]), true};
}

QuantileSimulation estimate_quantiles(std::size_t n_sims, const std::vector<double>& alphas, std::size_t m,
                                      const InvelopeOptions& opts, std::uint64_t seed, unsigned threads,
                                      const TruthSpec* truth) {
  if (n_sims < 100) throw InputError("estimate_quantiles: n_sims must be >= 100");
  if (alphas.empty()) throw InputError("estimate_quantiles: no alphas");
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0) || (i > 0 && !(alphas[i] > alphas[i - 1])))
      throw InputError("estimate_quantiles: alphas must be increasing in (0, 1)");
  const TruthSpec tri = TruthSpec::triangular();
  const TruthSpec& f0 = truth ? *truth : tri;
  if (!f0.is_density()) throw ModeError("estimate_quantiles needs a density truth");

  QuantileSimulation out;
  out.T.assign(n_sims, 0.0);
  std::vector<char> conv(n_sims, 0);
  detail::parallel_for(n_sims, threads, [&](std::size_t r) {
    const auto path = bridge_path(m, f0, derive_seed(seed, r, 1));
    const auto inv = compute_invelope(path, {0.0, 1.0}, opts);
    out.T[r] = limit_T(inv);
    conv[r] = inv.converged;
  });

  auto& tab = out.table;
  tab.alphas = alphas;
  tab.n_sims = n_sims;
  tab.m = m;
  tab.seed = seed;
  tab.options = opts;
  for (char c : conv) tab.non_converged += c ? 0 : 1;
  std::vector<double> sorted = out.T;
  std::sort(sorted.begin(), sorted.end());
  tab.min_T = sorted.front();
  for (double a : alphas) tab.quantiles.push_back(upper_quantile(sorted, a));

  // Bootstrap over replicates for the Monte Carlo standard errors.
  const std::size_t B = 200;
  std::vector<std::vector<double>> boot(alphas.size(), std::vector<double>(B));
  Rng rng(derive_seed(seed, 0, 2));
  std::vector<double> res(n_sims);
  for (std::size_t b = 0; b < B; ++b) {
    for (auto& v : res) v = sorted[std::min(n_sims - 1, static_cast<std::size_t>(rng.uniform() * n_sims))];
    std::sort(res.begin(), res.end());
    for (std::size_t i = 0; i < alphas.size(); ++i) boot[i][b] = upper_quantile(res, alphas[i]);
  }
  for (auto& v : boot) {
    double mean = 0.0, ss = 0.0;
    for (double x : v) mean += x;
    mean /= B;
    for (double x : v) ss += (x - mean) * (x - mean);
    tab.standard_errors.push_back(std::sqrt(ss / (B - 1)));
  }
  return out;
}

std::pair<double, double> rescale_regression_limit(const InvelopeResult& inv, double a, double b, double sigma,
                                                   double x) {
  if (!(a < x && x < b)) throw DomainError("rescale_regression_limit: x must lie in (a, b)");
  if (inv.interval.a != 0.0 || inv.interval.b != 1.0)
    throw InputError("rescale_regression_limit: invelope must be computed on [0, 1]");
  // Brownian scaling: on [a, b] the path is sigma sqrt(b - a) W((t - a) / (b - a)),
  // so H(t) = sigma (b - a)^{3/2} H~(u) up to an affine term.
  const double u = (x - a) / (b - a), s = std::sqrt(b - a);
  return {sigma * inv.second_derivative_at(u) / s, sigma * inv.third_derivative_at(u) / (s * s * s)};
}

}  // namespace cvxlse
