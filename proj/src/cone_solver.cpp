#include "cone_solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "cvxlse/pwl.hpp"

namespace cvxlse::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Solves a symmetric positive definite tridiagonal system in place.
std::vector<double> thomas(std::vector<double> diag, std::vector<double> off, std::vector<double> rhs) {
  const std::size_t m = diag.size();
  for (std::size_t i = 1; i < m; ++i) {
    double f = off[i - 1] / diag[i - 1];
    diag[i] -= f * off[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  for (std::size_t i = m; i-- > 0;) {
    double r = rhs[i];
    if (i + 1 < m) r -= off[i] * rhs[i + 1];
    rhs[i] = r / diag[i];
  }
  return rhs;
}

}  // namespace

SegmentTerms segment_terms(double a, double b, double A, double B, double W, double P, double Q) {
  const double L = B - A, L2 = L * L, L3 = L2 * L;
  const double q = a * a + a * b + b * b;
  const double N = a * P + b * Q;
  SegmentTerms t;
  t.value = L * q / 6.0 - N / L;
  t.grad = {L * (2 * a + b) / 6.0 - P / L, L * (a + 2 * b) / 6.0 - Q / L, -q / 6.0 + b * W / L - N / L2,
            q / 6.0 - a * W / L + N / L2};
  auto& h = t.hess;
  h[0][0] = L / 3.0;
  h[0][1] = L / 6.0;
  h[1][1] = L / 3.0;
  h[0][2] = -(2 * a + b) / 6.0 - P / L2;
  h[0][3] = (2 * a + b) / 6.0 - W / L + P / L2;
  h[1][2] = -(a + 2 * b) / 6.0 + W / L - Q / L2;
  h[1][3] = (a + 2 * b) / 6.0 + Q / L2;
  h[2][2] = 2 * b * W / L2 - 2 * N / L3;
  h[2][3] = -(a + b) * W / L2 + 2 * N / L3;
  h[3][3] = 2 * a * W / L2 - 2 * N / L3;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < i; ++j) h[i][j] = h[j][i];
  return t;
}

ConeProblem::ConeProblem(ConeKind kind, std::vector<double> atoms, std::vector<double> weights)
    : kind_(kind), x_(std::move(atoms)), w_(std::move(weights)) {
  cap_ = kind_ == ConeKind::Density ? 1.5 * x_.back() : 1.0;
  range_ = kind_ == ConeKind::Density ? x_.back() : 1.0;
}

std::size_t ConeProblem::gap_index(double t) const {
  return static_cast<std::size_t>(std::lower_bound(x_.begin(), x_.end(), t) - x_.begin());
}

double ConeProblem::snap_to_atom(double t) const {
  auto it = std::lower_bound(x_.begin(), x_.end(), t);
  const double tol = 1e-12 * range_;
  if (it != x_.end() && *it - t <= tol) return *it;
  if (it != x_.begin() && t - *(it - 1) <= tol) return *(it - 1);
  return t;
}

bool ConeProblem::on_atom(double t) const {
  auto it = std::lower_bound(x_.begin(), x_.end(), t);
  return it != x_.end() && *it == t;
}

std::vector<double> ConeProblem::least_squares(const std::vector<double>& nodes) const {
  const std::size_t K = nodes.size();
  const bool dens = kind_ == ConeKind::Density;
  if (dens && K == 1) return {0.0};
  const std::size_t m = dens ? K - 1 : K;
  std::vector<double> diag(m, 0.0), off(m > 0 ? m - 1 : 0, 0.0), rhs(m, 0.0);
  std::size_t ai = gap_index(nodes[0]);
  for (std::size_t j = 0; j + 1 < K; ++j) {
    const double A = nodes[j], B = nodes[j + 1], L = B - A;
    double P = 0.0, Q = 0.0;
    for (; ai < x_.size() && x_[ai] < B; ++ai) {
      P += w_[ai] * (B - x_[ai]);
      Q += w_[ai] * (x_[ai] - A);
    }
    diag[j] += L / 3.0;
    rhs[j] += P / L;
    if (j + 1 < m) {
      diag[j + 1] += L / 3.0;
      off[j] = L / 6.0;
      rhs[j + 1] += Q / L;
    }
  }
  auto sol = thomas(std::move(diag), std::move(off), std::move(rhs));
  if (dens) sol.push_back(0.0);
  return sol;
}

Iterate ConeProblem::empty_iterate() const {
  if (kind_ == ConeKind::Density) return Iterate{{0.0}, {0.0}, {0}};
  return fit_knots({});
}

Iterate ConeProblem::fit_knots(std::vector<double> knots) const {
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  Iterate it;
  it.nodes.push_back(0.0);
  for (double k : knots)
    if (k > 0.0 && (kind_ == ConeKind::Density || k < 1.0)) it.nodes.push_back(k);
  if (kind_ == ConeKind::Regression) it.nodes.push_back(1.0);
  it.values = least_squares(it.nodes);
  it.pinned.assign(it.nodes.size(), 0);
  return it;
}

std::vector<double> ConeProblem::knots_of(const Iterate& it) const {
  if (kind_ == ConeKind::Density) return {it.nodes.begin() + 1, it.nodes.end()};
  return {it.nodes.begin() + 1, it.nodes.end() - 1};
}

std::vector<double> ConeProblem::slope_changes(const Iterate& it) const {
  const std::size_t K = it.size();
  std::vector<double> s(K > 0 ? K - 1 : 0);
  for (std::size_t j = 0; j + 1 < K; ++j)
    s[j] = (it.values[j + 1] - it.values[j]) / (it.nodes[j + 1] - it.nodes[j]);
  std::vector<double> theta;
  if (kind_ == ConeKind::Density) {
    for (std::size_t j = 1; j < K; ++j) theta.push_back((j + 1 < K ? s[j] : 0.0) - s[j - 1]);
  } else {
    for (std::size_t j = 1; j + 1 < K; ++j) theta.push_back(s[j] - s[j - 1]);
  }
  return theta;
}

double ConeProblem::eval(const Iterate& it, double t) const {
  const auto& n = it.nodes;
  const auto& v = it.values;
  if (kind_ == ConeKind::Density && (t >= n.back() || n.size() == 1)) return 0.0;
  std::size_t j = static_cast<std::size_t>(std::upper_bound(n.begin(), n.end(), t) - n.begin());
  j = std::clamp<std::size_t>(j, 1, n.size() - 1);
  const double lam = (t - n[j - 1]) / (n[j] - n[j - 1]);
  return v[j - 1] + lam * (v[j] - v[j - 1]);
}

double ConeProblem::objective(const Iterate& it) const {
  const std::size_t K = it.size();
  double phi = 0.0;
  std::size_t ai = 0;
  for (std::size_t j = 0; j + 1 < K; ++j) {
    const double A = it.nodes[j], B = it.nodes[j + 1], L = B - A;
    const double a = it.values[j], b = it.values[j + 1];
    double P = 0.0, Q = 0.0;
    for (; ai < x_.size() && x_[ai] < B; ++ai) {
      P += w_[ai] * (B - x_[ai]);
      Q += w_[ai] * (x_[ai] - A);
    }
    phi += L * (a * a + a * b + b * b) / 6.0 - (a * P + b * Q) / L;
  }
  return phi;
}

GapScan ConeProblem::scan(const Iterate& it) const {
  const bool dens = kind_ == ConeKind::Density;
  const std::size_t K = it.size();
  const std::size_t n = x_.size();
  GapScan S;
  const std::size_t nreg = dens ? K : K - 1;
  S.region_min.assign(nreg, kInf);
  S.region_arg.assign(nreg, 0.0);
  S.d_node.assign(K, 0.0);
  S.dl_node.assign(K, 0.0);
  S.dr_node.assign(K, 0.0);
  S.G_node.assign(K, 0.0);
  S.min_value = 0.0;
  S.argmin = 0.0;

  const double hi = dens ? std::max({cap_, it.nodes.back(), x_.back()}) : 1.0;
  auto slope = [&](std::size_t j) {
    if (j + 1 >= K) return 0.0;
    return (it.values[j + 1] - it.values[j]) / (it.nodes[j + 1] - it.nodes[j]);
  };
  auto update = [&](std::size_t r, double t, double val) {
    if (val < S.region_min[r]) {
      S.region_min[r] = val;
      S.region_arg[r] = t;
    }
    if (val < S.min_value) {
      S.min_value = val;
      S.argmin = t;
    }
  };

  double D = 0.0, Dp = 0.0, G = 0.0;
  double g = (dens && K == 1) ? 0.0 : it.values[0];
  double s = slope(0);
  std::size_t ai = 0, j = 0;
  double pos = 0.0;
  for (; ai < n && x_[ai] <= pos; ++ai) Dp -= w_[ai];
  S.dr_node[0] = Dp;

  while (pos < hi) {
    double next = hi;
    bool is_node = false;
    if (j + 1 < K) {
      next = it.nodes[j + 1];
      is_node = true;
    }
    if (ai < n && x_[ai] < next) {
      next = x_[ai];
      is_node = false;
    }
    const double L = next - pos;
    const std::size_t r = j;
    PiecewisePoly::Coeffs c{D, Dp, 0.5 * g, s / 6.0};
    std::array<double, 2> cp{};
    int nc = poly::critical_points(c, L, cp);
    for (int k = 0; k < nc; ++k) update(r, pos + cp[k], poly::eval(c, cp[k]));
    D += L * (Dp + L * (0.5 * g + L * s / 6.0));
    const double dG = L * (g + 0.5 * s * L);
    Dp += dG;
    G += dG;
    g += s * L;
    pos = next;
    update(r, pos, D);
    if (is_node) {
      ++j;
      S.d_node[j] = D;
      S.dl_node[j] = Dp;
      S.G_node[j] = G;
      g = (dens && j + 1 == K) ? 0.0 : it.values[j];
      s = slope(j);
    }
    for (; ai < n && x_[ai] <= pos; ++ai) Dp -= w_[ai];
    if (is_node) S.dr_node[j] = Dp;
  }
  return S;
}

bool ConeProblem::support_reduction(Iterate& it, double eps, std::size_t& iterations, std::size_t max_iter,
                                    std::vector<double>* trace) const {
  const double min_sep = 1e-10 * range_;
  while (iterations < max_iter) {
    GapScan S = scan(it);
    if (S.min_value >= -eps) return true;

    const auto knots = knots_of(it);
    auto far_from_nodes = [&](double t, const std::vector<double>& taken) {
      for (double k : it.nodes)
        if (std::abs(k - t) < min_sep) return false;
      for (double k : taken)
        if (std::abs(k - t) < min_sep) return false;
      return t > 0.0 && (kind_ == ConeKind::Density || t < 1.0);
    };
    std::vector<double> cand;
    for (std::size_t r = 0; r < S.region_min.size(); ++r) {
      if (S.region_min[r] < -eps && S.region_min[r] <= 1e-3 * S.min_value &&
          far_from_nodes(S.region_arg[r], cand))
        cand.push_back(snap_to_atom(S.region_arg[r]));
    }
    if (cand.empty()) return false;

    bool single = false;
    Iterate cur = it;
    std::vector<double> trial = knots;
    trial.insert(trial.end(), cand.begin(), cand.end());
    std::sort(trial.begin(), trial.end());
    bool stalled = false;
    for (;;) {
      Iterate nw = fit_knots(trial);
      auto th_new = slope_changes(nw);
      if (th_new.empty() || *std::min_element(th_new.begin(), th_new.end()) >= 0.0) {
        if (knots_of(nw) != knots) {
          it = std::move(nw);
          break;
        }
        // Every new knot was removed again. Retry once with the single most
        // violated point before giving up.
        if (single || cand.size() == 1 || !far_from_nodes(S.argmin, {})) {
          stalled = true;
          break;
        }
        single = true;
        cur = it;
        trial = knots;
        trial.push_back(snap_to_atom(S.argmin));
        std::sort(trial.begin(), trial.end());
        continue;
      }
      // Step from the current feasible function toward the new solution until
      // the first slope change hits zero, then drop that knot.
      Iterate old{nw.nodes, {}, std::vector<char>(nw.nodes.size(), 0)};
      for (double t : nw.nodes) old.values.push_back(eval(cur, t));
      auto th_old = slope_changes(old);
      double lam = 1.0;
      for (std::size_t k = 0; k < th_new.size(); ++k) {
        if (th_new[k] < 0.0) {
          double to = std::max(th_old[k], 0.0);
          lam = std::min(lam, to / (to - th_new[k]));
        }
      }
      Iterate mix = old;
      for (std::size_t k = 0; k < mix.values.size(); ++k)
        mix.values[k] = old.values[k] + lam * (nw.values[k] - old.values[k]);
      auto th_mix = slope_changes(mix);
      double scale = 0.0;
      for (double t : th_mix) scale = std::max(scale, std::abs(t));
      std::vector<double> keep;
      auto kn = knots_of(mix);
      for (std::size_t k = 0; k < kn.size(); ++k)
        if (!(th_new[k] < 0.0 && th_mix[k] <= 1e-14 * scale)) keep.push_back(kn[k]);
      if (keep.size() == kn.size()) {
        // Round-off left no exact zero; drop the most negative new coefficient.
        std::size_t worst = static_cast<std::size_t>(std::min_element(th_new.begin(), th_new.end()) - th_new.begin());
        keep.erase(std::find(keep.begin(), keep.end(), kn[worst]));
      }
      Iterate next{{0.0}, {}, {}};
      for (double k : keep) next.nodes.push_back(k);
      if (kind_ == ConeKind::Regression) next.nodes.push_back(1.0);
      for (double t : next.nodes) next.values.push_back(eval(mix, t));
      if (kind_ == ConeKind::Density) next.values.back() = 0.0;
      next.pinned.assign(next.nodes.size(), 0);
      cur = std::move(next);
      trial = std::move(keep);
    }
    if (stalled) return false;
    ++iterations;
    if (trace) trace->push_back(objective(it));
  }
  return false;
}

Iterate ConeProblem::merge_clusters(const Iterate& it) const {
  const auto knots = knots_of(it);
  const auto theta = slope_changes(it);
  if (knots.size() < 2) return it;
  std::vector<double> merged;
  std::vector<char> pin;
  std::size_t i = 0;
  bool changed = false;
  while (i < knots.size()) {
    const bool at_atom = on_atom(knots[i]);
    std::size_t j = i + 1;
    if (!at_atom) {
      const std::size_t gi = gap_index(knots[i]);
      while (j < knots.size() && !on_atom(knots[j]) && gap_index(knots[j]) == gi) ++j;
    } else {
      while (j < knots.size() && knots[j] == knots[i]) ++j;
    }
    if (j - i == 1) {
      merged.push_back(knots[i]);
    } else {
      changed = true;
      double sw = 0.0, swx = 0.0;
      for (std::size_t k = i; k < j; ++k) {
        double t = std::max(theta[k], 0.0);
        sw += t;
        swx += t * knots[k];
      }
      merged.push_back(sw > 0.0 ? swx / sw : knots[i]);
    }
    pin.push_back(at_atom && it.pinned[i + 1]);
    i = j;
  }
  if (!changed) return it;
  Iterate out = fit_knots(merged);
  auto th = slope_changes(out);
  if (!th.empty() && *std::min_element(th.begin(), th.end()) < 0.0) return it;
  for (std::size_t k = 0; k < pin.size() && k + 1 < out.pinned.size(); ++k) out.pinned[k + 1] = pin[k];
  return out;
}

void ConeProblem::polish(Iterate& it, std::size_t& iterations, std::size_t max_iter) const {
  const bool dens = kind_ == ConeKind::Density;
  const std::size_t n = x_.size();

  struct Assembly {
    double phi;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
  };

  for (int round = 0; round < 4; ++round) {
    const std::size_t K = it.size();
    if (dens && K == 1) return;
    if (it.pinned.size() != K) it.pinned.assign(K, 0);
    if (!dens && round == 0) {
      for (std::size_t j = 1; j + 1 < K; ++j) {
        auto p = std::lower_bound(x_.begin(), x_.end(), it.nodes[j]);
        if (p != x_.end() && *p == it.nodes[j] && w_[static_cast<std::size_t>(p - x_.begin())] < 0.0) it.pinned[j] = 1;
      }
    }
    std::vector<int> val_var(K, -1), pos_var(K, -1);
    int nv = 0;
    for (std::size_t j = 0; j < K; ++j)
      if (!(dens && j + 1 == K)) val_var[j] = nv++;
    for (std::size_t j = 1; j < K; ++j) {
      if (!dens && j + 1 == K) continue;
      if (it.pinned[j]) continue;
      pos_var[j] = nv++;
    }

    auto assemble = [&](const std::vector<double>& nodes, const std::vector<double>& vals, bool with_derivs) {
      Assembly as{0.0, Eigen::VectorXd::Zero(nv), Eigen::MatrixXd::Zero(nv, nv)};
      std::size_t ai = 0;
      for (std::size_t j = 0; j + 1 < K; ++j) {
        const double A = nodes[j], B = nodes[j + 1];
        double W = 0.0, P = 0.0, Q = 0.0;
        for (; ai < n && x_[ai] < B; ++ai) {
          if (x_[ai] < A) continue;
          W += w_[ai];
          P += w_[ai] * (B - x_[ai]);
          Q += w_[ai] * (x_[ai] - A);
        }
        auto t = segment_terms(vals[j], vals[j + 1], A, B, W, P, Q);
        as.phi += t.value;
        if (!with_derivs) continue;
        const int idx[4] = {val_var[j], val_var[j + 1], pos_var[j], pos_var[j + 1]};
        for (int r = 0; r < 4; ++r) {
          if (idx[r] < 0) continue;
          as.grad[idx[r]] += t.grad[r];
          for (int c = 0; c < 4; ++c)
            if (idx[c] >= 0) as.hess(idx[r], idx[c]) += t.hess[r][c];
        }
      }
      return as;
    };

    std::map<std::size_t, int> landings;  // atom index -> times a knot was stopped on it
    bool repinned = false;
    double prev_dec = kInf;
    bool last_full = false;
    int stalls = 0;
    for (int step = 0; step < 80 && iterations < max_iter; ++step) {
      Assembly as = assemble(it.nodes, it.values, true);
      Eigen::VectorXd delta;
      double mu = 0.0;
      const double dscale = std::max(1e-300, as.hess.diagonal().cwiseAbs().maxCoeff());
      bool ok = false;
      for (int tries = 0; tries < 30; ++tries) {
        Eigen::MatrixXd Hm = as.hess;
        Hm.diagonal().array() += mu;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Hm);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all()) {
          delta = ldlt.solve(-as.grad);
          if (delta.allFinite() && delta.dot(as.grad) < 0.0) {
            ok = true;
            break;
          }
        }
        mu = mu == 0.0 ? 1e-12 * dscale : mu * 10.0;
      }
      if (!ok) break;
      const double dec = -delta.dot(as.grad);
      if (dec <= 1e-30 * std::max(1.0, std::abs(as.phi))) break;
      // Quadratic convergence has stalled at the round-off floor.
      if (dec <= 1e-12 * std::max(1.0, std::abs(as.phi)) && dec >= 0.25 * prev_dec && last_full) {
        if (++stalls >= 3) break;
      } else {
        stalls = 0;
      }
      prev_dec = dec;

      // Step limits: keep node order and stop knots at the next atom.
      double amax = 1.0;
      std::vector<std::pair<std::size_t, std::size_t>> atom_hits;  // (node, atom)
      double a_atom = kInf;
      for (std::size_t j = 0; j + 1 < K; ++j) {
        double dj = pos_var[j] >= 0 ? delta[pos_var[j]] : 0.0;
        double dk = pos_var[j + 1] >= 0 ? delta[pos_var[j + 1]] : 0.0;
        double gap = it.nodes[j + 1] - it.nodes[j];
        if (dj - dk > 0.0) amax = std::min(amax, 0.75 * gap / (dj - dk));
      }
      for (std::size_t j = 1; j < K; ++j) {
        if (pos_var[j] < 0) continue;
        double dj = delta[pos_var[j]];
        double t = it.nodes[j];
        std::size_t ia = 0;
        double lim = kInf;
        if (dj > 0.0) {
          auto p = std::upper_bound(x_.begin(), x_.end(), t);
          if (p != x_.end()) {
            ia = static_cast<std::size_t>(p - x_.begin());
            lim = (*p - t) / dj;
          }
        } else if (dj < 0.0) {
          auto p = std::lower_bound(x_.begin(), x_.end(), t);
          if (p != x_.begin()) {
            --p;
            ia = static_cast<std::size_t>(p - x_.begin());
            lim = (*p - t) / dj;
          }
        }
        if (lim < a_atom) {
          a_atom = lim;
          atom_hits.assign(1, {j, ia});
        } else if (lim == a_atom && lim < kInf) {
          atom_hits.push_back({j, ia});
        }
      }
      double alpha = std::min(amax, a_atom);
      bool snap = a_atom <= amax;

      bool accepted = false;
      for (int ls = 0; ls < 50; ++ls) {
        std::vector<double> nn = it.nodes, vv = it.values;
        for (std::size_t j = 0; j < K; ++j) {
          if (val_var[j] >= 0) vv[j] += alpha * delta[val_var[j]];
          if (pos_var[j] >= 0) nn[j] += alpha * delta[pos_var[j]];
        }
        if (snap)
          for (auto [j, ia] : atom_hits) nn[j] = x_[ia];
        bool ordered = nn[0] == 0.0;
        for (std::size_t j = 0; j + 1 < K; ++j) ordered = ordered && nn[j + 1] > nn[j];
        if (ordered) {
          double phi = assemble(nn, vv, false).phi;
          // Below the round-off floor of Phi only the gradient still carries
          // information; accept steps that reduce it.
          const bool flat = dec <= 1e-13 * std::max(1.0, std::abs(as.phi));
          if (phi <= as.phi - 1e-4 * alpha * dec + 4e-16 * std::abs(as.phi) ||
              (flat && phi <= as.phi + 4e-16 * std::abs(as.phi) &&
               assemble(nn, vv, true).grad.norm() < as.grad.norm())) {
            it.nodes = std::move(nn);
            it.values = std::move(vv);
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
        snap = false;
      }
      ++iterations;
      if (!accepted) break;
      last_full = alpha == 1.0 && mu == 0.0;
      if (snap && !dens) {
        for (auto [j, ia] : atom_hits)
          if (w_[ia] < 0.0 && ++landings[ia] >= 2) {
            it.pinned[j] = 1;
            repinned = true;
          }
        if (repinned) break;  // the variable layout changes; start a new round
      }
    }

    // Drop knots whose slope change vanished, unpin knots that want to move.
    // The drop threshold is local: a steep spike elsewhere must not remove a
    // genuine small kink.
    auto theta = slope_changes(it);
    auto knots = knots_of(it);
    std::vector<double> local(knots.size());
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const std::size_t j = k + 1;
      double s = std::abs(theta[k]);
      s = std::max(s, std::abs((it.values[j] - it.values[j - 1]) / (it.nodes[j] - it.nodes[j - 1])));
      if (j + 1 < it.size()) s = std::max(s, std::abs((it.values[j + 1] - it.values[j]) / (it.nodes[j + 1] - it.nodes[j])));
      local[k] = std::max(1.0, s);
    }
    std::vector<double> keep;
    std::vector<char> pin;
    bool changed = false;
    for (std::size_t k = 0; k < knots.size(); ++k) {
      if (theta[k] <= 1e-13 * local[k] && knots.size() > 1) {
        changed = true;
        continue;
      }
      keep.push_back(knots[k]);
      pin.push_back(it.pinned[k + 1]);
    }
    if (!dens) {
      GapScan S = scan(it);
      for (std::size_t k = 0, kk = 0; k < knots.size(); ++k) {
        if (theta[k] <= 1e-13 * local[k] && knots.size() > 1) continue;
        if (pin[kk] && (S.dl_node[k + 1] > 1e-13 || S.dr_node[k + 1] < -1e-13)) {
          pin[kk] = 0;
          changed = true;
        }
        ++kk;
      }
    }
    if (changed) {
      Iterate next = fit_knots(keep);
      for (std::size_t k = 0; k < pin.size(); ++k) next.pinned[k + 1] = pin[k];
      it = std::move(next);
    }
    if (!changed && !repinned) return;
  }
}

void ConeProblem::refine_positions(Iterate& it) const {
  if (kind_ != ConeKind::Density || it.size() < 2) return;
  for (int sweep = 0; sweep < 3; ++sweep) {
    bool moved = false;
    // The end of the support is a free position as well.
    for (std::size_t j = 1; j < it.size(); ++j) {
      GapScan S = scan(it);
      const double t0 = it.nodes[j];
      if (on_atom(t0) || std::abs(S.dl_node[j]) <= 1e-15) continue;
      // Bracket: the open interval between the neighbouring atoms and nodes.
      auto q = std::lower_bound(x_.begin(), x_.end(), t0);
      double lo = std::max(it.nodes[j - 1], q == x_.begin() ? 0.0 : *(q - 1));
      auto p = std::upper_bound(x_.begin(), x_.end(), t0);
      double hi = j + 1 < it.size() ? it.nodes[j + 1] : 2.0 * t0 - lo;
      if (p != x_.end()) hi = std::min(hi, *p);
      auto knots = knots_of(it);
      auto trial = [&](double t, Iterate& out) {
        auto k2 = knots;
        k2[j - 1] = t;
        out = fit_knots(k2);
        return scan(out).dl_node[j];
      };
      Iterate best = it, cur;
      double fb = S.dl_node[j], tb = t0;
      double ta = t0, fa = fb;
      double tc = t0 - fb / std::max(it.values[j] > 0.0 ? it.values[j] : it.values[j - 1], 1e-300);
      for (int k = 0; k < 40; ++k) {
        tc = std::clamp(tc, lo + 0.5 * (ta - lo) * 1e-3, hi - 0.5 * (hi - ta) * 1e-3);
        if (!(tc > lo && tc < hi) || tc == ta) break;
        const double fc = trial(tc, cur);
        auto th = slope_changes(cur);
        if (!th.empty() && *std::min_element(th.begin(), th.end()) < 0.0) break;
        if (std::abs(fc) < std::abs(fb)) {
          best = cur;
          fb = fc;
          tb = tc;
        }
        if (std::abs(fc) <= 1e-16 || fc == fa) break;
        const double tn = tc - fc * (tc - ta) / (fc - fa);
        ta = tc;
        fa = fc;
        tc = tn;
      }
      if (tb != t0) {
        it = std::move(best);
        moved = true;
      }
    }
    if (!moved) return;
  }
}

bool ConeProblem::verify(const Iterate& it, double tol) const {
  const bool dens = kind_ == ConeKind::Density;
  const std::size_t K = it.size();
  if (dens && K == 1) return false;
  auto theta = slope_changes(it);
  for (double t : theta)
    if (t < -1e-11) return false;
  GapScan S = scan(it);
  if (S.min_value < -tol) return false;
  const std::size_t first = 1, last = dens ? K - 1 : K - 2;
  for (std::size_t j = first; j <= last && j < K; ++j) {
    if (std::abs(S.d_node[j]) > tol) return false;
    if (on_atom(it.nodes[j])) {
      if (S.dl_node[j] > tol || S.dr_node[j] < -tol) return false;
    } else if (std::abs(S.dl_node[j]) > tol) {
      return false;
    }
  }
  if (dens) {
    double mass = S.G_node[K - 1];
    double total = 0.0;
    for (double w : w_) total += w;
    if (std::abs(mass - total) > tol) return false;
  } else {
    if (std::abs(S.d_node[K - 1]) > tol || std::abs(S.dl_node[K - 1]) > tol) return false;
  }
  return true;
}

SolveResult ConeProblem::solve(const std::vector<double>& initial_knots, double tol, std::size_t max_iter,
                               bool record_trace) const {
  SolveResult res;
  std::vector<double>* trace = record_trace ? &res.objective_trace : nullptr;
  Iterate it = empty_iterate();
  if (!initial_knots.empty()) {
    Iterate cand = fit_knots(initial_knots);
    auto th = slope_changes(cand);
    bool feasible = !th.empty() && *std::min_element(th.begin(), th.end()) >= 0.0;
    if (feasible && (!(kind_ == ConeKind::Density) || cand.nodes.back() >= x_.back())) it = std::move(cand);
  }
  if (trace) trace->push_back(objective(it));

  std::size_t iterations = 0;
  double eps = 1e-2 * tol;
  Iterate best = it;
  double best_phi = objective(it);
  for (int round = 0; round < 6; ++round) {
    support_reduction(it, eps, iterations, max_iter, trace);
    Iterate cand = merge_clusters(it);
    polish(cand, iterations, max_iter);
    const double phi_c = objective(cand);
    auto th = slope_changes(cand);
    const bool feasible = th.empty() || *std::min_element(th.begin(), th.end()) >= -1e-11;
    if (verify(cand, 0.1 * tol)) {
      if (trace) trace->push_back(phi_c);
      res.iterate = std::move(cand);
      res.objective = phi_c;
      res.iterations = iterations;
      res.converged = true;
      return res;
    }
    if (feasible) {
      Iterate ref = cand;
      refine_positions(ref);
      if (verify(ref, 0.1 * tol)) {
        if (trace) trace->push_back(objective(ref));
        res.objective = objective(ref);
        res.iterate = std::move(ref);
        res.iterations = iterations;
        res.converged = true;
        return res;
      }
    }
    // A knot whose slope change is tiny has a position gradient below the
    // round-off of the assembly; try the fit without such knots.
    if (feasible && !th.empty()) {
      const double tmax = *std::max_element(th.begin(), th.end());
      auto knots = knots_of(cand);
      std::vector<double> strong;
      for (std::size_t k = 0; k < knots.size(); ++k)
        if (th[k] > 1e-5 * tmax || (kind_ == ConeKind::Density && k + 1 == knots.size())) strong.push_back(knots[k]);
      if (strong.size() < knots.size()) {
        Iterate alt = fit_knots(strong);
        auto ta = slope_changes(alt);
        if (ta.empty() || *std::min_element(ta.begin(), ta.end()) >= 0.0) {
          polish(alt, iterations, max_iter);
          if (verify(alt, 0.1 * tol)) {
            if (trace) trace->push_back(objective(alt));
            res.objective = objective(alt);
            res.iterate = std::move(alt);
            res.iterations = iterations;
            res.converged = true;
            return res;
          }
        }
      }
    }
    if (feasible) it = cand;
    if (objective(it) <= best_phi) {
      best = it;
      best_phi = objective(it);
    }
    if (iterations >= max_iter) break;
    eps *= 1e-2;
  }
  res.iterate = std::move(best);
  res.objective = best_phi;
  res.iterations = iterations;
  res.converged = false;
  return res;
}

}  // namespace cvxlse::detail
