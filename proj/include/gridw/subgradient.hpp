#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "gridw/flow.hpp"
#include "gridw/jacobian.hpp"
#include "gridw/network.hpp"

namespace gridw {

enum class Direction { plus, minus };

/// Effective line capacity for the multiplicative problem: the bound that the
/// scaled flow runs into first, given the current flow signs. Ratios f_i/c_i
/// are nonnegative either way.
inline Vec effective_capacity(const Network& net, const Vec& f, Direction dir) {
  int m = net.num_links();
  Vec c(m);
  for (int i = 0; i < m; ++i) {
    if (dir == Direction::plus)
      c(i) = f(i) >= 0 ? net.cu()(i) : net.cl()(i);
    else
      c(i) = f(i) >= 0 ? -net.cl()(i) : -net.cu()(i);
  }
  return c;
}

/// max_i f_i(w) / c_i at the nominal injection; the feasible magnitude along
/// the chosen direction is the reciprocal.
inline double objective(const Network& net, const Vec& w, Direction dir) {
  Vec f = solve_flow(net.with_weights(w)).f;
  Vec c = effective_capacity(net, f, dir);
  double m = 0.0;
  for (int i = 0; i < net.num_links(); ++i) m = std::max(m, f(i) / c(i));
  return m;
}

struct SubgradConfig {
  double eta0 = 0.2;
  bool sqrt_decay = false;  // eta_t = eta0 / sqrt(1 + t/50) when set
  int iters = 2000;
  int restarts = 8;  // random starts; the upper corner wu always runs as well
  double active_tol_rel = 1e-6;
  double stagnation_tol = 1e-12;
  std::uint64_t seed = 1;
};

struct DirectionResult {
  double alpha = 0.0;  // best feasible magnitude found
  Vec w_star;
  std::vector<double> trace;          // best-so-far objective of the winning run
  std::vector<double> restart_alpha;  // per random restart
  double wu_alpha = 0.0;              // run started from the upper corner
  bool certified = false;
  bool warning = false;  // non-certified or non-finite objective encountered
};

struct MultiplicativeResult {
  DirectionResult plus;
  DirectionResult minus;
  double alpha_plus = 0.0;
  double alpha_minus = 0.0;
  double nu_m = 0.0;
};

namespace detail {

inline Vec project_simplex(Vec v) {
  int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0, rho_val = 0;
  int rho = -1;
  for (int k = 0; k < n; ++k) {
    css += u[k];
    double t = (css - 1.0) / (k + 1);
    if (u[k] - t > 0) {
      rho = k;
      rho_val = t;
    }
  }
  (void)rho;
  for (int i = 0; i < n; ++i) v(i) = std::max(v(i) - rho_val, 0.0);
  return v;
}

/// Regularized step: argmin over the box of
///   max_i g_i . d  +  |d|^2 / (2 eta)
/// solved through its concave dual over the simplex; the inner minimizer is a
/// box-clamped gradient step.
inline Vec regularized_step(const std::vector<Vec>& grads, const Vec& lo, const Vec& hi,
                            double eta) {
  int k = static_cast<int>(grads.size());
  auto clamp_step = [&](const Vec& g) {
    Vec d = (-eta * g).cwiseMax(lo).cwiseMin(hi);
    return d;
  };
  if (k == 1) return clamp_step(grads[0]);

  Vec lambda = Vec::Constant(k, 1.0 / k);
  Vec best_lambda = lambda;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < 120; ++it) {
    Vec g = Vec::Zero(lo.size());
    for (int j = 0; j < k; ++j) g += lambda(j) * grads[j];
    Vec d = clamp_step(g);
    double val = g.dot(d) + d.squaredNorm() / (2 * eta);
    if (val > best_val) {
      best_val = val;
      best_lambda = lambda;
    }
    Vec super(k);
    for (int j = 0; j < k; ++j) super(j) = grads[j].dot(d);
    double scale = std::max(1e-12, super.cwiseAbs().maxCoeff());
    lambda = project_simplex(lambda + (0.5 / ((it + 1) * scale)) * super);
  }
  Vec g = Vec::Zero(lo.size());
  for (int j = 0; j < k; ++j) g += best_lambda(j) * grads[j];
  return clamp_step(g);
}

}  // namespace detail

/// Projected sub-gradient descent on max_i f_i(w)/c_i over the weight box,
/// run from several starts; returns the best certified iterate per direction
/// and the assembled multiplicative margin.
inline MultiplicativeResult solve_multiplicative(const Network& net,
                                                 const SubgradConfig& cfg = {}) {
  MultiplicativeResult res;
  double pnorm = net.p().lpNorm<1>();

  for (Direction dir : {Direction::plus, Direction::minus}) {
    DirectionResult& dr = dir == Direction::plus ? res.plus : res.minus;
    std::mt19937_64 rng(cfg.seed + (dir == Direction::plus ? 0 : 0x9e3779b9));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    int m = net.num_links();
    std::vector<Vec> starts;
    for (int r = 0; r < cfg.restarts; ++r) {
      Vec w0(m);
      for (int i = 0; i < m; ++i)
        w0(i) = net.wl()(i) + (net.wu()(i) - net.wl()(i)) * u01(rng);
      starts.push_back(w0);
    }
    starts.push_back(net.wu());

    double global_best = std::numeric_limits<double>::infinity();
    Vec global_w = net.wu();
    std::vector<double> global_trace;

    for (size_t run = 0; run < starts.size(); ++run) {
      Vec w = starts[run];
      double best_obj = std::numeric_limits<double>::infinity();
      Vec best_w = w;
      std::vector<double> trace;
      for (int t = 0; t < cfg.iters; ++t) {
        Network cur = net.with_weights(w);
        Vec f = solve_flow(cur).f;
        Vec c = effective_capacity(net, f, dir);
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) mx = std::max(mx, f(i) / c(i));
        if (!std::isfinite(mx)) {
          dr.warning = true;
          break;
        }
        if (mx < best_obj) {
          best_obj = mx;
          best_w = w;
        }
        trace.push_back(best_obj);

        double tol = cfg.active_tol_rel * std::max(std::abs(mx), 1e-12);
        Mat l = laplacian(cur);
        detail::GroundedSolver solver(l);
        Vec phi = solver.apply(net.p());
        std::vector<Vec> grads;
        for (int i = 0; i < m; ++i)
          if (f(i) / c(i) >= mx - tol)
            grads.push_back(jacobian_row(cur, solver, phi, i) / c(i));

        double eta = cfg.sqrt_decay ? cfg.eta0 / std::sqrt(1.0 + t / 50.0) : cfg.eta0;
        Vec d = detail::regularized_step(grads, net.wl() - w, net.wu() - w, eta);
        if (d.cwiseAbs().maxCoeff() <
            cfg.stagnation_tol * std::max(1.0, w.cwiseAbs().maxCoeff()))
          break;
        w += d;
      }
      double alpha = best_obj > 0 ? 1.0 / best_obj : std::numeric_limits<double>::infinity();
      if (run < static_cast<size_t>(cfg.restarts))
        dr.restart_alpha.push_back(alpha);
      else
        dr.wu_alpha = alpha;
      if (best_obj < global_best) {
        global_best = best_obj;
        global_w = best_w;
        global_trace = trace;
      }
    }

    dr.alpha = global_best > 0 ? 1.0 / global_best : std::numeric_limits<double>::infinity();
    dr.w_star = global_w;
    dr.trace = std::move(global_trace);

    // feasibility certificate: rescale the nominal flow at the returned point
    Vec f = solve_flow(net.with_weights(global_w)).f;
    double sgn = dir == Direction::plus ? 1.0 : -1.0;
    Vec scaled = sgn * dr.alpha * f;
    double ctol = 1e-6 * std::max(1.0, net.cu().maxCoeff());
    dr.certified = true;
    for (int i = 0; i < m; ++i)
      if (scaled(i) > net.cu()(i) + ctol || scaled(i) < net.cl()(i) - ctol)
        dr.certified = false;
    if (!dr.certified) dr.warning = true;
  }

  res.alpha_plus = res.plus.alpha;
  res.alpha_minus = res.minus.alpha;
  res.nu_m = pnorm * std::min(res.alpha_plus - 1.0, res.alpha_minus + 1.0);
  return res;
}

/// Uniform random search over the weight box for the multiplicative margin,
/// stopping at the target value or the sample/time budget.
struct RandomSearchResult {
  double alpha = 0.0;
  Vec w_star;
  long long samples = 0;
};

/// Lexicographic grid sweep over the weight box at a fixed per-dimension
/// resolution, bounded by a wall-clock budget; `complete` reports whether the
/// whole grid was visited.
struct ExhaustiveSearchResult {
  double alpha = 0.0;
  Vec w_star;
  long long samples = 0;
  bool complete = false;
};

inline ExhaustiveSearchResult exhaustive_search_alpha(const Network& net, Direction dir,
                                                      double resolution,
                                                      double time_budget_s) {
  int m = net.num_links();
  std::vector<long long> counts(m);
  for (int i = 0; i < m; ++i) {
    double range = net.wu()(i) - net.wl()(i);
    counts[i] = std::max<long long>(1, static_cast<long long>(std::floor(range / resolution)) + 1);
  }
  ExhaustiveSearchResult best;
  best.w_star = net.wu();
  best.alpha = 1.0 / objective(net, net.wu(), dir);

  auto started = std::chrono::steady_clock::now();
  std::vector<long long> idx(m, 0);
  Vec w(m);
  for (;;) {
    for (int i = 0; i < m; ++i)
      w(i) = counts[i] == 1 ? net.wl()(i)
                            : std::min(net.wu()(i), net.wl()(i) + resolution * idx[i]);
    double alpha = 1.0 / objective(net, w, dir);
    ++best.samples;
    if (alpha > best.alpha) {
      best.alpha = alpha;
      best.w_star = w;
    }
    if (time_budget_s > 0 && (best.samples & 0xff) == 0) {
      double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (elapsed > time_budget_s) return best;
    }
    int d = 0;
    while (d < m && ++idx[d] >= counts[d]) idx[d++] = 0;
    if (d == m) break;
  }
  best.complete = true;
  return best;
}

inline RandomSearchResult random_search_alpha(const Network& net, Direction dir,
                                              long long max_samples, double time_budget_s,
                                              double stop_at_alpha,
                                              std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int m = net.num_links();
  RandomSearchResult best;
  best.w_star = net.wu();
  best.alpha = 1.0 / objective(net, net.wu(), dir);

  auto started = std::chrono::steady_clock::now();
  Vec w(m);
  for (long long it = 0; it < max_samples; ++it) {
    for (int i = 0; i < m; ++i)
      w(i) = net.wl()(i) + (net.wu()(i) - net.wl()(i)) * u01(rng);
    double alpha = 1.0 / objective(net, w, dir);
    ++best.samples;
    if (alpha > best.alpha) {
      best.alpha = alpha;
      best.w_star = w;
    }
    if (stop_at_alpha > 0 && best.alpha >= stop_at_alpha) break;
    if (time_budget_s > 0 && (it & 0xff) == 0) {
      double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (elapsed > time_budget_s) break;
    }
  }
  return best;
}

}  // namespace gridw
