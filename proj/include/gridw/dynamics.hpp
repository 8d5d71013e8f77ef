#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gridw/flow.hpp"
#include "gridw/network.hpp"

namespace gridw {

/// Closed-form solution of the parallel-network weight control problem with
/// constant capacities.
struct ParallelClosedForm {
  double alpha_star = 0.0;
  Vec w_opt;
  double r_star = 0.0;  // max_i wl_i / c_i = 1 / g_max
  int regime_n2 = 0;    // 1: link-1 pinned low, 2: all saturated, 3: link-2 pinned low
};

inline ParallelClosedForm parallel_alpha_star(const Vec& wl, const Vec& wu, const Vec& c) {
  int n = static_cast<int>(c.size());
  if (n < 1 || wl.size() != n || wu.size() != n)
    throw ValidationError("parallel_alpha_star: size mismatch");
  for (int i = 0; i < n; ++i)
    if (wl(i) < 0 || wl(i) > wu(i) || !(c(i) > 0))
      throw ValidationError("parallel_alpha_star: need 0 <= wl <= wu, c > 0");

  ParallelClosedForm out;
  out.r_star = (wl.array() / c.array()).maxCoeff();
  out.w_opt = Vec(n);
  out.alpha_star = 0.0;
  for (int i = 0; i < n; ++i) {
    out.w_opt(i) = std::min(c(i) * out.r_star, wu(i));
    out.alpha_star += wu(i) < c(i) * out.r_star ? wu(i) / out.r_star : c(i);
  }
  if (n == 2) {
    double ratio = c(0) / c(1);
    if (ratio < wl(0) / wu(1))
      out.regime_n2 = 1;
    else if (ratio <= wu(0) / wl(1))
      out.regime_n2 = 2;
    else
      out.regime_n2 = 3;
  }
  return out;
}

/// Equilibrium classification of the weight-decrease controller on a parallel
/// network (quantities follow the sorted congestion order r_i = w0_i / c_i).
struct U1Prediction {
  enum class Regime { unchanged, partial, infeasible };
  Regime regime = Regime::unchanged;
  Vec w_star;          // meaningful for unchanged/partial
  Vec v;               // V_1..V_n in sorted order
  double v_star = 0.0;
  double r_star = 0.0;
  int k_bar = 0;  // 1-indexed in sorted order
  int k_hat = 0;
  double r_hat = 0.0;
};

inline U1Prediction u1_equilibrium_predict(const Vec& w0, const Vec& wl, const Vec& c,
                                           double alpha) {
  int n = static_cast<int>(w0.size());
  U1Prediction out;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return w0(a) / c(a) < w0(b) / c(b); });

  Vec r(n), w0s(n), cs(n);
  for (int k = 0; k < n; ++k) {
    w0s(k) = w0(order[k]);
    cs(k) = c(order[k]);
    r(k) = w0s(k) / cs(k);
  }
  out.v = Vec(n);
  for (int k = 0; k < n; ++k) {
    double head = 0, tail = 0;
    for (int i = 0; i < k; ++i) head += w0s(i);
    for (int i = k; i < n; ++i) tail += cs(i);
    out.v(k) = head / r(k) + tail;
  }
  out.r_star = (wl.array() / c.array()).maxCoeff();
  out.k_bar = 0;
  while (out.k_bar < n && r(out.k_bar) < out.r_star) ++out.k_bar;
  // r_n >= r_star always holds since w0 >= wl
  {
    double head = 0, tail = 0;
    for (int i = 0; i < out.k_bar; ++i) head += w0s(i);
    for (int i = out.k_bar; i < n; ++i) tail += cs(i);
    out.v_star = tail + (head > 0 ? head / out.r_star : 0.0);
  }
  ++out.k_bar;  // 1-indexed

  if (alpha <= out.v(n - 1)) {
    out.regime = U1Prediction::Regime::unchanged;
    out.w_star = w0;
    return out;
  }
  if (alpha > out.v_star) {
    out.regime = U1Prediction::Regime::infeasible;
    out.w_star = w0;
    return out;
  }

  out.regime = U1Prediction::Regime::partial;
  int khat = 0;
  while (khat < n && alpha < out.v(khat)) ++khat;
  out.k_hat = khat + 1;  // 1-indexed: first sorted index with alpha >= V_k
  double head = 0, tail = 0;
  for (int i = 0; i < khat; ++i) head += w0s(i);
  for (int i = khat; i < n; ++i) tail += cs(i);
  out.r_hat = alpha < out.v(0) ? head / (alpha - tail) : r(0);
  Vec ws(n);
  for (int k = 0; k < n; ++k) ws(k) = k < khat ? w0s(k) : out.r_hat * cs(k);
  out.w_star = Vec(n);
  for (int k = 0; k < n; ++k) out.w_star(order[k]) = ws(k);
  return out;
}

/// True when the initial weights dominate the minimal optimizer, which is
/// exactly when the weight-decrease controller attains the centralized margin.
inline bool u1_maximal_robustness_check(const Vec& w0, const Vec& wl, const Vec& wu,
                                        const Vec& c) {
  ParallelClosedForm pcf = parallel_alpha_star(wl, wu, c);
  for (int i = 0; i < w0.size(); ++i)
    if (w0(i) < pcf.w_opt(i) - 1e-12 * std::max(1.0, pcf.w_opt(i))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// controller simulation
// ---------------------------------------------------------------------------

struct ControllerSpec {
  enum class Kind { u1, u2 };
  Kind kind = Kind::u1;
  Vec rates;          // per-link decrease/increase rate, > 0
  double dt = 1e-3;
  double horizon = 10.0;
  double feas_tol = 1e-9;  // relative capacity trigger tolerance
  int max_samples = 2000;  // stored trajectory resolution
};

struct SimEvent {
  double t = 0;
  std::string link;
  std::string what;  // "hit_wl" / "hit_wu" / "overload" / "cleared"
};

struct SimTrace {
  std::vector<double> times;
  std::vector<Vec> w;
  std::vector<Vec> f;
  Vec w_final, f_final;
  bool feasible = false;
  double t_final = 0;
  std::vector<SimEvent> events;
};

/// Forward-Euler integration of the decentralized weight dynamics under a
/// post-disturbance injection p_dist. Rates clamp at the weight box; the
/// altruistic controller's flow-increase memory is a one-step backward
/// difference seeded by the disturbance jump.
inline SimTrace simulate(const Network& net, const ControllerSpec& spec, const Vec& p_dist) {
  int m = net.num_links();
  if (spec.rates.size() != m) throw ValidationError("simulate: rates size mismatch");
  if (!(spec.dt > 0) || !(spec.horizon > 0))
    throw ValidationError("simulate: dt and horizon must be positive");

  Network disturbed = net.with_supply_demand(p_dist);
  double deadband = 1e-9 * std::max(1.0, p_dist.lpNorm<1>());

  SimTrace trace;
  Vec w = net.w();
  Vec prev_f = solve_flow(net).f;  // pre-disturbance flows seed the memory
  long long steps = static_cast<long long>(std::ceil(spec.horizon / spec.dt));
  long long stride = std::max<long long>(1, steps / std::max(1, spec.max_samples));

  std::vector<bool> overloaded(m, false);
  auto record = [&](double t, const Vec& wv, const Vec& fv) {
    trace.times.push_back(t);
    trace.w.push_back(wv);
    trace.f.push_back(fv);
  };

  double t = 0;
  bool disconnected = false;
  for (long long step = 0; step <= steps; ++step) {
    t = step * spec.dt;
    Vec f;
    try {
      f = solve_flow(disturbed.with_weights(w)).f;
    } catch (const SolverError&) {
      disconnected = true;  // weights dropped to zero across a cut
      break;
    }
    if (step % stride == 0) record(t, w, f);

    Vec u = Vec::Zero(m);
    bool any = false;
    for (int i = 0; i < m; ++i) {
      double cu = net.cu()(i), cl = net.cl()(i);
      bool over = f(i) > cu * (1 + spec.feas_tol) || f(i) < cl * (1 + spec.feas_tol);
      if (over != overloaded[i]) {
        trace.events.push_back({t, net.link(i).id, over ? "overload" : "cleared"});
        overloaded[i] = over;
      }
      if (over && w(i) > net.wl()(i)) {
        u(i) = -spec.rates(i);
        any = true;
      } else if (spec.kind == ControllerSpec::Kind::u2 && !over && f(i) < cu &&
                 f(i) > cl && f(i) - prev_f(i) > deadband && w(i) < net.wu()(i)) {
        u(i) = spec.rates(i);
        any = true;
      }
    }
    prev_f = f;
    if (!any) break;  // frozen weights keep the flows frozen

    for (int i = 0; i < m; ++i) {
      double nw = w(i) + spec.dt * u(i);
      if (nw <= net.wl()(i) && w(i) > net.wl()(i))
        trace.events.push_back({t, net.link(i).id, "hit_wl"});
      if (nw >= net.wu()(i) && w(i) < net.wu()(i))
        trace.events.push_back({t, net.link(i).id, "hit_wu"});
      w(i) = std::clamp(nw, net.wl()(i), net.wu()(i));
    }
  }

  trace.w_final = w;
  trace.t_final = t;
  if (disconnected) {
    trace.f_final = Vec::Zero(m);
    trace.feasible = false;
    return trace;
  }
  trace.f_final = solve_flow(disturbed.with_weights(w)).f;
  record(t, w, trace.f_final);
  trace.feasible = true;
  for (int i = 0; i < m; ++i) {
    if (trace.f_final(i) > net.cu()(i) * (1 + spec.feas_tol) + 1e-12 ||
        trace.f_final(i) < net.cl()(i) * (1 + spec.feas_tol) - 1e-12)
      trace.feasible = false;
  }
  return trace;
}

/// Convenience: parallel network with the [0, c] convention (both terminals
/// shared by every link; lower capacities are a wide mirror that never binds).
inline Network parallel_network(const Vec& w, const Vec& wl, const Vec& wu, const Vec& c,
                                double alpha) {
  int n = static_cast<int>(w.size());
  std::vector<std::string> ids{"s", "t"};
  std::vector<Link> links;
  for (int i = 0; i < n; ++i) links.push_back({"i" + std::to_string(i + 1), 0, 1});
  Vec cl = -c;
  Vec p(2);
  p << alpha, -alpha;
  return Network(ids, links, w, wl, wu, cl, c, p);
}

}  // namespace gridw
