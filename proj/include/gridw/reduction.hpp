#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gridw/flow.hpp"
#include "gridw/network.hpp"
#include "gridw/piecewise.hpp"

namespace gridw {

namespace detail {

inline std::vector<int> active_component(const Network& net, int seed_node) {
  std::vector<int> comp;
  std::vector<bool> seen(net.num_nodes(), false);
  std::deque<int> q{seed_node};
  seen[seed_node] = true;
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    comp.push_back(u);
    for (int i = 0; i < net.num_links(); ++i) {
      if (net.w()(i) <= 0.0) continue;
      const Link& l = net.link(i);
      int other = l.tail == u ? l.head : (l.head == u ? l.tail : -1);
      if (other >= 0 && !seen[other]) {
        seen[other] = true;
        q.push_back(other);
      }
    }
  }
  std::sort(comp.begin(), comp.end());
  return comp;
}

}  // namespace detail

/// Laplacian restricted to the active component containing seed_node.
inline Mat laplacian_component(const Network& net, int seed_node) {
  std::vector<int> comp = detail::active_component(net, seed_node);
  int n = static_cast<int>(comp.size());
  auto idx = [&](int v) {
    return static_cast<int>(std::lower_bound(comp.begin(), comp.end(), v) - comp.begin());
  };
  Mat l = Mat::Zero(n, n);
  for (int i = 0; i < net.num_links(); ++i) {
    double wi = net.w()(i);
    if (wi <= 0.0) continue;
    const Link& lk = net.link(i);
    if (!std::binary_search(comp.begin(), comp.end(), lk.tail)) continue;
    int u = idx(lk.tail), v = idx(lk.head);
    l(u, u) += wi;
    l(v, v) += wi;
    l(u, v) -= wi;
    l(v, u) -= wi;
  }
  return l;
}

/// Two-terminal effective susceptance 1/(a' pinv(L) a); zero when the active
/// subgraph does not connect the terminals.
inline double equivalent_weight(const Network& net, int v1, int v2) {
  if (v1 == v2) throw ValidationError("equivalent_weight: identical terminals");
  std::vector<int> comp = detail::active_component(net, v1);
  if (!std::binary_search(comp.begin(), comp.end(), v2)) return 0.0;
  auto idx = [&](int v) {
    return static_cast<int>(std::lower_bound(comp.begin(), comp.end(), v) - comp.begin());
  };
  Mat l = laplacian_component(net, v1);
  detail::GroundedSolver solver(l);
  Vec a = Vec::Zero(static_cast<int>(l.rows()));
  a(idx(v1)) = 1.0;
  a(idx(v2)) = -1.0;
  return 1.0 / a.dot(solver.apply(a));
}

// ---------------------------------------------------------------------------
// capacity composition
// ---------------------------------------------------------------------------

/// Directional capacity functions of a (possibly equivalent) link: `fwd` is
/// the largest flow pushable tail->head as a function of the link weight,
/// `bwd` the largest magnitude pushable head->tail.
struct CapacityPair {
  PiecewiseCapacity fwd;
  PiecewiseCapacity bwd;
};

namespace detail {

inline std::vector<double> rising_critical_values(const PiecewiseCapacity& c) {
  std::vector<double> vals{c.value_lo(), c.max_value()};
  for (const auto& s : c.segments()) {
    if (s.x_lo <= c.rise_end()) vals.push_back(c.eval(s.x_lo));
    if (s.x_hi <= c.rise_end()) vals.push_back(c.eval(s.x_hi));
  }
  return vals;
}

inline std::vector<double> falling_critical_values(const PiecewiseCapacity& c) {
  std::vector<double> vals{c.value_hi(), c.max_value()};
  for (const auto& s : c.segments()) {
    if (s.x_hi >= c.fall_begin()) vals.push_back(c.eval(s.x_hi));
    if (s.x_lo >= c.fall_begin()) vals.push_back(c.eval(s.x_lo));
  }
  return vals;
}

inline std::vector<double> value_grid(double lo, double hi, int n,
                                      const std::vector<double>& critical) {
  std::vector<double> xs;
  for (int k = 0; k <= n; ++k) xs.push_back(lo + (hi - lo) * k / n);
  for (double v : critical)
    if (v > lo && v < hi) xs.push_back(v);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

}  // namespace detail

inline constexpr int kComposeSamples = 400;

/// Equivalent capacity of a chain of links carrying identical flow: value
/// solved through the inverse maps of the input capacities, with the harmonic
/// equivalent weight as the ordinate.
inline PiecewiseCapacity compose_series(const std::vector<PiecewiseCapacity>& caps,
                                        int samples = kComposeSamples) {
  if (caps.empty()) throw ValidationError("compose_series: empty chain");
  if (caps.size() == 1) return caps[0];
  for (const auto& c : caps)
    if (!c.s1()) throw SolverError("series composition requires S1 inputs");

  double g_l = std::numeric_limits<double>::infinity();
  double g_u = std::numeric_limits<double>::infinity();
  double g_max = std::numeric_limits<double>::infinity();
  for (const auto& c : caps) {
    g_l = std::min(g_l, c.value_lo());
    g_u = std::min(g_u, c.value_hi());
    g_max = std::min(g_max, c.max_value());
  }
  auto harmonic = [&](auto&& pick) {
    double s = 0;
    for (const auto& c : caps) s += 1.0 / pick(c);
    return 1.0 / s;
  };
  auto omega_plus_weq = [&](double x) {
    return harmonic([&](const PiecewiseCapacity& c) {
      return x <= c.value_lo() ? c.lo() : c.inv_rising(std::min(x, c.max_value()));
    });
  };
  auto omega_minus_weq = [&](double x) {
    return harmonic([&](const PiecewiseCapacity& c) {
      return x <= c.value_hi() ? c.hi() : c.inv_falling(std::min(x, c.max_value()));
    });
  };

  double lo = harmonic([](const PiecewiseCapacity& c) { return c.lo(); });
  double hi = harmonic([](const PiecewiseCapacity& c) { return c.hi(); });

  std::vector<double> crit_r, crit_f;
  for (const auto& c : caps) {
    auto r = detail::rising_critical_values(c);
    crit_r.insert(crit_r.end(), r.begin(), r.end());
    auto f = detail::falling_critical_values(c);
    crit_f.insert(crit_f.end(), f.begin(), f.end());
  }

  std::vector<double> xs, ys;
  for (double x : detail::value_grid(g_l, g_max, samples, crit_r)) {
    xs.push_back(omega_plus_weq(x));
    ys.push_back(x);
  }
  double plat_lo = omega_plus_weq(g_max), plat_hi = omega_minus_weq(g_max);
  xs.push_back(plat_lo);
  ys.push_back(g_max);
  xs.push_back(plat_hi);
  ys.push_back(g_max);
  {
    auto grid = detail::value_grid(g_u, g_max, samples, crit_f);
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
      xs.push_back(omega_minus_weq(*it));
      ys.push_back(*it);
    }
  }
  xs.front() = lo;
  xs.back() = hi;

  std::vector<size_t> order(xs.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> sx, sy;
  for (size_t k : order) {
    sx.push_back(xs[k]);
    sy.push_back(ys[k]);
  }
  return PiecewiseCapacity::from_samples(sx, sy, /*s1=*/true);
}

/// Equivalent capacity of a parallel bundle: constant-capacity inputs go
/// through the exact closed form; otherwise the per-link secants c_i(w)/w are
/// inverted numerically and summed.
inline PiecewiseCapacity compose_parallel(const std::vector<PiecewiseCapacity>& caps,
                                          int samples = kComposeSamples) {
  if (caps.empty()) throw ValidationError("compose_parallel: empty bundle");
  if (caps.size() == 1) return caps[0];
  for (const auto& c : caps)
    if (!c.s1()) throw SolverError("parallel composition requires S1 inputs");

  bool all_const = std::all_of(caps.begin(), caps.end(),
                               [](const PiecewiseCapacity& c) { return c.is_constant(); });
  int n = static_cast<int>(caps.size());
  if (all_const) {
    Vec wl(n), wu(n), cv(n);
    for (int i = 0; i < n; ++i) {
      wl(i) = caps[i].lo();
      wu(i) = caps[i].hi();
      cv(i) = caps[i].max_value();
    }
    return eqcap_parallel_constant(wl, wu, cv);
  }
  for (const auto& c : caps)
    if (!(c.lo() > 0.0))
      throw SolverError("parallel composition requires strictly positive lower weights");

  struct Psi {
    const PiecewiseCapacity* c;
    double peak_w, peak_v, v_lo, v_hi;
    double operator()(double w) const { return c->eval(w) / w; }
  };
  std::vector<Psi> psis;
  for (const auto& c : caps) {
    Psi p{&c, 0, 0, 0, 0};
    p.v_lo = c.eval(c.lo()) / c.lo();
    p.v_hi = c.eval(c.hi()) / c.hi();
    // ternary search on the unimodal secant
    double a = c.lo(), b = c.hi();
    for (int it = 0; it < 200; ++it) {
      double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
      if (p.c->eval(m1) / m1 < p.c->eval(m2) / m2)
        a = m1;
      else
        b = m2;
    }
    p.peak_w = 0.5 * (a + b);
    p.peak_v = p(p.peak_w);
    // joints of the capacity function are candidate peaks as well
    for (const auto& s : c.segments())
      for (double cand : {s.x_lo, s.x_hi}) {
        double v = c.eval(cand) / cand;
        if (v > p.peak_v) {
          p.peak_v = v;
          p.peak_w = cand;
        }
      }
    psis.push_back(p);
  }

  double g_l = std::numeric_limits<double>::infinity();
  double g_u = std::numeric_limits<double>::infinity();
  double g_max = std::numeric_limits<double>::infinity();
  for (const Psi& p : psis) {
    g_l = std::min(g_l, p.v_lo);
    g_u = std::min(g_u, p.v_hi);
    g_max = std::min(g_max, p.peak_v);
  }

  auto omega_plus = [&](const Psi& p, double x) {
    if (x <= p.v_lo) return p.c->lo();
    double a = p.c->lo(), b = p.peak_w;
    for (int it = 0; it < 80; ++it) {
      double m = 0.5 * (a + b);
      if (p(m) >= x)
        b = m;
      else
        a = m;
    }
    return 0.5 * (a + b);
  };
  auto omega_minus = [&](const Psi& p, double x) {
    if (x <= p.v_hi) return p.c->hi();
    double a = p.peak_w, b = p.c->hi();
    for (int it = 0; it < 80; ++it) {
      double m = 0.5 * (a + b);
      if (p(m) >= x)
        a = m;
      else
        b = m;
    }
    return 0.5 * (a + b);
  };
  auto ghat_plus = [&](double x) {
    double s = 0;
    for (const Psi& p : psis) s += omega_plus(p, x);
    return s;
  };
  auto ghat_minus = [&](double x) {
    double s = 0;
    for (const Psi& p : psis) s += omega_minus(p, x);
    return s;
  };

  double lo = 0, hi = 0;
  for (const auto& c : caps) {
    lo += c.lo();
    hi += c.hi();
  }

  std::vector<double> crit_r, crit_f;
  for (const auto& c : caps)
    for (const auto& s : c.segments())
      for (double cand : {s.x_lo, s.x_hi}) {
        double v = c.eval(cand) / cand;
        crit_r.push_back(v);
        crit_f.push_back(v);
      }

  std::vector<double> xs, ys;
  for (double x : detail::value_grid(g_l, g_max, samples, crit_r)) {
    xs.push_back(ghat_plus(x));
    ys.push_back(x * xs.back());
  }
  double plat_lo = ghat_plus(g_max), plat_hi = ghat_minus(g_max);
  xs.push_back(plat_lo);
  ys.push_back(g_max * plat_lo);
  xs.push_back(plat_hi);
  ys.push_back(g_max * plat_hi);
  {
    auto grid = detail::value_grid(g_u, g_max, samples, crit_f);
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
      double weq = ghat_minus(*it);
      xs.push_back(weq);
      ys.push_back(*it * weq);
    }
  }
  xs.front() = lo;
  xs.back() = hi;

  std::vector<size_t> order(xs.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> sx, sy;
  for (size_t k : order) {
    sx.push_back(xs[k]);
    sy.push_back(ys[k]);
  }
  return PiecewiseCapacity::from_samples(sx, sy, /*s1=*/true);
}

/// Weight vector achieving the composed series capacity at a given equivalent
/// weight: the omega maps give the extreme feasible points on either side of
/// the plateau, and interior equivalent weights interpolate between them along
/// a monotone path.
inline Vec compose_series_witness(const std::vector<PiecewiseCapacity>& caps,
                                  const PiecewiseCapacity& composed, double weq) {
  int n = static_cast<int>(caps.size());
  double x = composed.eval(weq);
  Vec w_plus(n), w_minus(n);
  for (int i = 0; i < n; ++i) {
    const auto& c = caps[i];
    w_plus(i) = x <= c.value_lo() ? c.lo() : c.inv_rising(std::min(x, c.max_value()));
    w_minus(i) = x <= c.value_hi() ? c.hi() : c.inv_falling(std::min(x, c.max_value()));
  }
  auto harm = [&](const Vec& w) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += 1.0 / w(i);
    return 1.0 / s;
  };
  double tlo = 0, thi = 1;
  for (int it = 0; it < 80; ++it) {
    double t = 0.5 * (tlo + thi);
    (harm(Vec(w_plus + t * (w_minus - w_plus))) < weq ? tlo : thi) = t;
  }
  double t = 0.5 * (tlo + thi);
  return w_plus + t * (w_minus - w_plus);
}

/// Parallel counterpart: inverts the per-link secants c_i(w)/w around the
/// composed value and interpolates the weight sum to the target.
inline Vec compose_parallel_witness(const std::vector<PiecewiseCapacity>& caps,
                                    const PiecewiseCapacity& composed, double weq) {
  int n = static_cast<int>(caps.size());
  double x = composed.eval(weq) / weq;
  Vec w_plus(n), w_minus(n);
  for (int i = 0; i < n; ++i) {
    const auto& c = caps[i];
    auto psi = [&](double w) { return c.eval(w) / w; };
    double a = c.lo(), b = c.hi();
    for (int it = 0; it < 120; ++it) {
      double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
      if (psi(m1) < psi(m2))
        a = m1;
      else
        b = m2;
    }
    double peak = 0.5 * (a + b);
    if (x <= psi(c.lo())) {
      w_plus(i) = c.lo();
    } else {
      double lo = c.lo(), hi = peak;
      for (int it = 0; it < 80; ++it) {
        double m = 0.5 * (lo + hi);
        (psi(m) >= x ? hi : lo) = m;
      }
      w_plus(i) = hi;
    }
    if (x <= psi(c.hi())) {
      w_minus(i) = c.hi();
    } else {
      double lo = peak, hi = c.hi();
      for (int it = 0; it < 80; ++it) {
        double m = 0.5 * (lo + hi);
        (psi(m) >= x ? lo : hi) = m;
      }
      w_minus(i) = lo;
    }
  }
  double tlo = 0, thi = 1;
  for (int it = 0; it < 80; ++it) {
    double t = 0.5 * (tlo + thi);
    double sum = (w_plus + t * (w_minus - w_plus)).sum();
    (sum < weq ? tlo : thi) = t;
  }
  double t = 0.5 * (tlo + thi);
  return w_plus + t * (w_minus - w_plus);
}

// ---------------------------------------------------------------------------
// reducibility detection and single-step reduction
// ---------------------------------------------------------------------------

struct ReductionSite {
  int v1 = -1, v2 = -1;
  std::vector<int> e2;  // link indices of the reducible component
};

namespace detail {

/// Core separator search over a bare edge list; shared by the Network-facing
/// API and the multilevel working graph.
inline std::optional<ReductionSite> find_reduction_core(
    int n, const std::vector<std::pair<int, int>>& ends, const Vec& p) {
  int m = static_cast<int>(ends.size());
  double ptol = 1e-9 * std::max(1.0, p.lpNorm<1>());

  for (int v1 = 0; v1 < n; ++v1) {
    for (int v2 = v1 + 1; v2 < n; ++v2) {
      // components of G - {v1, v2}
      std::vector<int> comp(n, -1);
      int ncomp = 0;
      for (int seed = 0; seed < n; ++seed) {
        if (seed == v1 || seed == v2 || comp[seed] >= 0) continue;
        std::deque<int> q{seed};
        comp[seed] = ncomp;
        while (!q.empty()) {
          int u = q.front();
          q.pop_front();
          for (int i = 0; i < m; ++i) {
            auto [a, b] = ends[i];
            int other = a == u ? b : (b == u ? a : -1);
            if (other < 0 || other == v1 || other == v2 || comp[other] >= 0) continue;
            comp[other] = ncomp;
            q.push_back(other);
          }
        }
        ++ncomp;
      }
      // eligibility: zero injections and attachment to both separator nodes
      std::vector<bool> zero_inj(ncomp, true), touch1(ncomp, false), touch2(ncomp, false);
      for (int v = 0; v < n; ++v)
        if (comp[v] >= 0 && std::abs(p(v)) > ptol) zero_inj[comp[v]] = false;
      int direct = 0;
      for (int i = 0; i < m; ++i) {
        auto [a, b] = ends[i];
        int ct = comp[a], ch = comp[b];
        if (ct < 0 && ch < 0) {
          ++direct;
          continue;
        }
        int c = std::max(ct, ch);
        if (ct < 0 || ch < 0) {
          int sep = ct < 0 ? a : b;
          (sep == v1 ? touch1 : touch2)[c] = true;
        }
      }
      std::vector<bool> take(ncomp, false);
      bool any_both = false;
      for (int c = 0; c < ncomp; ++c) {
        if (zero_inj[c] && touch1[c] && touch2[c]) {
          take[c] = true;
          any_both = true;
        }
      }
      if (!any_both && direct < 2) continue;

      std::vector<int> e2;
      for (int i = 0; i < m; ++i) {
        auto [a, b] = ends[i];
        int ct = comp[a], ch = comp[b];
        bool in_e2 = false;
        if (ct < 0 && ch < 0)
          in_e2 = true;  // direct separator link, absorbed with the component
        else if (ct >= 0 && take[ct])
          in_e2 = true;
        else if (ch >= 0 && take[ch])
          in_e2 = true;
        if (in_e2) e2.push_back(i);
      }
      if (static_cast<int>(e2.size()) < 2) continue;

      auto connected_over = [&](const std::vector<int>& links, bool add_virtual,
                                const std::vector<bool>& members) {
        std::vector<int> parent(n);
        for (int v = 0; v < n; ++v) parent[v] = v;
        std::function<int(int)> find = [&](int v) {
          while (parent[v] != v) v = parent[v] = parent[parent[v]];
          return v;
        };
        for (int i : links) parent[find(ends[i].first)] = find(ends[i].second);
        if (add_virtual) parent[find(v1)] = find(v2);
        for (int v = 0; v < n; ++v)
          if (members[v] && find(v) != find(v1)) return false;
        return true;
      };

      std::vector<bool> g2_members(n, false), g1_members(n, false);
      for (int v = 0; v < n; ++v) {
        bool taken = comp[v] >= 0 && take[comp[v]];
        g2_members[v] = taken || v == v1 || v == v2;
        g1_members[v] = !taken;
      }
      if (!connected_over(e2, false, g2_members)) continue;
      std::vector<int> e1;
      for (int i = 0; i < m; ++i)
        if (std::find(e2.begin(), e2.end(), i) == e2.end()) e1.push_back(i);
      if (!connected_over(e1, true, g1_members)) continue;
      return ReductionSite{v1, v2, e2};
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Finds a two-node separator isolating injection-free components with at
/// least two links. Pairs are scanned in index order; all eligible components
/// (plus direct separator links) are merged into one reducible edge set.
inline std::optional<ReductionSite> find_reduction(const Network& net, const Vec& p) {
  std::vector<std::pair<int, int>> ends;
  for (int i = 0; i < net.num_links(); ++i)
    ends.emplace_back(net.link(i).tail, net.link(i).head);
  return detail::find_reduction_core(net.num_nodes(), ends, p);
}

inline std::optional<ReductionSite> find_reduction(const Network& net) {
  return find_reduction(net, net.p());
}

struct ReductionResult {
  Network reduced;      // component replaced by a virtual link v1 -> v2
  Network component;    // the reducible component under a unit terminal pair
  std::string virtual_id;
  double weq = 0, weq_lo = 0, weq_hi = 0;
  double certificate = 0;  // worst flow-equivalence discrepancy
};

/// Performs one reduction and certifies flow equivalence at the
/// current weights.
inline ReductionResult reduce_and_check(const Network& net, const ReductionSite& site) {
  int n = net.num_nodes(), m = net.num_links();
  std::vector<bool> in_e2(m, false);
  for (int i : site.e2) in_e2[i] = true;

  std::vector<bool> comp_node(n, false);
  for (int i : site.e2) {
    comp_node[net.link(i).tail] = true;
    comp_node[net.link(i).head] = true;
  }
  // terminals live in both graphs
  std::vector<bool> keep(n, false);
  for (int v = 0; v < n; ++v) keep[v] = !comp_node[v] || v == site.v1 || v == site.v2;
  keep[site.v1] = keep[site.v2] = true;
  comp_node[site.v1] = comp_node[site.v2] = true;

  auto subnetwork = [&](const std::vector<bool>& node_mask, const std::vector<int>& links,
                        const Vec& p_full, bool unit_pair) {
    std::vector<std::string> ids;
    std::vector<int> remap(n, -1);
    for (int v = 0; v < n; ++v)
      if (node_mask[v]) {
        remap[v] = static_cast<int>(ids.size());
        ids.push_back(net.node_ids()[v]);
      }
    std::vector<Link> ls;
    int mm = static_cast<int>(links.size());
    Vec w(mm), wl(mm), wu(mm), cl(mm), cu(mm);
    for (int k = 0; k < mm; ++k) {
      int i = links[k];
      ls.push_back({net.link(i).id, remap[net.link(i).tail], remap[net.link(i).head]});
      w(k) = net.w()(i);
      wl(k) = net.wl()(i);
      wu(k) = net.wu()(i);
      cl(k) = net.cl()(i);
      cu(k) = net.cu()(i);
    }
    Vec p = Vec::Zero(static_cast<int>(ids.size()));
    if (unit_pair) {
      p(remap[site.v1]) = 1.0;
      p(remap[site.v2]) = -1.0;
    } else {
      for (int v = 0; v < n; ++v)
        if (node_mask[v]) p(remap[v]) = p_full(v);
    }
    return Network(ids, ls, w, wl, wu, cl, cu, p);
  };

  Network component = subnetwork(comp_node, site.e2, net.p(), /*unit_pair=*/true);
  int c1 = component.node_index(net.node_ids()[site.v1]);
  int c2 = component.node_index(net.node_ids()[site.v2]);
  double weq = equivalent_weight(component, c1, c2);
  double weq_lo = equivalent_weight(component.with_weights(component.wl()), c1, c2);
  double weq_hi = equivalent_weight(component.with_weights(component.wu()), c1, c2);

  // reduced network: kept links plus the virtual one
  std::vector<int> e1;
  for (int i = 0; i < m; ++i)
    if (!in_e2[i]) e1.push_back(i);

  std::vector<std::string> ids;
  std::vector<int> remap(n, -1);
  for (int v = 0; v < n; ++v)
    if (keep[v]) {
      remap[v] = static_cast<int>(ids.size());
      ids.push_back(net.node_ids()[v]);
    }
  std::string virtual_id =
      "eq:" + net.node_ids()[site.v1] + "-" + net.node_ids()[site.v2];
  int mm = static_cast<int>(e1.size());
  std::vector<Link> ls;
  Vec w(mm + 1), wl(mm + 1), wu(mm + 1), cl(mm + 1), cu(mm + 1);
  for (int k = 0; k < mm; ++k) {
    int i = e1[k];
    ls.push_back({net.link(i).id, remap[net.link(i).tail], remap[net.link(i).head]});
    w(k) = net.w()(i);
    wl(k) = net.wl()(i);
    wu(k) = net.wu()(i);
    cl(k) = net.cl()(i);
    cu(k) = net.cu()(i);
  }
  ls.push_back({virtual_id, remap[site.v1], remap[site.v2]});
  double big = std::max(1.0, net.p().lpNorm<1>());
  w(mm) = weq;
  wl(mm) = std::min(weq_lo, weq);
  wu(mm) = std::max(weq_hi, weq);
  cl(mm) = -big;
  cu(mm) = big;
  Vec pr = Vec::Zero(static_cast<int>(ids.size()));
  for (int v = 0; v < n; ++v)
    if (keep[v]) pr(remap[v]) = net.p()(v);
  Network reduced(ids, ls, w, wl, wu, cl, cu, pr);

  // flow-equivalence certificate at the current weights
  Vec f_full = solve_flow(net).f;
  Vec f_red = solve_flow(reduced).f;
  Vec f_comp = solve_flow(component).f;
  double f_eq = f_red(mm);
  double disc = 0;
  for (int k = 0; k < mm; ++k) disc = std::max(disc, std::abs(f_red(k) - f_full(e1[k])));
  for (size_t k = 0; k < site.e2.size(); ++k)
    disc = std::max(disc,
                    std::abs(f_eq * f_comp(static_cast<int>(k)) - f_full(site.e2[k])));
  double scale = std::max(1.0, f_full.cwiseAbs().maxCoeff());
  if (disc > 1e-7 * scale)
    throw SolverError("reduction flow-equivalence certificate failed");

  ReductionResult r{std::move(reduced), std::move(component), virtual_id,
                    weq, weq_lo, weq_hi, disc};
  return r;
}

// ---------------------------------------------------------------------------
// sequential tree reduction with capacity bookkeeping
// ---------------------------------------------------------------------------

struct ReductionStep {
  enum class Kind { degree_one, series, parallel, general };
  Kind kind = Kind::series;
  std::vector<std::string> absorbed;
  std::string produced;
  double wl = 0, wu = 0;  // equivalent weight bounds of the produced link
  std::optional<CapacityPair> caps;
  double certificate = 0;  // flow-equivalence discrepancy where checked
};

inline const char* to_string(ReductionStep::Kind k) {
  switch (k) {
    case ReductionStep::Kind::degree_one: return "degree_one";
    case ReductionStep::Kind::series: return "series";
    case ReductionStep::Kind::parallel: return "parallel";
    default: return "general";
  }
}

/// Mutable working graph for the reduction passes: links carry their weight
/// box, a current weight and directional capacity functions.
struct RGraph {
  struct RLink {
    std::string id;
    int tail = -1, head = -1;
    double w = 0, wl = 0, wu = 0;
    CapacityPair cap;
  };
  std::vector<std::string> node_ids;
  Vec p;
  std::vector<RLink> links;
  int next_eq = 1;

  static RGraph from_network(const Network& net) {
    RGraph g;
    g.node_ids = net.node_ids();
    g.p = net.p();
    for (int i = 0; i < net.num_links(); ++i) {
      RLink l;
      l.id = net.link(i).id;
      l.tail = net.link(i).tail;
      l.head = net.link(i).head;
      l.w = net.w()(i);
      l.wl = net.wl()(i);
      l.wu = net.wu()(i);
      l.cap.fwd = PiecewiseCapacity::constant(net.cu()(i), l.wl, l.wu);
      l.cap.bwd = PiecewiseCapacity::constant(-net.cl()(i), l.wl, l.wu);
      g.links.push_back(std::move(l));
    }
    return g;
  }

  int num_nodes() const { return static_cast<int>(node_ids.size()); }
  int num_links() const { return static_cast<int>(links.size()); }

  bool injection(int v, double tol) const { return std::abs(p(v)) > tol; }

  double injection_tol() const { return 1e-9 * std::max(1.0, p.lpNorm<1>()); }

  std::string fresh_id() { return "eq" + std::to_string(next_eq++); }

  /// Drops a node, remapping indices.
  void remove_node(int v) {
    node_ids.erase(node_ids.begin() + v);
    Vec p2(p.size() - 1);
    int k = 0;
    for (int u = 0; u < p.size(); ++u)
      if (u != v) p2(k++) = p(u);
    p = p2;
    for (auto& l : links) {
      if (l.tail > v) --l.tail;
      if (l.head > v) --l.head;
    }
  }

  Mat laplacian(const Vec& weights) const {
    Mat l = Mat::Zero(num_nodes(), num_nodes());
    for (int i = 0; i < num_links(); ++i) {
      double wi = weights(i);
      if (wi <= 0.0) continue;
      l(links[i].tail, links[i].tail) += wi;
      l(links[i].head, links[i].head) += wi;
      l(links[i].tail, links[i].head) -= wi;
      l(links[i].head, links[i].tail) -= wi;
    }
    return l;
  }

  Vec solve(const Vec& weights, const Vec& inj) const {
    detail::GroundedSolver solver(laplacian(weights));
    Vec phi = solver.apply(inj);
    Vec f(num_links());
    for (int i = 0; i < num_links(); ++i)
      f(i) = weights(i) * (phi(links[i].tail) - phi(links[i].head));
    return f;
  }

  Vec current_weights() const {
    Vec w(num_links());
    for (int i = 0; i < num_links(); ++i) w(i) = links[i].w;
    return w;
  }

  double equivalent_weight_between(int v1, int v2) const {
    detail::GroundedSolver solver(laplacian(current_weights()));
    Vec a = Vec::Zero(num_nodes());
    a(v1) = 1.0;
    a(v2) = -1.0;
    return 1.0 / a.dot(solver.apply(a));
  }
};

struct TreeReduceOutcome {
  std::vector<ReductionStep> steps;
  RGraph terminal;
  bool tree_reducible = false;  // terminal graph is a tree
  bool link_reducible = false;  // terminal graph is a single link
};

/// Applies parallel, series and degree-one reductions exhaustively, composing
/// weight bounds and capacity functions along the way. Nodes carrying
/// injections are never eliminated.
inline TreeReduceOutcome tree_reduce(RGraph g) {
  TreeReduceOutcome out;
  double tol = g.injection_tol();

  auto harmonic2 = [](double a, double b) { return 1.0 / (1.0 / a + 1.0 / b); };

  for (;;) {
    // parallel: first node pair with more than one link
    bool acted = false;
    for (int i = 0; i < g.num_links() && !acted; ++i) {
      int u = g.links[i].tail, v = g.links[i].head;
      std::vector<int> group;
      for (int j = 0; j < g.num_links(); ++j) {
        const auto& l = g.links[j];
        if ((l.tail == u && l.head == v) || (l.tail == v && l.head == u)) group.push_back(j);
      }
      if (group.size() < 2) continue;

      std::vector<PiecewiseCapacity> fwds, bwds;
      double w = 0, wl = 0, wu = 0;
      ReductionStep step;
      step.kind = ReductionStep::Kind::parallel;
      for (int j : group) {
        const auto& l = g.links[j];
        bool aligned = l.tail == u;
        fwds.push_back(aligned ? l.cap.fwd : l.cap.bwd);
        bwds.push_back(aligned ? l.cap.bwd : l.cap.fwd);
        w += l.w;
        wl += l.wl;
        wu += l.wu;
        step.absorbed.push_back(l.id);
      }
      RGraph::RLink merged;
      merged.id = g.fresh_id();
      merged.tail = u;
      merged.head = v;
      merged.w = w;
      merged.wl = wl;
      merged.wu = wu;
      merged.cap.fwd = compose_parallel(fwds);
      merged.cap.bwd = compose_parallel(bwds);
      step.produced = merged.id;
      step.wl = wl;
      step.wu = wu;
      step.caps = merged.cap;
      out.steps.push_back(std::move(step));

      std::vector<RGraph::RLink> rest;
      for (int j = 0; j < g.num_links(); ++j)
        if (std::find(group.begin(), group.end(), j) == group.end())
          rest.push_back(std::move(g.links[j]));
      rest.push_back(std::move(merged));
      g.links = std::move(rest);
      acted = true;
    }
    if (acted) continue;

    // series: zero-injection node of degree two with distinct neighbours
    for (int v = 0; v < g.num_nodes() && !acted; ++v) {
      if (g.injection(v, tol)) continue;
      std::vector<int> inc;
      for (int j = 0; j < g.num_links(); ++j)
        if (g.links[j].tail == v || g.links[j].head == v) inc.push_back(j);
      if (inc.size() != 2) continue;
      const auto& li = g.links[inc[0]];
      const auto& lj = g.links[inc[1]];
      int a = li.tail == v ? li.head : li.tail;
      int b = lj.tail == v ? lj.head : lj.tail;
      if (a == b) continue;  // handled by the parallel rule

      ReductionStep step;
      step.kind = ReductionStep::Kind::series;
      step.absorbed = {li.id, lj.id};
      // chain direction a -> v -> b
      std::vector<PiecewiseCapacity> fwds{li.head == v ? li.cap.fwd : li.cap.bwd,
                                          lj.tail == v ? lj.cap.fwd : lj.cap.bwd};
      std::vector<PiecewiseCapacity> bwds{li.head == v ? li.cap.bwd : li.cap.fwd,
                                          lj.tail == v ? lj.cap.bwd : lj.cap.fwd};
      RGraph::RLink merged;
      merged.id = g.fresh_id();
      merged.tail = a;
      merged.head = b;
      merged.w = harmonic2(li.w, lj.w);
      merged.wl = harmonic2(li.wl, lj.wl);
      merged.wu = harmonic2(li.wu, lj.wu);
      merged.cap.fwd = compose_series(fwds);
      merged.cap.bwd = compose_series(bwds);
      step.produced = merged.id;
      step.wl = merged.wl;
      step.wu = merged.wu;
      step.caps = merged.cap;
      out.steps.push_back(std::move(step));

      std::vector<RGraph::RLink> rest;
      for (int j = 0; j < g.num_links(); ++j)
        if (j != inc[0] && j != inc[1]) rest.push_back(std::move(g.links[j]));
      rest.push_back(std::move(merged));
      g.links = std::move(rest);
      g.remove_node(v);
      acted = true;
    }
    if (acted) continue;

    // degree-one: dangling zero-injection node
    for (int v = 0; v < g.num_nodes() && !acted; ++v) {
      if (g.injection(v, tol)) continue;
      std::vector<int> inc;
      for (int j = 0; j < g.num_links(); ++j)
        if (g.links[j].tail == v || g.links[j].head == v) inc.push_back(j);
      if (inc.size() != 1) continue;
      ReductionStep step;
      step.kind = ReductionStep::Kind::degree_one;
      step.absorbed = {g.links[inc[0]].id};
      out.steps.push_back(std::move(step));
      g.links.erase(g.links.begin() + inc[0]);
      g.remove_node(v);
      acted = true;
    }
    if (!acted) break;
  }

  out.link_reducible = g.num_links() == 1 && g.num_nodes() == 2;
  out.tree_reducible = g.num_links() == g.num_nodes() - 1;
  out.terminal = std::move(g);
  return out;
}

inline TreeReduceOutcome tree_reduce(const Network& net) {
  return tree_reduce(RGraph::from_network(net));
}

/// Two-terminal equivalent capacity functions for a link-reducible network:
/// tree-reduces with the terminal pair protected and returns the final link's
/// capacity pair oriented v1 -> v2.
struct EquivalentCapacity {
  double weq_lo = 0, weq_hi = 0;
  PiecewiseCapacity upper;      // toward v2, positive
  PiecewiseCapacity lower_mag;  // toward v1, magnitude of the lower capacity
  bool exact = false;
  std::vector<ReductionStep> steps;
};

inline EquivalentCapacity equivalent_capacity(const Network& net, int v1, int v2,
                                              std::optional<Vec> p_override = {}) {
  RGraph g = RGraph::from_network(net);
  Vec marker = Vec::Zero(net.num_nodes());
  marker(v1) = 1.0;
  marker(v2) = -1.0;
  g.p = p_override.value_or(marker);
  TreeReduceOutcome out = tree_reduce(std::move(g));
  if (!out.link_reducible)
    throw SolverError("network is not link-reducible between the given terminals");
  const auto& l = out.terminal.links[0];
  bool aligned = out.terminal.node_ids[l.tail] == net.node_ids()[v1];
  EquivalentCapacity ec;
  ec.weq_lo = l.wl;
  ec.weq_hi = l.wu;
  ec.upper = aligned ? l.cap.fwd : l.cap.bwd;
  ec.lower_mag = aligned ? l.cap.bwd : l.cap.fwd;
  ec.exact = true;
  ec.steps = std::move(out.steps);
  return ec;
}

// ---------------------------------------------------------------------------
// multilevel margin
// ---------------------------------------------------------------------------

struct MultilevelConfig {
  int grid_points = 21;          // per weight dimension in component grid search
  long long grid_budget = 2'000'000;  // cap on grid evaluations before sampling
  int component_samples = 50000;      // random fallback for large components
  int terminal_samples = 30000;       // random samples for non-tree terminals
  int refine_rounds = 1;
  int weq_bins = 120;            // resolution of sampled capacity functions
  std::uint64_t seed = 1;
};

struct MultilevelReport {
  double nu_star = 0.0;
  std::vector<ReductionStep> steps;
  double max_certificate = 0.0;
  bool terminal_tree = false;
  int terminal_nodes = 0, terminal_links = 0;
  bool exact = true;  // every reduction used the closed S1 calculus
};

namespace detail {

/// Grid / random-sampling fallback for a reducible component that the S1
/// calculus cannot handle: samples component weights, bins by equivalent
/// weight and keeps the best directional capacities per bin.
inline CapacityPair component_capacity_by_search(const RGraph& comp, int v1, int v2,
                                                 const MultilevelConfig& cfg,
                                                 double weq_lo, double weq_hi,
                                                 std::mt19937_64& rng) {
  int m = comp.num_links();
  Vec a = Vec::Zero(comp.num_nodes());
  a(v1) = 1.0;
  a(v2) = -1.0;

  int bins = cfg.weq_bins;
  std::vector<double> best_f(bins + 1, 0.0), best_b(bins + 1, 0.0);
  double span = std::max(weq_hi - weq_lo, 1e-12);

  long long total = 1;
  for (int i = 0; i < m && total <= cfg.grid_budget; ++i) total *= cfg.grid_points;
  bool exhaustive = total <= cfg.grid_budget;
  long long count = exhaustive ? total : cfg.component_samples;

  Vec w(m);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (long long it = 0; it < count; ++it) {
    if (exhaustive) {
      long long rem = it;
      for (int i = 0; i < m; ++i) {
        int gi = static_cast<int>(rem % cfg.grid_points);
        rem /= cfg.grid_points;
        w(i) = comp.links[i].wl +
               (comp.links[i].wu - comp.links[i].wl) * gi / (cfg.grid_points - 1.0);
      }
    } else {
      for (int i = 0; i < m; ++i)
        w(i) = comp.links[i].wl + (comp.links[i].wu - comp.links[i].wl) * u01(rng);
    }
    Vec f = comp.solve(w, a);
    double zf = std::numeric_limits<double>::infinity();
    double zb = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      double fi = f(i);
      double cu = comp.links[i].cap.fwd.eval(w(i));
      double cb = comp.links[i].cap.bwd.eval(w(i));
      if (fi > 1e-12) {
        zf = std::min(zf, cu / fi);
        zb = std::min(zb, cb / fi);
      } else if (fi < -1e-12) {
        zf = std::min(zf, cb / (-fi));
        zb = std::min(zb, cu / (-fi));
      }
    }
    detail::GroundedSolver solver(comp.laplacian(w));
    double weq = 1.0 / a.dot(solver.apply(a));
    int bin = static_cast<int>(std::round((weq - weq_lo) / span * bins));
    bin = std::clamp(bin, 0, bins);
    best_f[bin] = std::max(best_f[bin], zf);
    best_b[bin] = std::max(best_b[bin], zb);
  }

  // fill empty bins from neighbours, then assemble monotone-shaped functions
  auto assemble = [&](std::vector<double> best) {
    for (int k = 1; k <= bins; ++k)
      if (best[k] <= 0) best[k] = best[k - 1];
    for (int k = bins - 1; k >= 0; --k)
      if (best[k] <= 0) best[k] = best[k + 1];
    std::vector<double> xs, ys;
    for (int k = 0; k <= bins; ++k) {
      xs.push_back(weq_lo + span * k / bins);
      ys.push_back(std::max(best[k], 1e-12));
    }
    return PiecewiseCapacity::from_samples(xs, ys, /*s1=*/false);
  };
  return CapacityPair{assemble(best_f), assemble(best_b)};
}

}  // namespace detail

/// Margin of robustness against nongenerative disturbances via recursive
/// network reduction: reducible components collapse to equivalent links with
/// composed capacity functions (exactly when link-reducible, by search
/// otherwise); the terminal problem is solved by the residual formula on
/// trees and by randomized weight search otherwise.
inline MultilevelReport multilevel_margin(const Network& net,
                                          const MultilevelConfig& cfg = {}) {
  RGraph g = RGraph::from_network(net);
  MultilevelReport rep;
  std::mt19937_64 rng(cfg.seed);
  double ptol = g.injection_tol();

  for (;;) {
    // prune dangling injection-free nodes: they never carry flow
    bool pruned = true;
    while (pruned) {
      pruned = false;
      for (int v = 0; v < g.num_nodes() && !pruned; ++v) {
        if (g.injection(v, ptol)) continue;
        std::vector<int> inc;
        for (int j = 0; j < g.num_links(); ++j)
          if (g.links[j].tail == v || g.links[j].head == v) inc.push_back(j);
        if (inc.size() > 1) continue;
        ReductionStep step;
        step.kind = ReductionStep::Kind::degree_one;
        for (int j : inc) step.absorbed.push_back(g.links[j].id);
        rep.steps.push_back(std::move(step));
        for (auto it = inc.rbegin(); it != inc.rend(); ++it)
          g.links.erase(g.links.begin() + *it);
        g.remove_node(v);
        pruned = true;
      }
    }

    std::vector<std::pair<int, int>> ends;
    for (const auto& l : g.links) ends.emplace_back(l.tail, l.head);
    auto site = detail::find_reduction_core(g.num_nodes(), ends, g.p);
    if (!site) break;

    // carve the component out of the working graph
    std::vector<bool> in_e2(g.num_links(), false);
    for (int i : site->e2) in_e2[i] = true;
    std::vector<bool> comp_node(g.num_nodes(), false);
    for (int i : site->e2) {
      comp_node[g.links[i].tail] = true;
      comp_node[g.links[i].head] = true;
    }
    comp_node[site->v1] = comp_node[site->v2] = true;

    RGraph comp;
    std::vector<int> remap(g.num_nodes(), -1);
    for (int v = 0; v < g.num_nodes(); ++v)
      if (comp_node[v]) {
        remap[v] = comp.num_nodes();
        comp.node_ids.push_back(g.node_ids[v]);
      }
    comp.p = Vec::Zero(comp.num_nodes());
    int c1 = remap[site->v1], c2 = remap[site->v2];
    comp.p(c1) = 1.0;
    comp.p(c2) = -1.0;
    for (int i : site->e2) {
      RGraph::RLink l = g.links[i];
      l.tail = remap[l.tail];
      l.head = remap[l.head];
      comp.links.push_back(std::move(l));
    }

    double weq = comp.equivalent_weight_between(c1, c2);
    Vec wlv(comp.num_links()), wuv(comp.num_links());
    for (int i = 0; i < comp.num_links(); ++i) {
      wlv(i) = comp.links[i].wl;
      wuv(i) = comp.links[i].wu;
    }
    double weq_lo, weq_hi;
    {
      RGraph c2g = comp;
      for (int i = 0; i < c2g.num_links(); ++i) c2g.links[i].w = wlv(i);
      weq_lo = c2g.equivalent_weight_between(c1, c2);
      for (int i = 0; i < c2g.num_links(); ++i) c2g.links[i].w = wuv(i);
      weq_hi = c2g.equivalent_weight_between(c1, c2);
    }

    ReductionStep step;
    step.kind = ReductionStep::Kind::general;
    for (int i : site->e2) step.absorbed.push_back(g.links[i].id);
    CapacityPair merged_cap;
    bool exact_step = false;
    if (wlv.minCoeff() > 0.0) {
      RGraph probe = comp;
      TreeReduceOutcome tr = tree_reduce(std::move(probe));
      if (tr.link_reducible) {
        const auto& l = tr.terminal.links[0];
        bool aligned = tr.terminal.node_ids[l.tail] == comp.node_ids[c1];
        merged_cap.fwd = aligned ? l.cap.fwd : l.cap.bwd;
        merged_cap.bwd = aligned ? l.cap.bwd : l.cap.fwd;
        weq_lo = l.wl;
        weq_hi = l.wu;
        exact_step = true;
      }
    }
    if (!exact_step) {
      merged_cap =
          detail::component_capacity_by_search(comp, c1, c2, cfg, weq_lo, weq_hi, rng);
      rep.exact = false;
    }

    // flow-equivalence certificate at the current weights
    {
      Vec f_full = g.solve(g.current_weights(), g.p);
      Vec f_comp = comp.solve(comp.current_weights(), comp.p);
      // reduced flows: evaluate below after splicing; compare component side
      // against the full solution through the terminal throughput
      double f_eq = 0;
      for (int i = 0; i < g.num_links(); ++i) {
        if (!in_e2[i]) continue;
        if (g.links[i].tail == site->v1) f_eq += f_full(i);
        if (g.links[i].head == site->v1) f_eq -= f_full(i);
      }
      double disc = 0;
      for (size_t k = 0; k < site->e2.size(); ++k)
        disc = std::max(disc, std::abs(f_eq * f_comp(static_cast<int>(k)) -
                                       f_full(site->e2[k])));
      double scale = std::max(1.0, f_full.cwiseAbs().maxCoeff());
      if (disc > 1e-7 * scale)
        throw SolverError("reduction flow-equivalence certificate failed");
      step.certificate = disc;
      rep.max_certificate = std::max(rep.max_certificate, disc);
    }

    RGraph::RLink merged;
    merged.id = g.fresh_id();
    merged.tail = site->v1;
    merged.head = site->v2;
    merged.w = weq;
    merged.wl = weq_lo;
    merged.wu = weq_hi;
    merged.cap = merged_cap;
    step.produced = merged.id;
    step.wl = weq_lo;
    step.wu = weq_hi;
    step.caps = merged.cap;
    rep.steps.push_back(std::move(step));

    std::vector<RGraph::RLink> rest;
    for (int j = 0; j < g.num_links(); ++j)
      if (!in_e2[j]) rest.push_back(std::move(g.links[j]));
    rest.push_back(std::move(merged));
    g.links = std::move(rest);
    // drop absorbed interior nodes
    for (int v = g.num_nodes() - 1; v >= 0; --v) {
      if (!comp_node[v] || v == site->v1 || v == site->v2) continue;
      g.remove_node(v);
    }
  }

  rep.terminal_nodes = g.num_nodes();
  rep.terminal_links = g.num_links();
  rep.terminal_tree = g.num_links() == g.num_nodes() - 1;

  // disturbance vertices restricted to the injection support
  std::vector<int> support;
  for (int v = 0; v < g.num_nodes(); ++v)
    if (g.injection(v, ptol)) support.push_back(v);
  if (support.size() < 2) throw ValidationError("multilevel: need at least two injection nodes");

  if (rep.terminal_tree) {
    Vec f0 = g.solve(g.current_weights(), g.p);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g.num_links(); ++i) {
      double up = g.links[i].cap.fwd.max_value() - f0(i);
      double dn = f0(i) + g.links[i].cap.bwd.max_value();
      best = std::min({best, up, dn});
    }
    rep.nu_star = 2.0 * std::max(best, 0.0);
    return rep;
  }
  rep.exact = false;

  // randomized terminal search: maximize the feasible magnitude per vertex
  // direction over terminal weights, then take the worst direction
  int m = g.num_links();
  std::vector<std::pair<int, int>> pairs;
  for (int s : support)
    for (int t : support)
      if (s != t) pairs.emplace_back(s, t);

  std::vector<double> best_mu(pairs.size(), 0.0);
  std::vector<Vec> best_w(pairs.size(), g.current_weights());
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  auto evaluate = [&](const Vec& w) {
    Vec f0 = g.solve(w, g.p);
    std::vector<double> cu(m), cb(m);
    bool feasible = true;
    for (int i = 0; i < m; ++i) {
      cu[i] = g.links[i].cap.fwd.eval(w(i));
      cb[i] = g.links[i].cap.bwd.eval(w(i));
      if (f0(i) > cu[i] + 1e-12 || f0(i) < -cb[i] - 1e-12) feasible = false;
    }
    if (!feasible) return;
    for (size_t kp = 0; kp < pairs.size(); ++kp) {
      auto [s, t] = pairs[kp];
      Vec d = Vec::Zero(g.num_nodes());
      d(s) = 0.5;
      d(t) = -0.5;
      Vec fd = g.solve(w, d);
      double mu = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (fd(i) > 1e-12)
          mu = std::min(mu, (cu[i] - f0(i)) / fd(i));
        else if (fd(i) < -1e-12)
          mu = std::min(mu, (-cb[i] - f0(i)) / fd(i));
      }
      if (mu > best_mu[kp]) {
        best_mu[kp] = mu;
        best_w[kp] = w;
      }
    }
  };

  Vec w(m);
  evaluate(g.current_weights());
  {
    for (int i = 0; i < m; ++i) w(i) = g.links[i].wu;
    evaluate(w);
  }
  for (int it = 0; it < cfg.terminal_samples; ++it) {
    for (int i = 0; i < m; ++i)
      w(i) = g.links[i].wl + (g.links[i].wu - g.links[i].wl) * u01(rng);
    evaluate(w);
  }
  for (int round = 0; round < cfg.refine_rounds; ++round) {
    for (size_t kp = 0; kp < pairs.size(); ++kp) {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int it = 0; it < cfg.terminal_samples / 10; ++it) {
        for (int i = 0; i < m; ++i) {
          double range = g.links[i].wu - g.links[i].wl;
          w(i) = std::clamp(best_w[kp](i) + 0.1 * range * gauss(rng), g.links[i].wl,
                            g.links[i].wu);
        }
        evaluate(w);
      }
    }
  }

  rep.nu_star = *std::min_element(best_mu.begin(), best_mu.end());
  return rep;
}

}  // namespace gridw
