#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "gridw/flow.hpp"
#include "gridw/network.hpp"

namespace gridw {

/// Capacitated digraph for max-flow computations. Arcs come in residual pairs.
class FlowGraph {
 public:
  explicit FlowGraph(int n) : out_(n) {}

  int num_nodes() const { return static_cast<int>(out_.size()); }

  void add_arc(int from, int to, double cap) {
    out_[from].push_back(static_cast<int>(arcs_.size()));
    arcs_.push_back({to, cap});
    out_[to].push_back(static_cast<int>(arcs_.size()));
    arcs_.push_back({from, 0.0});
  }

  /// Edmonds-Karp. Residual state persists, so call on a fresh graph.
  double max_flow(int s, int t) {
    double total = 0.0;
    const double eps = 1e-15;
    for (;;) {
      std::vector<int> via(num_nodes(), -1);
      std::deque<int> q{s};
      std::vector<bool> seen(num_nodes(), false);
      seen[s] = true;
      while (!q.empty() && !seen[t]) {
        int u = q.front();
        q.pop_front();
        for (int ai : out_[u]) {
          const Arc& a = arcs_[ai];
          if (a.residual > eps && !seen[a.to]) {
            seen[a.to] = true;
            via[a.to] = ai;
            q.push_back(a.to);
          }
        }
      }
      if (!seen[t]) break;
      double push = std::numeric_limits<double>::infinity();
      for (int v = t; v != s;) {
        push = std::min(push, arcs_[via[v]].residual);
        v = arcs_[via[v] ^ 1].to;
      }
      for (int v = t; v != s;) {
        arcs_[via[v]].residual -= push;
        arcs_[via[v] ^ 1].residual += push;
        v = arcs_[via[v] ^ 1].to;
      }
      total += push;
    }
    return total;
  }

  /// Nodes residual-reachable from s after max_flow: the canonical minimal
  /// source side of a minimum cut.
  std::vector<int> reachable(int s) const {
    std::vector<bool> seen(num_nodes(), false);
    std::deque<int> q{s};
    seen[s] = true;
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (int ai : out_[u])
        if (arcs_[ai].residual > 1e-12 && !seen[arcs_[ai].to]) {
          seen[arcs_[ai].to] = true;
          q.push_back(arcs_[ai].to);
        }
    }
    std::vector<int> side;
    for (int v = 0; v < num_nodes(); ++v)
      if (seen[v]) side.push_back(v);
    return side;
  }

 private:
  struct Arc {
    int to;
    double residual;
  };
  std::vector<std::vector<int>> out_;
  std::vector<Arc> arcs_;
};

/// Residual network around the initial operating flow: per original link, a
/// forward arc with capacity cu - f0 and a reverse arc with capacity f0 - cl.
struct AssocFlowNet {
  int num_nodes = 0;
  struct Arc {
    int from, to;
    double cap;
    int link;       // originating link index
    bool forward;   // true: along the link direction
  };
  std::vector<Arc> arcs;

  FlowGraph graph() const {
    FlowGraph g(num_nodes);
    for (const Arc& a : arcs) g.add_arc(a.from, a.to, a.cap);
    return g;
  }
};

inline AssocFlowNet assoc_flow_network(const Network& net, const Vec& f0) {
  AssocFlowNet afn;
  afn.num_nodes = net.num_nodes();
  double tol = 1e-9 * std::max(1.0, net.cu().maxCoeff());
  for (int i = 0; i < net.num_links(); ++i) {
    double fwd = net.cu()(i) - f0(i);
    double bwd = -net.cl()(i) + f0(i);
    if (fwd < -tol || bwd < -tol) throw ValidationError("infeasible initial flow");
    const Link& l = net.link(i);
    afn.arcs.push_back({l.tail, l.head, std::max(fwd, 0.0), i, true});
    afn.arcs.push_back({l.head, l.tail, std::max(bwd, 0.0), i, false});
  }
  return afn;
}

inline AssocFlowNet assoc_flow_network(const Network& net) {
  return assoc_flow_network(net, solve_flow(net).f);
}

/// Max-flow value and the canonical minimum s-t cut of an associated network.
inline std::pair<double, Cut> min_cut(const AssocFlowNet& afn, int s, int t) {
  if (s == t) throw ValidationError("min_cut: s == t");
  FlowGraph g = afn.graph();
  double value = g.max_flow(s, t);
  return {value, Cut{g.reachable(s)}};
}

namespace detail {

/// Feasibility of {A g = b, -(f0 - cl) <= g <= cu - f0} as a super-source
/// max-flow on the associated network.
inline bool residual_bflow_feasible(const AssocFlowNet& afn, const Vec& b, double tol) {
  int n = afn.num_nodes;
  FlowGraph g(n + 2);
  int src = n, dst = n + 1;
  double need = 0.0;
  for (int v = 0; v < n; ++v) {
    if (b(v) > 0) {
      g.add_arc(src, v, b(v));
      need += b(v);
    } else if (b(v) < 0) {
      g.add_arc(v, dst, -b(v));
    }
  }
  for (const auto& a : afn.arcs) g.add_arc(a.from, a.to, a.cap);
  return g.max_flow(src, dst) >= need - tol;
}

}  // namespace detail

/// Largest disturbance magnitude along direction delta that keeps the network
/// feasible for SOME flow (weight bounds relaxed): for a vertex direction
/// (one +1/2, one -1/2 entry) this is exactly twice the s-t max-flow of the
/// associated network; general balanced unit-l1 directions go through a
/// parametric feasibility bisection.
inline double nu0(const Network& net, const Vec& delta) {
  if (delta.size() != net.num_nodes()) throw ValidationError("delta size mismatch");
  if (std::abs(delta.lpNorm<1>() - 1.0) > 1e-9 || std::abs(delta.sum()) > 1e-9)
    throw ValidationError("delta must be balanced with unit l1 norm");

  Vec f0 = solve_flow(net).f;
  AssocFlowNet afn = assoc_flow_network(net, f0);

  int pos = -1, neg = -1, extras = 0;
  for (int v = 0; v < net.num_nodes(); ++v) {
    if (std::abs(delta(v) - 0.5) < 1e-12)
      pos = v;
    else if (std::abs(delta(v) + 0.5) < 1e-12)
      neg = v;
    else if (std::abs(delta(v)) > 1e-12)
      ++extras;
  }
  if (pos >= 0 && neg >= 0 && extras == 0) {
    FlowGraph g = afn.graph();
    return 2.0 * g.max_flow(pos, neg);
  }

  // Bisection on mu; the bracket grows geometrically while still feasible.
  double cap_sum = 0.0;
  for (const auto& a : afn.arcs) cap_sum += a.cap;
  double hi = std::max(1.0, cap_sum);
  double tol = 1e-12 * std::max(1.0, hi);
  int guard = 0;
  while (detail::residual_bflow_feasible(afn, Vec(hi * delta), tol) && guard++ < 80) hi *= 2.0;
  if (guard >= 80) return std::numeric_limits<double>::infinity();
  double lo = 0.0;
  while (hi - lo > 1e-8 * std::max(1.0, hi)) {
    double mid = 0.5 * (lo + hi);
    if (detail::residual_bflow_feasible(afn, Vec(mid * delta), tol))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

enum class MarginKind { exact_tree, exact_wl_zero, upper_bound };

inline const char* to_string(MarginKind k) {
  switch (k) {
    case MarginKind::exact_tree: return "exact_tree";
    case MarginKind::exact_wl_zero: return "exact_wl_zero";
    default: return "upper_bound";
  }
}

struct MarginReport {
  double nu_star = 0.0;
  MarginKind kind = MarginKind::upper_bound;
  Cut argmin_cut;
  int delta_s = -1;  // worst-case vertex direction: +1/2 here, -1/2 at delta_t
  int delta_t = -1;
};

/// Margin of robustness against balanced unit-l1 disturbances. Exact for trees
/// (residual bottleneck) and for wl = 0 (twice the global min cut of the
/// associated network); otherwise twice the global min cut is an upper bound.
inline MarginReport margin(const Network& net) {
  Vec f0 = solve_flow(net).f;
  AssocFlowNet afn = assoc_flow_network(net, f0);
  MarginReport rep;

  bool is_tree = net.num_links() == net.num_nodes() - 1;
  if (is_tree) {
    rep.kind = MarginKind::exact_tree;
    double best = std::numeric_limits<double>::infinity();
    int best_link = -1;
    bool toward_cu = true;
    for (int i = 0; i < net.num_links(); ++i) {
      double up = net.cu()(i) - f0(i), dn = f0(i) - net.cl()(i);
      double slack = std::min(up, dn);
      if (slack < best) {
        best = slack;
        best_link = i;
        toward_cu = up <= dn;
      }
    }
    rep.nu_star = 2.0 * best;
    // the bottleneck link separates the tree; pushing toward its tighter bound
    // gives the argmin disturbance
    std::vector<bool> mask(net.num_links(), true);
    mask[best_link] = false;
    // component containing the tail
    std::vector<int> comp(net.num_nodes(), -1);
    std::deque<int> q{net.link(best_link).tail};
    comp[net.link(best_link).tail] = 0;
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (int j = 0; j < net.num_links(); ++j) {
        if (!mask[j]) continue;
        const Link& l = net.link(j);
        int other = -1;
        if (l.tail == u) other = l.head;
        if (l.head == u) other = l.tail;
        if (other >= 0 && comp[other] < 0) {
          comp[other] = 0;
          q.push_back(other);
        }
      }
    }
    for (int v = 0; v < net.num_nodes(); ++v)
      if (comp[v] == 0) rep.argmin_cut.side.push_back(v);
    int tail_side = net.link(best_link).tail, head_side = net.link(best_link).head;
    rep.delta_s = toward_cu ? tail_side : head_side;
    rep.delta_t = toward_cu ? head_side : tail_side;
    return rep;
  }

  bool wl_zero = (net.wl().maxCoeff() <= 0.0);
  rep.kind = wl_zero ? MarginKind::exact_wl_zero : MarginKind::upper_bound;

  // every cut either has node 0 on its source side or on its sink side, so
  // sweeping (0, t) and (t, 0) covers the global minimum
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](int s, int t) {
    FlowGraph g = afn.graph();
    double v = g.max_flow(s, t);
    if (v < best) {
      best = v;
      rep.argmin_cut.side = g.reachable(s);
      rep.delta_s = s;
      rep.delta_t = t;
    }
  };
  for (int t = 1; t < net.num_nodes(); ++t) {
    consider(0, t);
    consider(t, 0);
  }
  rep.nu_star = 2.0 * best;
  return rep;
}

}  // namespace gridw
