#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gridw/network.hpp"

namespace gridw {

inline constexpr double kRankTolRel = 1e-10;

/// Weighted Laplacian A W A^T over links with strictly positive weight.
inline Mat laplacian(const Network& net) {
  if (!net.connected_active()) throw SolverError("not connected");
  int n = net.num_nodes();
  Mat l = Mat::Zero(n, n);
  for (int i = 0; i < net.num_links(); ++i) {
    double wi = net.w()(i);
    if (wi <= 0.0) continue;
    int u = net.link(i).tail, v = net.link(i).head;
    l(u, u) += wi;
    l(v, v) += wi;
    l(u, v) -= wi;
    l(v, u) -= wi;
  }
  return l;
}

/// Moore-Penrose pseudo-inverse via symmetric eigendecomposition. Eigenvalues
/// below kRankTolRel * lambda_max count as zero; exactly one zero eigenvalue is
/// expected for a connected graph.
inline Mat pinv_laplacian(const Mat& l) {
  Eigen::SelfAdjointEigenSolver<Mat> es(l);
  if (es.info() != Eigen::Success) throw SolverError("eigendecomposition failed");
  const Vec& ev = es.eigenvalues();
  double lmax = ev.cwiseAbs().maxCoeff();
  double tol = kRankTolRel * std::max(lmax, 1e-300);
  int zeros = 0;
  Vec inv = Vec::Zero(ev.size());
  for (int k = 0; k < ev.size(); ++k) {
    if (std::abs(ev(k)) < tol)
      ++zeros;
    else
      inv(k) = 1.0 / ev(k);
  }
  if (zeros != 1) throw SolverError("not connected");
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

namespace detail {

/// Solves L x = b for balanced b by grounding node 0, then centers the result
/// so it matches pinv(L) * b. Caller must have checked connectivity.
class GroundedSolver {
 public:
  explicit GroundedSolver(const Mat& l) : n_(static_cast<int>(l.rows())) {
    ldlt_.compute(l.bottomRightCorner(n_ - 1, n_ - 1));
    if (ldlt_.info() != Eigen::Success) throw SolverError("laplacian factorization failed");
  }

  Vec apply(const Vec& b) const {
    Vec x = Vec::Zero(n_);
    x.tail(n_ - 1) = ldlt_.solve(b.tail(n_ - 1));
    x.array() -= x.mean();
    return x;
  }

 private:
  int n_;
  Eigen::LDLT<Mat> ldlt_;
};

}  // namespace detail

/// DC flow solution f = W A^T pinv(L) p together with the minimum-norm phase
/// angles. Links with zero weight carry zero flow.
inline FlowState solve_flow(const Network& net) {
  if (!net.connected_active()) throw SolverError("not connected");
  double pscale = net.p().lpNorm<1>();
  if (std::abs(net.p().sum()) > Network::kBalanceTolRel * std::max(1.0, pscale))
    throw ValidationError("unbalanced supply-demand");

  Mat l = laplacian(net);
  detail::GroundedSolver solver(l);
  Vec phi = solver.apply(net.p());

  FlowState fs;
  fs.phi = phi;
  fs.f = Vec::Zero(net.num_links());
  for (int i = 0; i < net.num_links(); ++i) {
    const Link& e = net.link(i);
    fs.f(i) = net.w()(i) * (phi(e.tail) - phi(e.head));
  }
  return fs;
}

namespace detail {

/// Directed graph over nodes induced by strictly signed flows: each link with
/// |f_i| > tol contributes one arc in its flow direction carrying |f_i|.
struct FlowDigraph {
  struct Arc {
    int from, to, link;
    double mag;
  };
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> out;  // node -> arc indices

  FlowDigraph(const Network& net, const Vec& f, double tol) : out(net.num_nodes()) {
    for (int i = 0; i < net.num_links(); ++i) {
      if (std::abs(f(i)) <= tol) continue;
      int u = net.link(i).tail, v = net.link(i).head;
      if (f(i) < 0) std::swap(u, v);
      out[u].push_back(static_cast<int>(arcs.size()));
      arcs.push_back({u, v, i, std::abs(f(i))});
    }
  }

  /// Shortest (fewest arcs) directed cycle, as a list of arc indices, or empty.
  std::vector<int> shortest_cycle() const {
    std::vector<int> best;
    int n = static_cast<int>(out.size());
    for (size_t a0 = 0; a0 < arcs.size(); ++a0) {
      // BFS from arcs[a0].to back to arcs[a0].from.
      int src = arcs[a0].to, dst = arcs[a0].from;
      std::vector<int> via(n, -1);
      std::vector<int> dist(n, -1);
      std::deque<int> q{src};
      dist[src] = 0;
      while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        if (u == dst) break;
        for (int ai : out[u]) {
          int v = arcs[ai].to;
          if (dist[v] < 0) {
            dist[v] = dist[u] + 1;
            via[v] = ai;
            q.push_back(v);
          }
        }
      }
      if (dist[dst] < 0) continue;
      std::vector<int> cyc{static_cast<int>(a0)};
      for (int v = dst; v != src; v = arcs[via[v]].from) cyc.push_back(via[v]);
      if (best.empty() || cyc.size() < best.size()) best = cyc;
    }
    return best;
  }

  bool has_cycle() const {
    // Kahn peeling on the arc set.
    int n = static_cast<int>(out.size());
    std::vector<int> indeg(n, 0);
    for (const Arc& a : arcs) indeg[a.to]++;
    std::deque<int> q;
    for (int v = 0; v < n; ++v)
      if (indeg[v] == 0) q.push_back(v);
    int seen = 0;
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      ++seen;
      for (int ai : out[u])
        if (--indeg[arcs[ai].to] == 0) q.push_back(arcs[ai].to);
    }
    return seen < n;
  }
};

inline double flow_zero_tol(const Vec& f) {
  return 1e-12 * std::max(1.0, f.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Cancels circulations: while the flow-oriented graph has a directed cycle,
/// subtracts the bottleneck magnitude around the shortest such cycle.
/// Preserves A f = p and never increases any |f_i|.
inline Vec remove_circulations(const Network& net, const Vec& f) {
  Vec g = f;
  double tol = detail::flow_zero_tol(f);
  for (;;) {
    detail::FlowDigraph dg(net, g, tol);
    std::vector<int> cyc = dg.shortest_cycle();
    if (cyc.empty()) break;
    double bottleneck = std::numeric_limits<double>::infinity();
    for (int ai : cyc) bottleneck = std::min(bottleneck, dg.arcs[ai].mag);
    for (int ai : cyc) {
      int li = dg.arcs[ai].link;
      g(li) -= (g(li) > 0 ? bottleneck : -bottleneck);
      if (std::abs(g(li)) <= tol) g(li) = 0.0;
    }
  }
  return g;
}

struct FeasibilityClass {
  bool in_f0 = false;  // no circulation
  bool in_f1 = false;  // conservation + capacity box
  bool in_f2 = false;  // realizable as a DC flow with some w in [wl, wu]
};

namespace detail {

/// Feasibility of phase angles phi with phi_tail - phi_head constrained to a
/// per-link interval, via Bellman-Ford on the difference-constraint graph.
inline bool difference_constraints_feasible(
    const Network& net, const std::vector<std::pair<double, double>>& bounds) {
  struct E {
    int from, to;
    double w;
  };
  std::vector<E> edges;
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < net.num_links(); ++i) {
    auto [lo, hi] = bounds[i];
    int s = net.link(i).tail, t = net.link(i).head;
    // phi_s - phi_t <= hi  => edge t -> s with weight hi
    if (hi < inf) edges.push_back({t, s, hi});
    // phi_t - phi_s <= -lo => edge s -> t with weight -lo
    if (lo > -inf) edges.push_back({s, t, -lo});
  }
  int n = net.num_nodes();
  std::vector<double> dist(n, 0.0);  // virtual source at distance 0 to all
  for (int pass = 0; pass < n; ++pass) {
    bool changed = false;
    for (const E& e : edges) {
      if (dist[e.from] + e.w < dist[e.to] - 1e-15) {
        dist[e.to] = dist[e.from] + e.w;
        changed = true;
      }
    }
    if (!changed) return true;
  }
  return false;  // negative cycle
}

}  // namespace detail

/// Classifies a candidate flow vector against the three feasible-flow sets.
/// F2 for trees coincides with F1; otherwise membership is decided by checking
/// that some phase-angle assignment realizes f with weights inside [wl, wu]
/// (a difference-constraint system; always solvable when wl = 0 and f is in
/// F1 and F0).
inline FeasibilityClass feasibility_class(const Network& net, const Vec& f) {
  FeasibilityClass r;
  double fscale = std::max(1.0, f.cwiseAbs().maxCoeff());
  double tol = 1e-8 * fscale;

  Vec residual = net.incidence() * f - net.p();
  bool conserves = residual.cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, net.p().lpNorm<1>());
  bool in_box = true;
  for (int i = 0; i < net.num_links(); ++i)
    if (f(i) < net.cl()(i) - tol || f(i) > net.cu()(i) + tol) in_box = false;
  r.in_f1 = conserves && in_box;

  detail::FlowDigraph dg(net, f, detail::flow_zero_tol(f));
  r.in_f0 = !dg.has_cycle();

  bool is_tree = net.num_links() == net.num_nodes() - 1;
  if (is_tree) {
    r.in_f2 = r.in_f1;
    return r;
  }
  if (!r.in_f1 || !r.in_f0) {
    r.in_f2 = false;
    return r;
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> bounds(net.num_links());
  double ztol = detail::flow_zero_tol(f);
  for (int i = 0; i < net.num_links(); ++i) {
    double fi = f(i), wl = net.wl()(i), wu = net.wu()(i);
    if (std::abs(fi) <= ztol) {
      // zero flow: either force equal angles, or drop the link when wl = 0
      bounds[i] = (wl > 0.0) ? std::make_pair(0.0, 0.0) : std::make_pair(-inf, inf);
    } else if (fi > 0) {
      bounds[i] = {fi / wu, wl > 0.0 ? fi / wl : inf};
    } else {
      bounds[i] = {wl > 0.0 ? fi / wl : -inf, fi / wu};
    }
  }
  r.in_f2 = detail::difference_constraints_feasible(net, bounds);
  return r;
}

/// Diagnostic: every DC flow magnitude is bounded by half the total |p|.
inline bool flow_bound_check(const Network& net) {
  FlowState fs = solve_flow(net);
  double bound = net.p().lpNorm<1>() / 2.0;
  double tol = 1e-9 * std::max(1.0, bound);
  return fs.f.cwiseAbs().maxCoeff() <= bound + tol;
}

}  // namespace gridw
