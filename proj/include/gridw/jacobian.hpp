#pragma once

#include <cmath>

#include "gridw/flow.hpp"
#include "gridw/network.hpp"

namespace gridw {

/// Link-by-link flow-weight sensitivity matrix: entry (k, i) is the derivative
/// of the flow on link k with respect to the weight of link i at the current
/// operating point. Columns annihilate w (J w = 0): flows are invariant under
/// uniform weight scaling.
struct Jacobian {
  Mat j;
};

/// J = (I - W A^T pinv(L) A) diag(A^T pinv(L) p).
inline Jacobian jacobian(const Network& net) {
  Mat l = laplacian(net);
  Mat lp = pinv_laplacian(l);
  Mat a = net.incidence();
  Mat at_lp = a.transpose() * lp;  // m x n
  Vec drop = at_lp * net.p();      // per-link f_i / w_i
  Mat j = -(net.w().asDiagonal() * (at_lp * a));
  j.diagonal().array() += 1.0;
  j = j * drop.asDiagonal();
  return Jacobian{std::move(j)};
}

/// Single row of the Jacobian (gradient of f_k with respect to w), computed
/// without forming pinv(L): one grounded solve per call.
inline Vec jacobian_row(const Network& net, const detail::GroundedSolver& solver,
                        const Vec& phi, int k) {
  int m = net.num_links();
  Vec ak = net.incidence_column(k);
  Vec lak = solver.apply(ak);  // pinv(L) a_k
  Vec row(m);
  double wk = net.w()(k);
  for (int i = 0; i < m; ++i) {
    const Link& li = net.link(i);
    double drop_i = phi(li.tail) - phi(li.head);            // a_i' pinv(L) p
    double cross = lak(li.tail) - lak(li.head);             // a_i' pinv(L) a_k
    row(i) = ((i == k ? 1.0 : 0.0) - wk * cross) * drop_i;
  }
  return row;
}

/// Sign structure of column i: entries on {i} + in-links of
/// the tail + out-links of the head carry sign(f_i) (or vanish); entries on
/// out-links of the tail + in-links of the head carry the opposite sign.
inline bool column_sign_check(const Network& net, int i, double tol = 1e-9) {
  Jacobian jac = jacobian(net);
  FlowState fs = solve_flow(net);
  double scale = std::max(1.0, jac.j.cwiseAbs().maxCoeff());
  auto sgn = [&](double x) { return std::abs(x) <= tol * scale ? 0 : (x > 0 ? 1 : -1); };
  int si = sgn(fs.f(i));
  int tail = net.link(i).tail, head = net.link(i).head;

  for (int k = 0; k < net.num_links(); ++k) {
    int sk = sgn(jac.j(k, i));
    if (sk == 0) continue;
    const Link& lk = net.link(k);
    bool same_class = (k == i) || lk.head == tail || lk.tail == head;
    bool opposite_class = !same_class && (lk.tail == tail || lk.head == head);
    if (same_class && sk != si) return false;
    if (opposite_class && sk != -si) return false;
  }
  return true;
}

/// Flow change from decreasing w_i by dw, via the rank-one pseudo-inverse
/// update rather than a re-solve. dw = w_i removes the link; removal of a
/// bridge is rejected.
inline Vec finite_weight_delta(const Network& net, int i, double dw) {
  if (!(dw > 0.0) || dw > net.w()(i) + 1e-15)
    throw ValidationError("dw must lie in (0, w_i]");
  Mat l = laplacian(net);
  detail::GroundedSolver solver(l);
  Vec ai = net.incidence_column(i);
  Vec lai = solver.apply(ai);
  Vec phi = solver.apply(net.p());

  double theta = dw * (lai(net.link(i).tail) - lai(net.link(i).head));
  if (std::abs(1.0 - theta) < 1e-9) throw SolverError("bridge removal");

  double drop_i = phi(net.link(i).tail) - phi(net.link(i).head);
  double kappa = dw * drop_i / (1.0 - theta);

  int m = net.num_links();
  Vec delta(m);
  for (int k = 0; k < m; ++k) {
    const Link& lk = net.link(k);
    double cross = lai(lk.tail) - lai(lk.head);  // a_k' pinv(L) a_i
    delta(k) = kappa * (net.w()(k) * cross - (k == i ? 1.0 : 0.0));
  }
  return delta;
}

}  // namespace gridw
