#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridw {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised on invalid inputs (schema, balance, connectivity, capacity signs).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a solver cannot produce a result (singularities, disconnection mid-solve).
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Link {
  std::string id;
  int tail = -1;  // node index, flow positive tail -> head
  int head = -1;
};

/// Directed multigraph with per-link weight (susceptance) bounds, capacity
/// bounds and per-node supply-demand. Immutable by convention: operations take
/// the network by const reference and return fresh values.
class Network {
 public:
  Network() = default;

  Network(std::vector<std::string> node_ids, std::vector<Link> links,
          Vec w, Vec wl, Vec wu, Vec cl, Vec cu, Vec p)
      : node_ids_(std::move(node_ids)),
        links_(std::move(links)),
        w_(std::move(w)),
        wl_(std::move(wl)),
        wu_(std::move(wu)),
        cl_(std::move(cl)),
        cu_(std::move(cu)),
        p_(std::move(p)) {
    for (int i = 0; i < static_cast<int>(node_ids_.size()); ++i)
      node_index_[node_ids_[i]] = i;
    validate();
  }

  int num_nodes() const { return static_cast<int>(node_ids_.size()); }
  int num_links() const { return static_cast<int>(links_.size()); }

  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const std::vector<Link>& links() const { return links_; }
  const Link& link(int i) const { return links_[i]; }

  const Vec& w() const { return w_; }
  const Vec& wl() const { return wl_; }
  const Vec& wu() const { return wu_; }
  const Vec& cl() const { return cl_; }
  const Vec& cu() const { return cu_; }
  const Vec& p() const { return p_; }

  int node_index(const std::string& id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) throw ValidationError("unknown node id: " + id);
    return it->second;
  }

  int link_index(const std::string& id) const {
    for (int i = 0; i < num_links(); ++i)
      if (links_[i].id == id) return i;
    throw ValidationError("unknown link id: " + id);
  }

  /// Node-link incidence matrix: +1 at the tail, -1 at the head.
  Mat incidence() const {
    Mat a = Mat::Zero(num_nodes(), num_links());
    for (int i = 0; i < num_links(); ++i) {
      a(links_[i].tail, i) += 1.0;
      a(links_[i].head, i) -= 1.0;
    }
    return a;
  }

  /// Incidence column of a single link.
  Vec incidence_column(int i) const {
    Vec a = Vec::Zero(num_nodes());
    a(links_[i].tail) += 1.0;
    a(links_[i].head) -= 1.0;
    return a;
  }

  /// Copy with different current weights; bounds are not relaxed.
  Network with_weights(const Vec& w) const {
    Network n(*this);
    if (w.size() != w_.size()) throw ValidationError("weight vector size mismatch");
    n.w_ = w;
    n.check_weight_box(w);
    return n;
  }

  /// Copy with a different supply-demand vector (balance re-checked).
  Network with_supply_demand(const Vec& p) const {
    Network n(*this);
    if (p.size() != p_.size()) throw ValidationError("supply-demand size mismatch");
    n.p_ = p;
    n.check_balance(p);
    return n;
  }

  /// Copy with replaced weight bounds (current weights clamped into the box).
  Network with_weight_bounds(const Vec& wl, const Vec& wu) const {
    Network n(*this);
    n.wl_ = wl;
    n.wu_ = wu;
    n.w_ = n.w_.cwiseMax(wl).cwiseMin(wu);
    n.check_weight_box(n.w_);
    return n;
  }

  /// True when the undirected multigraph over the given link mask is weakly
  /// connected. Links with mask=false are treated as absent.
  bool connected(const std::vector<bool>& link_mask) const {
    int n = num_nodes();
    if (n == 0) return false;
    std::vector<int> parent(n);
    for (int v = 0; v < n; ++v) parent[v] = v;
    auto find = [&](int v) {
      while (parent[v] != v) v = parent[v] = parent[parent[v]];
      return v;
    };
    for (int i = 0; i < num_links(); ++i) {
      if (!link_mask.empty() && !link_mask[i]) continue;
      int a = find(links_[i].tail), b = find(links_[i].head);
      if (a != b) parent[a] = b;
    }
    int root = find(0);
    for (int v = 1; v < n; ++v)
      if (find(v) != root) return false;
    return true;
  }

  bool connected() const { return connected({}); }

  /// Connectivity over links with strictly positive current weight.
  bool connected_active() const {
    std::vector<bool> mask(num_links());
    for (int i = 0; i < num_links(); ++i) mask[i] = w_(i) > 0.0;
    return connected(mask);
  }

  static constexpr double kBalanceTolRel = 1e-9;

 private:
  void check_balance(const Vec& p) const {
    double scale = p.lpNorm<1>();
    if (std::abs(p.sum()) > kBalanceTolRel * std::max(1.0, scale))
      throw ValidationError("unbalanced supply-demand");
  }

  void check_weight_box(const Vec& w) const {
    for (int i = 0; i < num_links(); ++i) {
      if (!(wl_(i) >= 0.0) || !(wu_(i) > 0.0) || wl_(i) > wu_(i))
        throw ValidationError("weight bounds: need 0 <= wl <= wu, wu > 0 on link " + links_[i].id);
      if (w(i) < wl_(i) - 1e-12 || w(i) > wu_(i) + 1e-12)
        throw ValidationError("weight outside [wl, wu] on link " + links_[i].id);
    }
  }

  void validate() const {
    int n = num_nodes(), m = num_links();
    if (n < 2) throw ValidationError("network needs at least two nodes");
    if (static_cast<int>(p_.size()) != n) throw ValidationError("supply-demand size mismatch");
    for (const Vec* v : {&w_, &wl_, &wu_, &cl_, &cu_})
      if (static_cast<int>(v->size()) != m) throw ValidationError("per-link vector size mismatch");
    for (int i = 0; i < m; ++i) {
      const Link& l = links_[i];
      if (l.tail < 0 || l.tail >= n || l.head < 0 || l.head >= n)
        throw ValidationError("link endpoint out of range: " + l.id);
      if (l.tail == l.head) throw ValidationError("self-loop not allowed: " + l.id);
      if (!(cl_(i) < 0.0 && cu_(i) > 0.0))
        throw ValidationError("capacity sign: need cl < 0 < cu on link " + l.id);
    }
    check_weight_box(w_);
    check_balance(p_);
    if (!connected()) throw ValidationError("not connected");
  }

  std::vector<std::string> node_ids_;
  std::vector<Link> links_;
  Vec w_, wl_, wu_, cl_, cu_, p_;
  std::map<std::string, int> node_index_;
};

/// Link flows plus the minimum-norm phase angles (sum of phi is zero).
struct FlowState {
  Vec f;
  Vec phi;
};

/// A node-set cut: `side` holds the indices on one shore.
struct Cut {
  std::vector<int> side;
};

}  // namespace gridw
