#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gridw/network.hpp"

namespace gridw {

/// Piecewise representation of capacity-like functions of an equivalent
/// weight: strictly increasing, then constant, then strictly decreasing
/// (stored transition points delimit the plateau). Closed-form segments carry
/// the constant-capacity parallel composition exactly; sampled monotone
/// segments carry everything else with exact node values and linear
/// interpolation in between.
class PiecewiseCapacity {
 public:
  struct Segment {
    enum class Kind { Linear, Constant, Rational, Sampled };
    Kind kind = Kind::Constant;
    double x_lo = 0, x_hi = 0;
    double a = 0, b = 0;          // Linear: a*x + b; Constant: b; Rational: a*x/(x-b)
    std::vector<double> xs, ys;   // Sampled

    double eval(double x) const {
      switch (kind) {
        case Kind::Linear: return a * x + b;
        case Kind::Constant: return b;
        case Kind::Rational: return a * x / (x - b);
        case Kind::Sampled: {
          auto it = std::lower_bound(xs.begin(), xs.end(), x);
          if (it == xs.begin()) return ys.front();
          if (it == xs.end()) return ys.back();
          size_t k = static_cast<size_t>(it - xs.begin());
          double t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
          return ys[k - 1] + t * (ys[k] - ys[k - 1]);
        }
      }
      return 0;
    }

    double slope(double x, bool from_left) const {
      switch (kind) {
        case Kind::Linear: return a;
        case Kind::Constant: return 0.0;
        case Kind::Rational: return -a * b / ((x - b) * (x - b));
        case Kind::Sampled: {
          if (xs.size() < 2) return 0.0;
          auto it = std::lower_bound(xs.begin(), xs.end(), x);
          size_t k = static_cast<size_t>(it - xs.begin());
          if (it != xs.end() && *it == x && !from_left) ++k;  // cell to the right
          if (k == 0) k = 1;
          if (k >= xs.size()) k = xs.size() - 1;
          return (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
        }
      }
      return 0;
    }
  };

  PiecewiseCapacity() = default;

  static PiecewiseCapacity constant(double value, double lo, double hi) {
    PiecewiseCapacity c;
    c.lo_ = lo;
    c.hi_ = hi;
    c.rise_end_ = lo;
    c.fall_begin_ = hi;
    c.max_value_ = value;
    c.s1_ = true;
    Segment s;
    s.kind = Segment::Kind::Constant;
    s.x_lo = lo;
    s.x_hi = hi;
    s.b = value;
    c.segs_.push_back(s);
    return c;
  }

  /// Assembles a function from explicit segments; transition points are
  /// located from the segment structure.
  static PiecewiseCapacity from_segments(std::vector<Segment> segs, bool s1) {
    PiecewiseCapacity c;
    c.segs_ = std::move(segs);
    c.lo_ = c.segs_.front().x_lo;
    c.hi_ = c.segs_.back().x_hi;
    c.s1_ = s1;
    c.max_value_ = -std::numeric_limits<double>::infinity();
    for (const Segment& s : c.segs_)
      c.max_value_ = std::max({c.max_value_, s.eval(s.x_lo), s.eval(s.x_hi)});
    double tol = 1e-12 * std::max(1.0, std::abs(c.max_value_));
    c.rise_end_ = c.lo_;
    for (const Segment& s : c.segs_) {
      if (s.eval(s.x_lo) >= c.max_value_ - tol) break;  // plateau reached
      c.rise_end_ = s.x_hi;
      if (s.eval(s.x_hi) >= c.max_value_ - tol) break;
    }
    c.fall_begin_ = c.hi_;
    for (auto it = c.segs_.rbegin(); it != c.segs_.rend(); ++it) {
      if (it->eval(it->x_hi) >= c.max_value_ - tol) break;
      c.fall_begin_ = it->x_lo;
      if (it->eval(it->x_lo) >= c.max_value_ - tol) break;
    }
    if (c.fall_begin_ < c.rise_end_) c.fall_begin_ = c.rise_end_;
    return c;
  }

  /// Canonical three-phase assembly from monotone node arrays. Node values are
  /// kept exactly; the plateau is snapped where values sit within tolerance of
  /// the maximum.
  static PiecewiseCapacity from_samples(std::vector<double> xs, std::vector<double> ys,
                                        bool s1) {
    if (xs.size() != ys.size() || xs.empty())
      throw ValidationError("piecewise: bad sample arrays");
    // drop duplicate abscissae
    std::vector<double> x2{xs[0]}, y2{ys[0]};
    for (size_t k = 1; k < xs.size(); ++k) {
      if (xs[k] <= x2.back() + 1e-14 * std::max(1.0, std::abs(x2.back()))) continue;
      x2.push_back(xs[k]);
      y2.push_back(ys[k]);
    }
    double vmax = *std::max_element(y2.begin(), y2.end());
    double snap = 1e-9 * std::max(1.0, std::abs(vmax));
    size_t first_max = 0, last_max = y2.size() - 1;
    while (first_max < y2.size() && y2[first_max] < vmax - snap) ++first_max;
    last_max = y2.size() - 1;
    while (last_max > 0 && y2[last_max] < vmax - snap) --last_max;

    std::vector<Segment> segs;
    if (first_max > 0) {
      Segment s;
      s.kind = Segment::Kind::Sampled;
      s.xs.assign(x2.begin(), x2.begin() + first_max + 1);
      s.ys.assign(y2.begin(), y2.begin() + first_max + 1);
      s.ys.back() = vmax;
      for (size_t k = 1; k < s.ys.size(); ++k) s.ys[k] = std::max(s.ys[k], s.ys[k - 1]);
      s.x_lo = s.xs.front();
      s.x_hi = s.xs.back();
      segs.push_back(std::move(s));
    }
    if (last_max > first_max || segs.empty()) {
      Segment mid;
      mid.kind = Segment::Kind::Constant;
      mid.b = vmax;
      mid.x_lo = x2[first_max];
      mid.x_hi = x2[last_max];
      segs.push_back(mid);
    }
    if (last_max + 1 < x2.size()) {
      Segment s;
      s.kind = Segment::Kind::Sampled;
      s.xs.assign(x2.begin() + last_max, x2.end());
      s.ys.assign(y2.begin() + last_max, y2.end());
      s.ys.front() = vmax;
      for (size_t k = 1; k < s.ys.size(); ++k) s.ys[k] = std::min(s.ys[k], s.ys[k - 1]);
      s.x_lo = s.xs.front();
      s.x_hi = s.xs.back();
      segs.push_back(std::move(s));
    }
    PiecewiseCapacity c = from_segments(std::move(segs), s1);
    c.rise_end_ = x2[first_max];
    c.fall_begin_ = x2[last_max];
    c.max_value_ = vmax;
    return c;
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double rise_end() const { return rise_end_; }
  double fall_begin() const { return fall_begin_; }
  double max_value() const { return max_value_; }
  bool s1() const { return s1_; }

  bool is_constant() const {
    return segs_.size() == 1 && segs_[0].kind == Segment::Kind::Constant;
  }

  const std::vector<Segment>& segments() const { return segs_; }

  double eval(double x) const {
    x = std::clamp(x, lo_, hi_);
    return locate(x).eval(x);
  }

  double value_lo() const { return eval(lo_); }
  double value_hi() const { return eval(hi_); }

  /// One-sided slopes; NaN on the missing side at a domain endpoint.
  std::pair<double, double> one_sided_slopes(double x) const {
    double nan = std::numeric_limits<double>::quiet_NaN();
    double left = nan, right = nan;
    double tol = 1e-12 * std::max(1.0, std::abs(hi_));
    for (const Segment& s : segs_) {
      if (x > s.x_lo + tol && x <= s.x_hi + tol) left = s.slope(std::min(x, s.x_hi), true);
      if (x >= s.x_lo - tol && x < s.x_hi - tol) right = s.slope(std::max(x, s.x_lo), false);
    }
    if (x <= lo_ + tol) left = nan;
    if (x >= hi_ - tol) right = nan;
    return {left, right};
  }

  /// Smallest x on the rising phase with value y (y clamped to the range).
  double inv_rising(double y) const {
    if (y >= max_value_) return rise_end_;
    if (y <= value_lo()) return lo_;
    for (const Segment& s : segs_) {
      if (s.x_lo >= rise_end_) break;
      if (y > s.eval(s.x_hi)) continue;
      return invert_in_segment(s, y, /*rising=*/true);
    }
    return rise_end_;
  }

  /// Largest x on the falling phase with value y.
  double inv_falling(double y) const {
    if (y >= max_value_) return fall_begin_;
    if (y <= value_hi()) return hi_;
    for (auto it = segs_.rbegin(); it != segs_.rend(); ++it) {
      const Segment& s = *it;
      if (s.x_hi <= fall_begin_) break;
      if (y > s.eval(s.x_lo)) continue;
      return invert_in_segment(s, y, /*rising=*/false);
    }
    return fall_begin_;
  }

 private:
  const Segment& locate(double x) const {
    for (const Segment& s : segs_)
      if (x <= s.x_hi || &s == &segs_.back()) return s;
    return segs_.back();
  }

  static double invert_in_segment(const Segment& s, double y, bool rising) {
    switch (s.kind) {
      case Segment::Kind::Linear:
        return (y - s.b) / s.a;
      case Segment::Kind::Constant:
        return rising ? s.x_lo : s.x_hi;
      case Segment::Kind::Rational:
        // y = a x / (x - b)  =>  x = y b / (y - a)
        return y * s.b / (y - s.a);
      case Segment::Kind::Sampled: {
        const auto& xs = s.xs;
        const auto& ys = s.ys;
        if (rising) {
          auto it = std::lower_bound(ys.begin(), ys.end(), y);
          if (it == ys.begin()) return xs.front();
          if (it == ys.end()) return xs.back();
          size_t k = static_cast<size_t>(it - ys.begin());
          double dy = ys[k] - ys[k - 1];
          double t = dy > 0 ? (y - ys[k - 1]) / dy : 0.0;
          return xs[k - 1] + t * (xs[k] - xs[k - 1]);
        }
        auto it = std::lower_bound(ys.rbegin(), ys.rend(), y);
        size_t back = static_cast<size_t>(it - ys.rbegin());
        if (back == 0) return xs.back();
        if (back >= ys.size()) return xs.front();
        size_t k = ys.size() - 1 - back;  // ys[k] >= y >= ys[k+1]
        double dy = ys[k] - ys[k + 1];
        double t = dy > 0 ? (ys[k] - y) / dy : 0.0;
        return xs[k] + t * (xs[k + 1] - xs[k]);
      }
    }
    return s.x_lo;
  }

  double lo_ = 0, hi_ = 0;
  double rise_end_ = 0, fall_begin_ = 0;
  double max_value_ = 0;
  bool s1_ = false;
  std::vector<Segment> segs_;
};

/// Closed-form equivalent capacity of a parallel bundle with constant
/// per-link capacities: linear ramp, saturation plateau, then rational decay
/// as links pin at their upper weights.
inline PiecewiseCapacity eqcap_parallel_constant(const Vec& wl, const Vec& wu, const Vec& c) {
  int n = static_cast<int>(c.size());
  if (n == 0) throw ValidationError("eqcap: empty bundle");
  for (int i = 0; i < n; ++i)
    if (!(wl(i) > 0.0) || !(c(i) > 0.0) || wl(i) > wu(i))
      throw ValidationError("eqcap: need 0 < wl <= wu and c > 0");

  double weq_lo = wl.sum(), weq_hi = wu.sum();
  double g_max = (c.array() / wl.array()).minCoeff();
  auto ghat_minus = [&](double x) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += std::min(c(i) / x, wu(i));
    return s;
  };
  double ubar = ghat_minus(g_max);

  using Seg = PiecewiseCapacity::Segment;
  std::vector<Seg> segs;
  double tol = 1e-12 * std::max(1.0, weq_hi);

  if (ubar > weq_lo + tol) {
    Seg s;
    s.kind = Seg::Kind::Linear;
    s.a = g_max;
    s.b = 0.0;
    s.x_lo = weq_lo;
    s.x_hi = ubar;
    segs.push_back(s);
  }

  // saturation breakpoints along the falling phase
  std::vector<double> pts{ubar};
  Vec sat_at(n);
  for (int i = 0; i < n; ++i) {
    double ti = c(i) / wu(i);
    sat_at(i) = ti >= g_max ? ubar : ghat_minus(ti);
    if (sat_at(i) > ubar + tol && sat_at(i) < weq_hi - tol) pts.push_back(sat_at(i));
  }
  pts.push_back(weq_hi);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [&](double a, double b) { return std::abs(a - b) <= tol; }),
            pts.end());

  for (size_t k = 0; k + 1 < pts.size(); ++k) {
    double p = pts[k], q = pts[k + 1];
    double ssum = 0, ksum = 0;
    for (int i = 0; i < n; ++i) {
      if (sat_at(i) <= p + tol)
        ssum += wu(i);
      else
        ksum += c(i);
    }
    Seg s;
    s.x_lo = p;
    s.x_hi = q;
    if (ssum <= tol) {
      s.kind = Seg::Kind::Constant;
      s.b = ksum;
    } else {
      s.kind = Seg::Kind::Rational;
      s.a = ksum;
      s.b = ssum;
    }
    segs.push_back(s);
  }
  if (segs.empty()) {
    Seg s;
    s.kind = Seg::Kind::Constant;
    s.b = weq_lo * g_max;
    s.x_lo = weq_lo;
    s.x_hi = weq_hi;
    segs.push_back(s);
  }
  return PiecewiseCapacity::from_segments(std::move(segs), /*s1=*/true);
}

/// One-sided slopes of a capacity function (closed form on analytic segments,
/// interpolant slopes on sampled ones).
inline std::pair<double, double> gderivatives(const PiecewiseCapacity& cap, double x) {
  if (x < cap.lo() - 1e-12 || x > cap.hi() + 1e-12)
    throw ValidationError("gderivatives: x outside domain");
  return cap.one_sided_slopes(x);
}

/// Structural check: continuous, rising to the first transition point, flat
/// across the plateau, falling after, on a uniform probe grid.
inline bool s0_structure_ok(const PiecewiseCapacity& cap, int grid = 200) {
  double lo = cap.lo(), hi = cap.hi();
  double scale = std::max(1.0, std::abs(cap.max_value()));
  double tol = 1e-7 * scale;
  if (hi <= lo) return true;

  auto monotone = [&](double a, double b, int dir) {
    if (b <= a) return true;
    double prev = cap.eval(a);
    for (int k = 1; k <= grid; ++k) {
      double v = cap.eval(a + (b - a) * k / grid);
      if (dir > 0 && v < prev - tol) return false;
      if (dir < 0 && v > prev + tol) return false;
      prev = v;
    }
    return true;
  };
  if (!monotone(lo, cap.rise_end(), +1)) return false;
  if (!monotone(cap.fall_begin(), hi, -1)) return false;
  for (int k = 0; k <= grid; ++k) {
    double span = cap.fall_begin() - cap.rise_end();
    if (span <= 0) break;
    double v = cap.eval(cap.rise_end() + span * k / grid);
    if (std::abs(v - cap.max_value()) > tol) return false;
  }
  // continuity across segment joints
  for (const auto& s : cap.segments()) {
    double before = cap.eval(std::nextafter(s.x_lo, lo));
    double at = s.eval(s.x_lo);
    if (std::abs(before - at) > 1e-6 * scale) return false;
  }
  return std::abs(cap.eval(cap.rise_end()) - cap.max_value()) <= 1e-6 * scale;
}

/// Numeric certificate of the slope condition on the rising phase: one-sided
/// slopes dominate the secant value/x up to tolerance.
inline bool s1_certificate_ok(const PiecewiseCapacity& cap, int grid = 200) {
  if (!s0_structure_ok(cap, grid)) return false;
  double lo = cap.lo(), re = cap.rise_end();
  if (re <= lo) return true;
  double scale = std::max(1.0, std::abs(cap.max_value()));
  for (int k = 0; k < grid; ++k) {
    double x = lo + (re - lo) * (k + 0.5) / grid;
    auto [l, r] = cap.one_sided_slopes(x);
    double m = std::numeric_limits<double>::infinity();
    if (!std::isnan(l)) m = std::min(m, l);
    if (!std::isnan(r)) m = std::min(m, r);
    if (std::isinf(m)) continue;
    double secant = cap.eval(x) / x;
    if (m < secant * (1.0 - 1e-6) - 1e-7 * scale) return false;
  }
  return true;
}

}  // namespace gridw
