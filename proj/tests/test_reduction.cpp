#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridw/mincut.hpp"
#include "gridw/reduction.hpp"
#include "test_support.hpp"

using namespace gridw;
using gridw::testing::make_network;
using gridw::testing::random_network;

namespace {

// Figure-style double-diamond: i1=(1,2) i2=(1,3) i3=(2,4) i4=(3,4) i5=(3,4).
Network fig5_instance(std::vector<double> p = {1e-6, 0, 0, -1e-6}) {
  return make_network(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {2, 3}},
                      {9, 10, 18, 5, 8}, {4, 3, 4, 1, 2}, {9, 10, 18, 5, 8},
                      {16, 18, 20, 10, 10}, p);
}

Network fig6_instance() {
  return make_network(
      7,
      {{0, 1}, {0, 2}, {6, 2}, {3, 1}, {3, 6}, {4, 5}, {4, 5}, {4, 2}, {4, 1}, {1, 5}, {2, 5}},
      std::vector<double>(11, 1.0), std::vector<double>(11, 0.5),
      std::vector<double>(11, 1.0), std::vector<double>(11, 1.0),
      {1, -1, -1, 1, 0, 0, 0});
}

bool site_is_valid(const Network& net, const ReductionSite& site) {
  if (site.e2.size() < 2) return false;
  std::vector<bool> in_e2(net.num_links(), false);
  for (int i : site.e2) in_e2[i] = true;
  double ptol = 1e-9 * std::max(1.0, net.p().lpNorm<1>());
  // interior component nodes carry no injection
  for (int i : site.e2)
    for (int v : {net.link(i).tail, net.link(i).head})
      if (v != site.v1 && v != site.v2 && std::abs(net.p()(v)) > ptol) return false;
  // interior nodes touch no outside link
  for (int i = 0; i < net.num_links(); ++i) {
    if (in_e2[i]) continue;
    for (int v : {net.link(i).tail, net.link(i).head}) {
      bool interior = v != site.v1 && v != site.v2;
      if (!interior) continue;
      for (int j : site.e2)
        if (net.link(j).tail == v || net.link(j).head == v) return false;
    }
  }
  return true;
}

// 1-D maximization helper: coarse grid plus golden-section refinement around
// the incumbent (objectives here are quasiconcave in the free weight).
template <typename F>
double refine_max(F f, double lo, double hi, int grid = 4000) {
  double best = -std::numeric_limits<double>::infinity(), bx = lo;
  for (int k = 0; k <= grid; ++k) {
    double x = lo + (hi - lo) * k / grid;
    double v = f(x);
    if (v > best) {
      best = v;
      bx = x;
    }
  }
  double a = std::max(lo, bx - 2 * (hi - lo) / grid);
  double b = std::min(hi, bx + 2 * (hi - lo) / grid);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  return std::max({best, f1, f2});
}

// Two-terminal capacity oracle for a parallel bundle under a weight-sum pin.
double parallel_pin_oracle(const std::vector<PiecewiseCapacity>& caps, double weq) {
  REQUIRE(caps.size() == 2);
  double lo = std::max(caps[0].lo(), weq - caps[1].hi());
  double hi = std::min(caps[0].hi(), weq - caps[1].lo());
  if (hi < lo) return std::numeric_limits<double>::quiet_NaN();
  auto value = [&](double w1) {
    double w2 = weq - w1;
    return std::min(caps[0].eval(w1) / w1, caps[1].eval(w2) / w2);
  };
  return weq * refine_max(value, lo, hi);
}

// Series pin oracle: harmonic weight fixed, common unit flow.
double series_pin_oracle(const std::vector<PiecewiseCapacity>& caps, double weq) {
  REQUIRE(caps.size() == 2);
  // 1/w1 = 1/weq - 1/w2 with w2 inside its box
  double inv_hi = 1.0 / weq - 1.0 / caps[1].hi();
  double inv_lo = 1.0 / weq - 1.0 / caps[1].lo();
  if (inv_hi <= 0) return std::numeric_limits<double>::quiet_NaN();
  double w1_lo = std::max(caps[0].lo(), 1.0 / inv_hi);
  double w1_hi = inv_lo > 0 ? std::min(caps[0].hi(), 1.0 / inv_lo) : caps[0].hi();
  if (w1_hi < w1_lo - 1e-9) return std::numeric_limits<double>::quiet_NaN();
  w1_hi = std::max(w1_hi, w1_lo);
  auto value = [&](double w1) {
    double inv = 1.0 / weq - 1.0 / w1;
    if (inv <= 0) return -std::numeric_limits<double>::infinity();
    double w2 = std::clamp(1.0 / inv, caps[1].lo(), caps[1].hi());
    return std::min(caps[0].eval(w1), caps[1].eval(w2));
  };
  return refine_max(value, w1_lo, w1_hi);
}

}  // namespace

TEST_CASE("equivalent weight") {
  SECTION("parallel pair sums") {
    Network net = make_network(2, {{0, 1}, {0, 1}}, {2, 3}, {1, 1}, {4, 4}, {5, 5}, {1, -1});
    REQUIRE(equivalent_weight(net, 0, 1) == Catch::Approx(5.0));
  }
  SECTION("series pair combines harmonically") {
    Network net = make_network(3, {{0, 1}, {1, 2}}, {2, 3}, {1, 1}, {4, 4}, {5, 5}, {1, 0, -1});
    REQUIRE(equivalent_weight(net, 0, 2) == Catch::Approx(1.2));
  }
  SECTION("diamond matches the dense pseudo-inverse route") {
    Network net = gridw::testing::fig1_network({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1},
                                               {1, 1, 1, 1, 1}, {2, 2, 2, 2, 2},
                                               {1, 0, 0, -1});
    Mat lp = pinv_laplacian(laplacian(net));
    Vec a = Vec::Zero(4);
    a(0) = 1;
    a(3) = -1;
    double oracle = 1.0 / (a.dot(lp * a));
    REQUIRE(equivalent_weight(net, 0, 3) == Catch::Approx(oracle).margin(1e-12));
  }
  SECTION("never decreases when weights grow") {
    std::mt19937_64 rng(401);
    for (int trial = 0; trial < 30; ++trial) {
      Network net = random_network(rng, 8, 13);
      std::uniform_int_distribution<int> nd(0, net.num_nodes() - 1);
      int v1 = nd(rng), v2 = nd(rng);
      if (v1 == v2) continue;
      double h0 = equivalent_weight(net, v1, v2);
      Vec w2 = net.w();
      std::uniform_real_distribution<double> u(0.0, 0.3);
      for (int i = 0; i < net.num_links(); ++i) w2(i) *= 1.0 + u(rng);
      Network bigger = net.with_weight_bounds(net.wl(), w2.cwiseMax(net.wu()));
      double h1 = equivalent_weight(bigger.with_weights(w2), v1, v2);
      REQUIRE(h1 >= h0 - 1e-10);
    }
  }
}

TEST_CASE("reducibility detection") {
  SECTION("supply-demand corners leave a reducible middle") {
    Network net = fig6_instance();
    auto site = find_reduction(net);
    REQUIRE(site.has_value());
    REQUIRE(site_is_valid(net, *site));
  }
  SECTION("fully injecting clique is irreducible") {
    Network k4 = make_network(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}},
                              std::vector<double>(6, 1.0), std::vector<double>(6, 0.5),
                              std::vector<double>(6, 1.0), std::vector<double>(6, 2.0),
                              {1, 1, -1, -1});
    REQUIRE_FALSE(find_reduction(k4).has_value());
  }
  SECTION("triangle hanging off the main path") {
    Network net = make_network(5, {{0, 1}, {1, 2}, {1, 3}, {2, 3}, {3, 4}, {4, 2}},
                               std::vector<double>(6, 1.0), std::vector<double>(6, 0.5),
                               std::vector<double>(6, 1.0), std::vector<double>(6, 2.0),
                               {1, -1, 0, 0, 0});
    auto site = find_reduction(net);
    REQUIRE(site.has_value());
    REQUIRE(site_is_valid(net, *site));
  }
}

TEST_CASE("single reduction with flow-equivalence certificate") {
  SECTION("worked reducible instances") {
    for (Network net : {fig5_instance({1, 0, 0, -1}), fig6_instance()}) {
      auto site = find_reduction(net);
      REQUIRE(site.has_value());
      ReductionResult r = reduce_and_check(net, *site);
      REQUIRE(r.certificate < 1e-8);
      REQUIRE(r.weq_lo <= r.weq + 1e-12);
      REQUIRE(r.weq <= r.weq_hi + 1e-12);
    }
  }
  SECTION("parallel component splits proportionally to weights") {
    Network net = make_network(3, {{0, 1}, {1, 2}, {1, 2}}, {1, 2, 3}, {0.5, 1, 1},
                               {2, 4, 4}, {5, 5, 5}, {1, 0, -1});
    ReductionSite site{1, 2, {1, 2}};
    ReductionResult r = reduce_and_check(net, site);
    Vec f = solve_flow(net).f;
    REQUIRE(f(1) / f(2) == Catch::Approx(2.0 / 3.0));
    REQUIRE(r.certificate < 1e-10);
    REQUIRE(r.weq == Catch::Approx(5.0));
  }
  SECTION("series component carries the terminal throughput") {
    Network net = make_network(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, {1, 1, 1, 1},
                               {0.5, 0.5, 0.5, 0.5}, {2, 2, 2, 2}, {5, 5, 5, 5},
                               {1, 0, 0, -1});
    auto site = find_reduction(net);
    REQUIRE(site.has_value());
    ReductionResult r = reduce_and_check(net, *site);
    REQUIRE(r.certificate < 1e-10);
  }
  SECTION("random reducible networks keep certificates tight") {
    std::mt19937_64 rng(409);
    int found = 0;
    for (int trial = 0; trial < 60 && found < 12; ++trial) {
      Network net = random_network(rng, 9, 14);
      auto site = find_reduction(net);
      if (!site) continue;
      ReductionResult r = reduce_and_check(net, *site);
      REQUIRE(r.certificate < 1e-8);
      ++found;
    }
    REQUIRE(found > 0);
  }
}

TEST_CASE("series composition") {
  SECTION("constant capacities collapse to the minimum") {
    std::vector<PiecewiseCapacity> caps{PiecewiseCapacity::constant(4.0, 1, 2),
                                        PiecewiseCapacity::constant(2.5, 2, 5)};
    PiecewiseCapacity c = compose_series(caps);
    REQUIRE(c.lo() == Catch::Approx(1.0 / (1.0 / 1 + 1.0 / 2)));
    REQUIRE(c.hi() == Catch::Approx(1.0 / (1.0 / 2 + 1.0 / 5)));
    for (double x : {c.lo(), 0.5 * (c.lo() + c.hi()), c.hi()})
      REQUIRE(c.eval(x) == Catch::Approx(2.5));
  }
  SECTION("identical piecewise inputs keep the shared maximum") {
    Vec wl(2), wu(2), cc(2);
    wl << 1, 2;
    wu << 5, 8;
    cc << 10, 10;
    PiecewiseCapacity base = eqcap_parallel_constant(wl, wu, cc);
    PiecewiseCapacity c = compose_series({base, base});
    REQUIRE(c.max_value() == Catch::Approx(base.max_value()).margin(1e-9));
    REQUIRE(s0_structure_ok(c));
    REQUIRE(s1_certificate_ok(c));
  }
  SECTION("chain of a constant and a piecewise input matches the pin oracle") {
    Vec wl(2), wu(2), cc(2);
    wl << 1, 2;
    wu << 5, 8;
    cc << 10, 10;
    PiecewiseCapacity c45 = eqcap_parallel_constant(wl, wu, cc);
    PiecewiseCapacity c2 = PiecewiseCapacity::constant(18.0, 3.0, 10.0);
    PiecewiseCapacity chain = compose_series({c2, c45});
    for (int k = 0; k <= 20; ++k) {
      double weq = chain.lo() + (chain.hi() - chain.lo()) * k / 20;
      double oracle = series_pin_oracle({c2, c45}, weq);
      REQUIRE(chain.eval(weq) == Catch::Approx(oracle).margin(1e-3));
    }
    REQUIRE(s0_structure_ok(chain));
    REQUIRE(s1_certificate_ok(chain));
  }
  SECTION("witness achieves the composed value") {
    Vec wl(2), wu(2), cc(2);
    wl << 1, 2;
    wu << 5, 8;
    cc << 10, 10;
    std::vector<PiecewiseCapacity> caps{PiecewiseCapacity::constant(18.0, 3.0, 10.0),
                                        eqcap_parallel_constant(wl, wu, cc)};
    PiecewiseCapacity chain = compose_series(caps);
    for (int k = 1; k < 12; ++k) {
      double weq = chain.lo() + (chain.hi() - chain.lo()) * k / 12;
      Vec w = compose_series_witness(caps, chain, weq);
      double harm = 1.0 / (1.0 / w(0) + 1.0 / w(1));
      REQUIRE(harm == Catch::Approx(weq).margin(1e-6 * weq));
      for (int i = 0; i < 2; ++i) {
        REQUIRE(w(i) >= caps[i].lo() - 1e-9);
        REQUIRE(w(i) <= caps[i].hi() + 1e-9);
        REQUIRE(caps[i].eval(w(i)) >= chain.eval(weq) - 2e-3);
      }
    }
  }
}

TEST_CASE("parallel composition") {
  Vec wl(2), wu(2), cc(2);
  wl << 1, 2;
  wu << 5, 8;
  cc << 10, 10;
  SECTION("constant inputs reproduce the closed form pointwise") {
    std::vector<PiecewiseCapacity> caps{PiecewiseCapacity::constant(10, 1, 5),
                                        PiecewiseCapacity::constant(10, 2, 8)};
    PiecewiseCapacity composed = compose_parallel(caps);
    PiecewiseCapacity closed = eqcap_parallel_constant(wl, wu, cc);
    for (int k = 0; k <= 200; ++k) {
      double weq = closed.lo() + (closed.hi() - closed.lo()) * k / 200;
      REQUIRE(composed.eval(weq) == Catch::Approx(closed.eval(weq)).margin(1e-9));
    }
  }
  SECTION("bundle of piecewise inputs matches the pin oracle") {
    PiecewiseCapacity c45 = eqcap_parallel_constant(wl, wu, cc);
    PiecewiseCapacity c13 = PiecewiseCapacity::constant(16.0, 2.0, 6.0);
    PiecewiseCapacity both = compose_parallel({c13, c45});
    for (int k = 0; k <= 20; ++k) {
      double weq = both.lo() + (both.hi() - both.lo()) * k / 20;
      double oracle = parallel_pin_oracle({c13, c45}, weq);
      REQUIRE(both.eval(weq) == Catch::Approx(oracle).margin(2e-3));
    }
    REQUIRE(s0_structure_ok(both));
    REQUIRE(s1_certificate_ok(both));
  }
  SECTION("maximum equals the closed-form robustness value") {
    PiecewiseCapacity closed = eqcap_parallel_constant(wl, wu, cc);
    double gmax = std::min(cc(0) / wl(0), cc(1) / wl(1));
    double alpha = 0;
    for (int i = 0; i < 2; ++i)
      alpha += wu(i) < cc(i) / gmax ? gmax * wu(i) : cc(i);
    REQUIRE(closed.max_value() == Catch::Approx(alpha).margin(1e-12));
  }
  SECTION("witness achieves the composed value") {
    PiecewiseCapacity c45 = eqcap_parallel_constant(wl, wu, cc);
    PiecewiseCapacity c13 = PiecewiseCapacity::constant(16.0, 2.0, 6.0);
    std::vector<PiecewiseCapacity> caps{c13, c45};
    PiecewiseCapacity both = compose_parallel(caps);
    for (int k = 1; k < 12; ++k) {
      double weq = both.lo() + (both.hi() - both.lo()) * k / 12;
      Vec w = compose_parallel_witness(caps, both, weq);
      REQUIRE(w.sum() == Catch::Approx(weq).margin(1e-6 * weq));
      double z = both.eval(weq) / weq;
      for (int i = 0; i < 2; ++i) {
        REQUIRE(w(i) >= caps[i].lo() - 1e-9);
        REQUIRE(w(i) <= caps[i].hi() + 1e-9);
        REQUIRE(caps[i].eval(w(i)) / w(i) >= z - 2e-3);
      }
    }
  }
}

TEST_CASE("sequential tree reduction") {
  SECTION("double diamond collapses to a single link") {
    Network net = fig5_instance();
    TreeReduceOutcome out = tree_reduce(net);
    REQUIRE(out.link_reducible);
    REQUIRE(out.tree_reducible);
    int parallels = 0, seriess = 0;
    for (const auto& s : out.steps) {
      if (s.kind == ReductionStep::Kind::parallel) ++parallels;
      if (s.kind == ReductionStep::Kind::series) ++seriess;
    }
    REQUIRE(parallels == 2);
    REQUIRE(seriess == 2);
    // every intermediate capacity function keeps the monotone structure
    for (const auto& s : out.steps) {
      REQUIRE(s.caps.has_value());
      REQUIRE(s0_structure_ok(s.caps->fwd));
      REQUIRE(s1_certificate_ok(s.caps->fwd));
      REQUIRE(s.caps->fwd.max_value() > 0.0);
      REQUIRE(s.caps->bwd.max_value() > 0.0);
      for (int k = 0; k <= 10; ++k) {
        double weq = s.wl + (s.wu - s.wl) * k / 10.0;
        REQUIRE(s.caps->fwd.eval(weq) > 0.0);
        REQUIRE(s.caps->bwd.eval(weq) > 0.0);
      }
    }
  }
  SECTION("extra supply node breaks tree reducibility") {
    Network net = fig5_instance({1, 1, 0, -2});
    TreeReduceOutcome out = tree_reduce(net);
    REQUIRE_FALSE(out.tree_reducible);
    REQUIRE_FALSE(out.link_reducible);
  }
  SECTION("a star with injections everywhere is left alone") {
    Network star = make_network(4, {{0, 1}, {0, 2}, {0, 3}}, {1, 1, 1}, {0.5, 0.5, 0.5},
                                {1, 1, 1}, {2, 2, 2}, {3, -1, -1, -1});
    TreeReduceOutcome out = tree_reduce(star);
    REQUIRE(out.steps.empty());
    REQUIRE(out.tree_reducible);
    REQUIRE(out.terminal.num_links() == 3);
  }
}

TEST_CASE("multilevel margin") {
  SECTION("fully injecting trees reproduce the residual formula") {
    // injections at every node: the nongenerative restriction is vacuous
    Network net = make_network(4, {{0, 1}, {1, 2}, {2, 3}}, {1, 2, 1}, {0.5, 1, 0.5},
                               {2, 3, 2}, {2, 3, 2}, {1.5, -0.5, -0.25, -0.75});
    MultilevelReport rep = multilevel_margin(net);
    MarginReport direct = margin(net);
    REQUIRE(rep.nu_star == Catch::Approx(direct.nu_star).margin(1e-9));
    REQUIRE(rep.terminal_tree);
  }
  SECTION("general trees match the support-restricted vertex sweep") {
    std::mt19937_64 rng(419);
    for (int trial = 0; trial < 8; ++trial) {
      Network net = random_network(rng, 7, 0, false, true);
      MultilevelReport rep = multilevel_margin(net);
      double ptol = 1e-9 * std::max(1.0, net.p().lpNorm<1>());
      double expect = std::numeric_limits<double>::infinity();
      for (int s = 0; s < net.num_nodes(); ++s) {
        for (int t = 0; t < net.num_nodes(); ++t) {
          if (s == t) continue;
          if (std::abs(net.p()(s)) <= ptol || std::abs(net.p()(t)) <= ptol) continue;
          Vec d = Vec::Zero(net.num_nodes());
          d(s) = 0.5;
          d(t) = -0.5;
          expect = std::min(expect, nu0(net, d));
        }
      }
      REQUIRE(rep.nu_star == Catch::Approx(expect).margin(1e-6));
      REQUIRE(rep.terminal_tree);
    }
  }
  SECTION("double diamond goes through the exact calculus") {
    Network net = fig5_instance();
    MultilevelReport rep = multilevel_margin(net);
    REQUIRE(rep.exact);
    REQUIRE(rep.max_certificate < 1e-8);
    REQUIRE(rep.terminal_tree);
    EquivalentCapacity ec = equivalent_capacity(net, 0, 3);
    REQUIRE(rep.nu_star ==
            Catch::Approx(2.0 * (ec.upper.max_value() - 1e-6)).margin(1e-9));
  }
  SECTION("equivalent capacities straddle zero") {
    Network net = fig5_instance();
    EquivalentCapacity ec = equivalent_capacity(net, 0, 3);
    for (int k = 0; k <= 40; ++k) {
      double weq = ec.weq_lo + (ec.weq_hi - ec.weq_lo) * k / 40.0;
      REQUIRE(ec.upper.eval(weq) > 0.0);
      REQUIRE(ec.lower_mag.eval(weq) > 0.0);
    }
  }
}
