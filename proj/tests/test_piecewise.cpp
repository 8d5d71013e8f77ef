#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridw/piecewise.hpp"

using namespace gridw;

namespace {

// Fine 1-D grid oracle for a two-link constant-capacity parallel bundle:
// C(weq) = weq * max over feasible splits of min_i c_i / w_i.
double parallel2_oracle(double weq, const Vec& wl, const Vec& wu, const Vec& c,
                        int grid = 4001) {
  double lo = std::max(wl(0), weq - wu(1));
  double hi = std::min(wu(0), weq - wl(1));
  if (hi < lo) {
    if (hi < lo - 1e-9) return std::numeric_limits<double>::quiet_NaN();
    hi = lo;  // endpoint rounding
  }
  double best = -1;
  for (int k = 0; k <= grid; ++k) {
    double w1 = lo + (hi - lo) * k / grid;
    double w2 = weq - w1;
    double v = std::min(c(0) / w1, c(1) / w2);
    best = std::max(best, v);
  }
  return weq * best;
}

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("constant-capacity parallel bundle closed form") {
  SECTION("worked two-link instance") {
    Vec wl = vec2(1, 1), wu = vec2(2, 3), c = vec2(1, 2);
    PiecewiseCapacity cap = eqcap_parallel_constant(wl, wu, c);
    REQUIRE(cap.lo() == Catch::Approx(2.0));
    REQUIRE(cap.hi() == Catch::Approx(5.0));
    REQUIRE(cap.max_value() == Catch::Approx(3.0));  // full saturation c1 + c2
    REQUIRE(cap.eval(2.0) == Catch::Approx(2.0));    // weq_lo * min(c/wl)
    REQUIRE(cap.rise_end() == Catch::Approx(3.0));
    REQUIRE(cap.fall_begin() == Catch::Approx(4.5));
    REQUIRE(cap.eval(4.0) == Catch::Approx(3.0));
    REQUIRE(cap.eval(5.0) == Catch::Approx(2.5));  // 1 * 5 / (5 - 3)
    REQUIRE(cap.s1());
    REQUIRE(s0_structure_ok(cap));
    REQUIRE(s1_certificate_ok(cap));
  }
  SECTION("single link is constant") {
    Vec wl(1), wu(1), c(1);
    wl << 1.5;
    wu << 4.0;
    c << 2.5;
    PiecewiseCapacity cap = eqcap_parallel_constant(wl, wu, c);
    for (double x : {1.5, 2.0, 3.3, 4.0}) REQUIRE(cap.eval(x) == Catch::Approx(2.5));
  }
  SECTION("matches the fine grid oracle on random two-link instances") {
    std::mt19937_64 rng(307);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    for (int trial = 0; trial < 40; ++trial) {
      Vec wl = vec2(u(rng), u(rng));
      Vec wu = wl + vec2(u(rng), u(rng));
      Vec c = vec2(u(rng), u(rng));
      PiecewiseCapacity cap = eqcap_parallel_constant(wl, wu, c);
      for (int k = 0; k <= 20; ++k) {
        double weq = cap.lo() + (cap.hi() - cap.lo()) * k / 20;
        double oracle = parallel2_oracle(weq, wl, wu, c);
        REQUIRE(cap.eval(weq) == Catch::Approx(oracle).margin(2e-3));
      }
      REQUIRE(s0_structure_ok(cap));
      REQUIRE(s1_certificate_ok(cap));
    }
  }
  SECTION("three links with a saturation tail") {
    Vec wl = vec3(1, 1, 2), wu = vec3(2, 5, 3), c = vec3(2, 3, 4);
    PiecewiseCapacity cap = eqcap_parallel_constant(wl, wu, c);
    REQUIRE(s0_structure_ok(cap));
    REQUIRE(s1_certificate_ok(cap));
    // endpoint identity: value at weq_lo is weq_lo * min_i c_i / wl_i
    double gmax = std::min({2.0 / 1, 3.0 / 1, 4.0 / 2});
    REQUIRE(cap.eval(cap.lo()) == Catch::Approx(cap.lo() * gmax));
  }
}

TEST_CASE("one-sided slopes") {
  Vec wl = vec2(1, 1), wu = vec2(2, 3), c = vec2(1, 2);
  PiecewiseCapacity cap = eqcap_parallel_constant(wl, wu, c);
  SECTION("linear segment") {
    auto [l, r] = gderivatives(cap, 2.5);
    REQUIRE(l == Catch::Approx(1.0));
    REQUIRE(r == Catch::Approx(1.0));
  }
  SECTION("plateau interior") {
    auto [l, r] = gderivatives(cap, 3.7);
    REQUIRE(l == Catch::Approx(0.0));
    REQUIRE(r == Catch::Approx(0.0));
  }
  SECTION("first transition point") {
    auto [l, r] = gderivatives(cap, 3.0);
    REQUIRE(l > 0.0);
    REQUIRE(r <= 1e-12);
  }
  SECTION("rational tail") {
    auto [l, r] = gderivatives(cap, 4.75);
    double expect = -1.0 * 3.0 / ((4.75 - 3.0) * (4.75 - 3.0));
    REQUIRE(l == Catch::Approx(expect));
    REQUIRE(r == Catch::Approx(expect));
  }
  SECTION("domain boundary has only the interior side") {
    auto [l, r] = gderivatives(cap, cap.lo());
    REQUIRE(std::isnan(l));
    REQUIRE_FALSE(std::isnan(r));
  }
}

TEST_CASE("sampled assembly keeps node values and shape") {
  std::vector<double> xs, ys;
  for (int k = 0; k <= 150; ++k) {
    double x = 1.0 + 0.02 * k;  // hits the breakpoints at 2 and 3 exactly
    xs.push_back(x);
    ys.push_back(x <= 2.0 ? x : (x <= 3.0 ? 2.0 : 2.0 - 0.5 * (x - 3.0)));
  }
  PiecewiseCapacity cap = PiecewiseCapacity::from_samples(xs, ys, true);
  REQUIRE(cap.max_value() == Catch::Approx(2.0));
  REQUIRE(cap.rise_end() == Catch::Approx(2.0));
  REQUIRE(cap.fall_begin() == Catch::Approx(3.0));
  REQUIRE(cap.eval(1.5) == Catch::Approx(1.5));
  REQUIRE(cap.eval(3.5) == Catch::Approx(1.75));
  REQUIRE(cap.inv_rising(1.25) == Catch::Approx(1.25));
  REQUIRE(cap.inv_falling(1.9) == Catch::Approx(3.2));
  REQUIRE(s0_structure_ok(cap));
}
