#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridw/dynamics.hpp"
#include "gridw/mincut.hpp"
#include "gridw/subgradient.hpp"
#include "test_support.hpp"

using namespace gridw;
using gridw::testing::make_network;
using gridw::testing::random_network;

TEST_CASE("effective capacities") {
  Network net = make_network(2, {{0, 1}, {1, 0}}, {1, 1}, {0.5, 0.5}, {2, 2}, {3, 4},
                             {1, -1}, {-2, -5});
  Vec f(2);
  f << 0.6, -0.4;
  SECTION("toward the nominal direction") {
    Vec c = effective_capacity(net, f, Direction::plus);
    REQUIRE(c(0) == 3.0);   // positive flow meets the upper bound
    REQUIRE(c(1) == -5.0);  // negative flow meets the lower bound
  }
  SECTION("against the nominal direction") {
    Vec c = effective_capacity(net, f, Direction::minus);
    REQUIRE(c(0) == 2.0);
    REQUIRE(c(1) == -4.0);
  }
  SECTION("zero flow ties to the nonnegative branch") {
    Vec z = Vec::Zero(2);
    REQUIRE(effective_capacity(net, z, Direction::plus)(0) == 3.0);
    REQUIRE(effective_capacity(net, z, Direction::minus)(0) == 2.0);
  }
}

TEST_CASE("objective of the multiplicative problem") {
  SECTION("even two-link split") {
    Network net = parallel_network(Vec::Ones(2), 0.5 * Vec::Ones(2), 2 * Vec::Ones(2),
                                   Vec::Ones(2), 1.0);
    REQUIRE(objective(net, net.w(), Direction::plus) == Catch::Approx(0.5));
  }
  SECTION("weight-independent on trees") {
    Network net = make_network(3, {{0, 1}, {1, 2}}, {1, 2}, {0.5, 0.5}, {3, 3}, {2, 2},
                               {1, 0, -1});
    double base = objective(net, net.w(), Direction::plus);
    Vec other(2);
    other << 2.5, 0.7;
    REQUIRE(objective(net, other, Direction::plus) == Catch::Approx(base));
  }
  SECTION("invariant under uniform weight scaling") {
    std::mt19937_64 rng(501);
    Network net = random_network(rng, 7, 12);
    Network wide = net.with_weight_bounds(0.5 * net.wl(), 4.0 * net.wu());
    double a = objective(wide, net.w(), Direction::plus);
    double b = objective(wide, Vec(2.0 * net.w()), Direction::plus);
    REQUIRE(a == Catch::Approx(b).margin(1e-12));
  }
}

TEST_CASE("projected subgradient on parallel instances") {
  std::mt19937_64 rng(503);
  std::uniform_real_distribution<double> u(0.5, 2.5);
  SubgradConfig cfg;
  cfg.iters = 3000;
  cfg.restarts = 4;
  cfg.sqrt_decay = true;
  cfg.eta0 = 0.5;

  int checked = 0;
  while (checked < 10) {
    Vec wl(2), wu(2), c(2);
    wl << u(rng), u(rng);
    wu << wl(0) + u(rng), wl(1) + u(rng);
    c << u(rng), u(rng);
    ParallelClosedForm pcf = parallel_alpha_star(wl, wu, c);
    Network net = parallel_network(wu, wl, wu, c, 1.0);
    MultiplicativeResult res = solve_multiplicative(net, cfg);
    REQUIRE(res.alpha_plus == Catch::Approx(pcf.alpha_star).margin(1e-4));
    REQUIRE(res.plus.certified);
    ++checked;
  }
}

TEST_CASE("subgradient result properties") {
  std::mt19937_64 rng(509);
  SubgradConfig cfg;
  cfg.iters = 400;
  cfg.restarts = 3;
  for (int trial = 0; trial < 6; ++trial) {
    Network net = random_network(rng, 7, 11);
    MultiplicativeResult res = solve_multiplicative(net, cfg);

    // feasibility certificate of the returned point
    REQUIRE(res.plus.certified);
    REQUIRE(res.minus.certified);
    REQUIRE(res.alpha_plus >= 1.0 - 1e-9);

    // best-iterate trace never increases
    for (size_t k = 1; k < res.plus.trace.size(); ++k)
      REQUIRE(res.plus.trace[k] <= res.plus.trace[k - 1] + 1e-15);

    // dominated by the relaxed min-cut bound along the nominal direction
    Vec d = net.p() / net.p().lpNorm<1>();
    bool vertexish = true;
    for (int v = 0; v < net.num_nodes(); ++v)
      if (std::abs(d(v)) > 1e-12 && std::abs(std::abs(d(v)) - 0.5) > 1e-12)
        vertexish = false;
    if (vertexish) {
      double bound = nu0(net, d);
      double nu_plus = net.p().lpNorm<1>() * (res.alpha_plus - 1.0);
      REQUIRE(nu_plus <= bound + 1e-6 * std::max(1.0, bound));
    }
  }
}
