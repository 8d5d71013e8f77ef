// Bundled-network checks that need the data directory (path baked in at
// configure time).

#include <catch2/catch_amalgamated.hpp>

#include "gridw/io.hpp"
#include "gridw/mincut.hpp"
#include "gridw/reduction.hpp"
#include "gridw/subgradient.hpp"

#ifndef GRIDW_DATA_DIR
#define GRIDW_DATA_DIR "data"
#endif

using namespace gridw;

TEST_CASE("39-bus multilevel margin lands between the search and cut bounds") {
  Network base = load_network(std::string(GRIDW_DATA_DIR) + "/ieee39.json");
  Network net = base.with_weight_bounds(0.95 * base.wu(), base.wu());
  MultilevelConfig cfg;
  cfg.terminal_samples = 20000;
  cfg.seed = 11;
  MultilevelReport rep = multilevel_margin(net, cfg);
  double alpha = 1.0 + rep.nu_star / net.p().lpNorm<1>();
  REQUIRE(alpha >= 4.80);
  REQUIRE(alpha <= 5.200 + 1e-6);
  REQUIRE(rep.max_certificate < 1e-8);
  for (const auto& s : rep.steps) {
    if (!s.caps) continue;
    REQUIRE(s0_structure_ok(s.caps->fwd));
    REQUIRE(s.caps->fwd.max_value() > 0.0);
  }
}

TEST_CASE("39-bus quick random search clears the coarse target") {
  Network base = load_network(std::string(GRIDW_DATA_DIR) + "/ieee39.json");
  Network net = base.with_weight_bounds(0.95 * base.wu(), base.wu());
  RandomSearchResult rs = random_search_alpha(net, Direction::plus, 200000, 30.0, 4.80, 5);
  REQUIRE(rs.alpha >= 4.80);
}

TEST_CASE("bundled networks validate and round-trip") {
  for (const char* name : {"fig1.json", "fig5.json", "fig6.json", "ieee39.json"}) {
    Network net = load_network(std::string(GRIDW_DATA_DIR) + "/" + name);
    REQUIRE(net.connected());
    std::string once = network_to_json(net).dump(2);
    Network again = network_from_json(nlohmann::ordered_json::parse(once));
    REQUIRE(network_to_json(again).dump(2) == once);
  }
}
