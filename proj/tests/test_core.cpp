#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "selfstab/core.hpp"
#include "selfstab/verify.hpp"

using namespace selfstab;
using test::config_from;

TEST_CASE("pending and conflict predicates", "[core]") {
  const Graph p3 = path_graph(3);
  REQUIRE(pending(p3, config_from("OOO"), 1));
  REQUIRE_FALSE(pending(p3, config_from("IOO"), 1));
  const Graph k3 = complete_graph(3);
  const Configuration one_in = config_from("IOO");
  for (int v = 0; v < 3; ++v) REQUIRE_FALSE(pending(k3, one_in, v));

  const Graph edge = path_graph(2);
  const Configuration both = config_from("II");
  REQUIRE(conflict(edge, both, 0));
  REQUIRE(conflict(edge, both, 1));
  REQUIRE_FALSE(conflict(p3, config_from("IOO"), 0));
  for (int v = 0; v < 3; ++v) REQUIRE_FALSE(conflict(p3, config_from("OOO"), v));
}

TEST_CASE("is_mis on paths", "[core]") {
  const Graph p3 = path_graph(3);
  REQUIRE(is_mis(p3, config_from("IOI")));
  REQUIRE(is_mis(p3, config_from("OIO")));
  REQUIRE_FALSE(is_mis(p3, config_from("IOO")));  // node 2 uncovered
  REQUIRE_FALSE(is_mis(p3, config_from("IIO")));
}

TEST_CASE("gain follows the three-case form", "[core]") {
  const GainParams params{10.0, 1.0};
  const Graph p3 = path_graph(3);
  REQUIRE(gain(p3, config_from("IOO"), 1, params) == 10.0);
  REQUIRE(gain(p3, config_from("IOO"), 0, params) == 9.0);
  REQUIRE(gain(p3, config_from("OOO"), 1, params) == 0.0);
  REQUIRE(gain(p3, config_from("OOO"), 1, GainParams{5.0, 2.0}) == 0.0);
}

TEST_CASE("gain is total: exactly one case applies", "[core]") {
  const Graph g = generate_ba(12, 2, 3);
  for (uint32_t mask = 0; mask < (1u << 12); mask += 7) {
    Configuration c(12);
    for (int v = 0; v < 12; ++v)
      if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
    for (int v = 0; v < 12; ++v) {
      int cases = 0;
      if (pending(g, c, v)) ++cases;
      if (!c.is_in(v) && !pending(g, c, v)) ++cases;
      if (c.is_in(v)) ++cases;
      REQUIRE(cases == 1);
    }
  }
}

TEST_CASE("system property is MIS-ness on state-only configurations", "[core]") {
  // exhaustive for n = 12 plus the whole small-graph catalog
  const Graph big = generate_ba(12, 2, 17);
  for (uint32_t mask = 0; mask < (1u << 12); ++mask) {
    Configuration c(12);
    for (int v = 0; v < 12; ++v)
      if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
    if (system_property(big, c) != is_mis(big, c)) {
      REQUIRE(system_property(big, c) == is_mis(big, c));
    }
  }
  for (const Graph& g : connected_graph_catalog(5)) {
    for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
      Configuration c(g.n);
      for (int v = 0; v < g.n; ++v)
        if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
      REQUIRE(system_property(g, c) == is_mis(g, c));
    }
  }
}

TEST_CASE("any illegitimate configuration is gain-dominated by some MIS", "[core]") {
  const GainParams params{10.0, 1.0};
  auto check = [&](const Graph& g) {
    std::vector<Configuration> mis;
    for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
      Configuration c(g.n);
      for (int v = 0; v < g.n; ++v)
        if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
      if (is_mis(g, c)) mis.push_back(c);
    }
    REQUIRE_FALSE(mis.empty());
    for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
      Configuration c(g.n);
      for (int v = 0; v < g.n; ++v)
        if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
      if (is_mis(g, c)) continue;
      for (int v = 0; v < g.n; ++v) {
        const double base = gain(g, c, v, params);
        bool dominated = false;
        for (const Configuration& m : mis)
          if (gain(g, m, v, params) >= base) {
            dominated = true;
            break;
          }
        REQUIRE(dominated);
      }
    }
  };
  for (const Graph& g : connected_graph_catalog(5)) check(g);
  check(path_graph(8));
  check(cycle_graph(8));
}

TEST_CASE("digest covers declared variables only", "[core]") {
  Configuration a = config_from("IOI");
  Configuration b = a;
  b.agents[1].parent = 0;  // undeclared for state-only algorithms
  REQUIRE(digest(a, kVarState) == digest(b, kVarState));
  REQUIRE(digest(a, kVarState | kVarParent) != digest(b, kVarState | kVarParent));
  b.agents[1].parent = kNoParent;
  insert_parent(b.agents[1].parents, 2);
  REQUIRE(digest(a, kVarState | kVarParent) == digest(b, kVarState | kVarParent));
  REQUIRE(digest(a, kVarState | kVarParents) != digest(b, kVarState | kVarParents));
}

TEST_CASE("configuration serialization", "[core]") {
  Configuration c = config_from("IOO");
  REQUIRE(to_string(c, kVarState) == "IOO");
  c.agents[1].parent = 0;
  REQUIRE(to_string(c, kVarState | kVarParent) == "IOO parent=-,0,-");
  insert_parent(c.agents[2].parents, 1);
  insert_parent(c.agents[2].parents, 0);
  REQUIRE(to_string(c, kVarState | kVarParents) == "IOO parents={};{};{0 1}");
}

TEST_CASE("gain parameter validation", "[core]") {
  REQUIRE_THROWS_AS((GainParams{1.0, 1.0}).validate(), std::invalid_argument);
  REQUIRE_THROWS_AS((GainParams{1.0, -0.5}).validate(), std::invalid_argument);
  REQUIRE_NOTHROW((GainParams{10.0, 1.0}).validate());
}
