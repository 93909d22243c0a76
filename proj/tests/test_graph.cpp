#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "selfstab/graph.hpp"

using namespace selfstab;

TEST_CASE("barabasi-albert with m=1 yields a tree", "[graph]") {
  const Graph g = generate_ba(3, 1, 7);
  REQUIRE(g.n == 3);
  REQUIRE(g.edge_count() == 2);
  REQUIRE(g.connected());
}

TEST_CASE("generators are deterministic in the seed", "[graph]") {
  const Graph a = generate_ba(50, 2, 1234);
  const Graph b = generate_ba(50, 2, 1234);
  REQUIRE(a.adj == b.adj);
  REQUIRE(a.ids == b.ids);
  const Graph c = generate_er(30, 0.2, 99);
  const Graph d = generate_er(30, 0.2, 99);
  REQUIRE(c.adj == d.adj);
  REQUIRE(c.ids == d.ids);
  REQUIRE(generate_ba(50, 2, 1235).adj != a.adj);
}

TEST_CASE("barabasi-albert mean degree approaches 2m(n-m)/n", "[graph]") {
  // brute-force average over generated graphs
  const int n = 100, m = 4;
  double total = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) total += generate_ba(n, m, seed).average_degree();
  total /= 100.0;
  const double expected = 2.0 * m * (n - m) / n;  // 7.68
  REQUIRE(std::abs(total - expected) <= 0.5);
}

TEST_CASE("generator parameter validation", "[graph]") {
  REQUIRE_THROWS_AS(generate_ba(3, 3, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_ba(3, 0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_er(1, 0.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_er(5, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_er(5, 1.5, 1), std::invalid_argument);
}

TEST_CASE("erdos-renyi forced shapes", "[graph]") {
  const Graph edge = generate_er(2, 1.0, 5);
  REQUIRE(edge.edge_count() == 1);
  REQUIRE(edge.has_edge(0, 1));
  const Graph k5 = generate_er(5, 1.0, 5);
  REQUIRE(k5.edge_count() == 10);
}

TEST_CASE("erdos-renyi reports failed connectivity", "[graph]") {
  REQUIRE_THROWS_AS(generate_er(40, 1e-9, 3), std::runtime_error);
}

TEST_CASE("generated graphs satisfy the structural invariants", "[graph]") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    REQUIRE_NOTHROW(validate(generate_ba(30, 3, seed)));
    REQUIRE_NOTHROW(validate(generate_er(20, 0.25, seed)));
  }
}

TEST_CASE("locality on small paths", "[graph]") {
  const Graph p3 = path_graph(3);
  const Locality l1 = locality(p3, 1, 1);
  REQUIRE(l1.members == std::vector<int>{0, 1, 2});
  REQUIRE(l1.boundary == std::vector<int>{0, 2});

  const Graph p5 = path_graph(5);
  const Locality l2 = locality(p5, 2, 2);
  REQUIRE(l2.members == std::vector<int>{0, 1, 2, 3, 4});
  REQUIRE(l2.boundary == std::vector<int>{0, 4});
}

TEST_CASE("locality boundary on a star matches the BFS oracle", "[graph]") {
  const Graph star = star_graph(4);  // center 0, leaves 1..4
  const Locality loc = locality(star, 1, 2);
  REQUIRE(loc.boundary == std::vector<int>{2, 3, 4});
  const auto dist = test::bfs_distances(star, 1);
  for (size_t i = 0; i < loc.members.size(); ++i) REQUIRE(loc.dist[i] == dist[loc.members[i]]);
}

TEST_CASE("locality invariants over random graphs", "[graph]") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = generate_ba(25, 2, seed);
    for (int v = 0; v < g.n; ++v) {
      const Locality l1 = locality(g, v, 1);
      std::set<int> expected(g.adj[v].begin(), g.adj[v].end());
      expected.insert(v);
      REQUIRE(std::set<int>(l1.members.begin(), l1.members.end()) == expected);
      const Locality l2 = locality(g, v, 2);
      for (int b : l2.boundary) REQUIRE(!std::binary_search(l1.members.begin(), l1.members.end(), b));
      REQUIRE(l2.index_of(v) >= 0);
    }
  }
}

TEST_CASE("diameter estimate log(n)/log(log(n))", "[graph]") {
  REQUIRE(estimate_diameter(15) == Catch::Approx(2.71825).margin(1e-3));
  REQUIRE(estimate_diameter(100) == Catch::Approx(3.01548).margin(1e-3));
  REQUIRE(estimate_diameter(3) == Catch::Approx(11.6827).margin(1e-2));
  REQUIRE_THROWS_AS(estimate_diameter(2), std::invalid_argument);
}

TEST_CASE("edge-list round trip", "[graph]") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const Graph g = generate_ba(20, 2, seed);
    const Graph back = from_edge_list(to_edge_list(g));
    REQUIRE(back.adj == g.adj);
    REQUIRE(back.ids == g.ids);
  }
  REQUIRE_THROWS_AS(from_edge_list(std::string("nope")), std::invalid_argument);
}
