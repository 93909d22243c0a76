#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "helpers.hpp"
#include "selfstab/algorithms.hpp"
#include "selfstab/rng.hpp"
#include "selfstab/sim.hpp"
#include "selfstab/verify.hpp"

using namespace selfstab;
using test::config_from;

namespace {

// Literal transcription of the pfMIS hesitate formula, used as an oracle
// against the implementation.
bool hesitate_pf_oracle(const Graph& g, const Configuration& c, int v) {
  if (c.agents[v].parent == kNoParent) return false;
  for (int w : g.adj[v]) {
    if (c.agents[v].parent != w) continue;
    bool clause = true;
    for (int z : g.adj[v])
      if (z != w && c.agents[z].parent == v) clause = false;
    for (int u : g.adj[w]) {
      if (u == v) continue;
      const bool ok = !c.is_in(u) &&
                      (c.agents[u].parent == w || c.agents[u].parent == kNoParent);
      if (!ok) clause = false;
    }
    bool tail = c.agents[w].parent == kNoParent || c.agents[w].parent != v || g.ids[w] < g.ids[v];
    if (!tail)
      for (int y : g.adj[w])
        if (y != v && c.agents[y].parent == w) tail = true;
    if (clause && tail) return true;
  }
  return false;
}

bool hesitate_dt_oracle(const Graph& g, const Configuration& c, int v) {
  if (c.agents[v].parents.empty()) return false;
  for (int w : g.adj[v]) {
    if (!contains_parent(c.agents[v].parents, w)) continue;
    bool clause = true;
    for (int z : g.adj[v])
      if (z != w && contains_parent(c.agents[z].parents, v)) clause = false;
    for (int z : g.adj[w]) {
      if (z == v) continue;
      if (c.is_in(z) || !contains_parent(c.agents[z].parents, w)) clause = false;
    }
    bool tail = !contains_parent(c.agents[w].parents, v) || g.ids[w] < g.ids[v];
    if (!tail)
      for (int z : g.adj[w])
        if (z != v && contains_parent(c.agents[z].parents, w)) tail = true;
    if (clause && tail) return true;
  }
  return false;
}

Configuration random_full_config(const Graph& g, unsigned vars, uint64_t seed) {
  return random_configuration(g, vars, seed);
}

}  // namespace

TEST_CASE("descriptors match the listings", "[algorithms]") {
  const AlgorithmDescriptor& b = build("bMIS");
  REQUIRE(b.rules.size() == 2);
  REQUIRE(b.rules[0].prob_source == ProbSource::Always);
  REQUIRE(b.rules[1].prob_source == ProbSource::Always);

  const AlgorithmDescriptor& vt = build("vtMIS");
  REQUIRE(vt.rules.size() == 2);
  REQUIRE(vt.rules[0].prob_source == ProbSource::ParamP);

  const AlgorithmDescriptor& pf = build("pfMIS");
  REQUIRE(pf.rules.size() == 5);
  REQUIRE((pf.declared_vars & kVarParent) != 0);

  const AlgorithmDescriptor& dt = build("dtMIS");
  REQUIRE(dt.rules.size() == 7);
  REQUIRE(dt.rules[0].prob_source == ProbSource::ParamP);
  REQUIRE(dt.rules[6].prob_source == ProbSource::ParamQ);

  const AlgorithmDescriptor& vp = build("vpMIS");
  REQUIRE(vp.rules.size() == 2);
  REQUIRE(vp.rules[0].prob_source == ProbSource::ParamPc);

  const AlgorithmDescriptor& dp = build("dpMIS");
  REQUIRE(dp.rules.size() == 2);
  REQUIRE(dp.rules[0].prob_source == ProbSource::Always);

  REQUIRE_THROWS_AS(build("xMIS"), std::invalid_argument);
}

TEST_CASE("enabled rules on small instances", "[algorithms]") {
  const Graph p3 = path_graph(3);
  const AlgorithmDescriptor& b = build("bMIS");
  for (int v = 0; v < 3; ++v) REQUIRE(enabled_rules(b, p3, config_from("OOO"), v) == std::vector<int>{1});
  const Graph edge = path_graph(2);
  for (int v = 0; v < 2; ++v) REQUIRE(enabled_rules(b, edge, config_from("II"), v) == std::vector<int>{2});

  const AlgorithmDescriptor& dp = build("dpMIS");
  // ids on the path are 1,2,3: only the id-1 endpoint may act from all-OUT
  REQUIRE(enabled_rules(dp, p3, config_from("OOO"), 0) == std::vector<int>{1});
  REQUIRE(enabled_rules(dp, p3, config_from("OOO"), 1).empty());
  REQUIRE(enabled_rules(dp, p3, config_from("OOO"), 2).empty());
}

TEST_CASE("pfMIS hesitate on the 1-fault star", "[algorithms]") {
  const Graph star = star_graph(4);  // center 0
  Configuration c(star.n);
  c.agents[0].state = NodeState::OUT;  // head after the IN-to-OUT fault
  for (int leaf = 1; leaf <= 4; ++leaf) c.agents[leaf].parent = 0;
  for (int leaf = 1; leaf <= 4; ++leaf) REQUIRE(hesitate_pf(star, c, leaf));
  REQUIRE_FALSE(hesitate_pf(star, c, 0));
}

TEST_CASE("pfMIS hesitate requires a parent", "[algorithms]") {
  const Graph p4 = path_graph(4);
  const Configuration all_bottom(4);  // every parent undefined
  for (int v = 0; v < 4; ++v) REQUIRE_FALSE(hesitate_pf(p4, all_bottom, v));
}

TEST_CASE("pfMIS hesitate fails when a witness neighbor points elsewhere", "[algorithms]") {
  // path v-w-x-y with v.parent = w but x.parent = y
  const Graph p4 = path_graph(4);
  Configuration c(4);
  c.agents[0].parent = 1;
  c.agents[2].parent = 3;
  REQUIRE_FALSE(hesitate_pf(p4, c, 0));
}

TEST_CASE("hesitate implementations agree with the literal transcriptions", "[algorithms]") {
  for (const Graph& g : connected_graph_catalog(5)) {
    for (uint64_t seed = 0; seed < 40; ++seed) {
      const Configuration c = random_full_config(g, kVarState | kVarParent | kVarParents,
                                                 derive_seed(411, seed, g.n, g.edge_count()));
      for (int v = 0; v < g.n; ++v) {
        REQUIRE(hesitate_pf(g, c, v) == hesitate_pf_oracle(g, c, v));
        REQUIRE(hesitate_dt(g, c, v) == hesitate_dt_oracle(g, c, v));
      }
    }
  }
}

TEST_CASE("liberated predicate", "[algorithms]") {
  const Graph p3 = path_graph(3);  // ids 1,2,3
  REQUIRE(liberated(p3, config_from("IOO"), 1));
  for (int v = 0; v < 3; ++v) REQUIRE_FALSE(liberated(p3, config_from("OOO"), v));
  REQUIRE_FALSE(liberated(p3, config_from("OOI"), 1));  // id 3 > id 2
}

TEST_CASE("reference unique MIS", "[algorithms]") {
  REQUIRE(reference_unique_mis(path_graph(3)) == std::vector<int>{0, 2});
  REQUIRE(reference_unique_mis(complete_graph(4)) == std::vector<int>{0});
  Graph star = star_graph(4);
  star.ids = {5, 1, 2, 3, 4};  // center id 5
  REQUIRE(reference_unique_mis(star) == std::vector<int>{1, 2, 3, 4});
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = generate_ba(20, 2, seed);
    const auto mis = reference_unique_mis(g);
    REQUIRE(is_mis(g, config_from_in_set(g, mis)));
  }
}

TEST_CASE("execute draws against the rule probability", "[algorithms]") {
  const Graph p1 = path_graph(1);
  const AlgorithmDescriptor& vt = build("vtMIS");
  const Configuration c(1);

  ProbContext always;
  RngStream rng(1);
  REQUIRE(execute(vt, p1, c, 0, 1, always, rng).executed);

  ProbContext never;
  never.p = 0.0;
  for (int i = 0; i < 50; ++i) REQUIRE_FALSE(execute(vt, p1, c, 0, 1, never, rng).executed);

  ProbContext half;
  half.p = 0.5;
  long fired = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    RngStream stream(42, 0, i, Draw::Rule);
    if (execute(vt, p1, c, 0, 1, half, stream).executed) ++fired;
  }
  REQUIRE(std::abs(fired / static_cast<double>(draws) - 0.5) <= 0.01);

  const AlgorithmDescriptor& b = build("bMIS");
  REQUIRE_THROWS_AS(execute(b, p1, config_from("I"), 0, 1, always, rng), std::logic_error);
}

TEST_CASE("pfMIS parent rules", "[algorithms]") {
  const Graph p3 = path_graph(3);
  const AlgorithmDescriptor& pf = build("pfMIS");

  Configuration one_head = config_from("IOO");
  REQUIRE(enabled_rules(pf, p3, one_head, 1).empty());  // node 2 pending blocks R3

  // R4 fires only once a parent is set and two heads are adjacent
  Configuration covered = config_from("IOI");
  REQUIRE(enabled_rules(pf, p3, covered, 1).empty());
  REQUIRE(rules::pf_r4(p3, covered, 1) == false);
  Configuration covered2 = covered;
  covered2.agents[1].parent = 0;
  REQUIRE(rules::pf_r4(p3, covered2, 1));
  REQUIRE(rules::clear_parent(p3, covered2, 1).parent == kNoParent);

  // R5: head with stale parent clears it
  Configuration head = config_from("IOO");
  head.agents[0].parent = 1;
  REQUIRE(rules::pf_r5(p3, head, 0));
  REQUIRE(rules::clear_parent(p3, head, 0).parent == kNoParent);

  // single head, no pending neighbor: adopt
  const Graph p4 = path_graph(4);
  Configuration adopt = config_from("IOOI");
  REQUIRE(rules::pf_r3(p4, adopt, 1));
  REQUIRE(rules::pf_r3_apply(p4, adopt, 1).parent == 0);
}

TEST_CASE("dtMIS parent rules", "[algorithms]") {
  const Graph p3 = path_graph(3);

  // R4 collects cluster-head neighbors one at a time
  Configuration c = config_from("IOI");
  REQUIRE(rules::dt_r4(p3, c, 1));
  AgentState a = rules::dt_r4_apply(p3, c, 1);
  REQUIRE(a.parents == std::vector<int>{0});
  c.agents[1] = a;
  a = rules::dt_r4_apply(p3, c, 1);
  REQUIRE(a.parents == std::vector<int>{0, 2});
  c.agents[1] = a;
  REQUIRE_FALSE(rules::dt_r4(p3, c, 1));

  // R3 drops OUT non-pending members
  const Graph p4 = path_graph(4);
  Configuration drop = config_from("OOOI");
  insert_parent(drop.agents[1].parents, 2);  // node 2 is OUT and covered by 3
  REQUIRE(rules::dt_r3(p4, drop, 1));
  REQUIRE(rules::dt_r3_apply(p4, drop, 1).parents.empty());

  // R5 clears a clean head's parent set
  Configuration head = config_from("IOO");
  insert_parent(head.agents[0].parents, 1);
  REQUIRE(rules::dt_r5(p3, head, 0));
  REQUIRE(rules::clear_parents(p3, head, 0).parents.empty());

  // R6 removes non-neighbors
  Configuration junk = config_from("OOO");
  insert_parent(junk.agents[0].parents, 2);  // not adjacent on the path
  insert_parent(junk.agents[0].parents, 1);
  REQUIRE(rules::dt_r6(p3, junk, 0));
  REQUIRE(rules::dt_r6_apply(p3, junk, 0).parents == std::vector<int>{1});
}

TEST_CASE("quiescence implies an MIS state projection", "[algorithms]") {
  // state-only algorithms, exhaustive up to n = 8
  const std::vector<Graph> graphs = {path_graph(8), cycle_graph(7), generate_ba(8, 2, 5)};
  for (AlgorithmId id : {AlgorithmId::bMIS, AlgorithmId::vtMIS, AlgorithmId::vpMIS, AlgorithmId::dpMIS}) {
    const AlgorithmDescriptor& alg = descriptor(id);
    for (const Graph& g : graphs) {
      for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
        Configuration c(g.n);
        for (int v = 0; v < g.n; ++v)
          if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
        bool any = false;
        for (int v = 0; v < g.n && !any; ++v) any = first_enabled(alg, g, c, v) != nullptr;
        if (!any) REQUIRE(is_mis(g, c));
      }
    }
  }
}

TEST_CASE("vpMIS entry guard is a dead-end", "[algorithms]") {
  const AlgorithmDescriptor& vp = build("vpMIS");
  for (uint64_t seed = 0; seed < 30; ++seed) {
    const Graph g = generate_ba(14, 2, seed);
    Configuration c = random_configuration(g, kVarState, derive_seed(9, seed, 0, 0));
    // walk a few random steps to reach plausible mid-run configurations
    RngStream rng(seed, 1, 2, 3);
    for (int step = 0; step < 6; ++step) {
      for (int v = 0; v < g.n; ++v) {
        const Rule* r = first_enabled(vp, g, c, v);
        if (r && rng.bernoulli(0.4)) c.agents[v] = r->apply(g, c, v);
      }
    }
    for (int v = 0; v < g.n; ++v) {
      if (rules::vp_r1(g, c, v)) {
        for (int w : g.adj[v]) REQUIRE(first_enabled(vp, g, c, w) == nullptr);
      }
    }
  }
}

TEST_CASE("dpMIS converges to the reference MIS from every initialization", "[algorithms]") {
  const AlgorithmDescriptor& dp = build("dpMIS");
  for (const Graph& g : connected_graph_catalog(5)) {
    const auto ref = config_from_in_set(g, reference_unique_mis(g));
    const uint64_t want = digest(ref, dp.declared_vars);
    for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
      Configuration c(g.n);
      for (int v = 0; v < g.n; ++v)
        if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
      EngineOptions opt;
      opt.scheduler.kind = SchedulerKind::DistributedRandomized;
      opt.scheduler.p_s = 0.6;
      opt.round_limit = 50L * g.n + 10;
      opt.seed = derive_seed(7, mask, g.n, g.edge_count());
      Engine engine(g, dp, opt);
      const RunResult run = engine.run(c);
      REQUIRE(run.converged);
      REQUIRE(digest(run.final_config, dp.declared_vars) == want);
    }
  }
}

TEST_CASE("pfMIS and dtMIS quiescent full configurations are MIS", "[algorithms]") {
  // full declared-variable space on small graphs
  for (AlgorithmId id : {AlgorithmId::pfMIS, AlgorithmId::dtMIS}) {
    const AlgorithmDescriptor& alg = descriptor(id);
    for (const Graph& g : {path_graph(3), star_graph(3)}) {
      std::vector<Configuration> all;
      selfstab::detail::enumerate_full_configs(alg, g, all, 200000);
      for (const Configuration& c : all) {
        bool any = false;
        for (int v = 0; v < g.n && !any; ++v) {
          for (const Rule& r : alg.rules) {
            if (selfstab::detail::rule_positive(g, c, v, r)) {
              any = true;
              break;
            }
          }
        }
        if (!any) REQUIRE(is_mis(g, c));
      }
    }
  }
}
