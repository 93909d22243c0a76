#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "selfstab/selfish.hpp"
#include "selfstab/sim.hpp"

using namespace selfstab;
using test::config_from;

TEST_CASE("violation policies", "[selfish]") {
  const Graph p2 = path_graph(2);
  const AlgorithmDescriptor& b = build("bMIS");
  const Configuration c = config_from("OO");
  const Rule& r1 = b.rules[0];
  RngStream rng(4);

  DeviationModel always{DeviationKind::Violation, DeviationPolicy::Always, 1.0};
  REQUIRE(apply_violation(always, b, p2, c, 0, r1, rng));

  DeviationModel never{DeviationKind::Violation, DeviationPolicy::Probabilistic, 0.0};
  for (int i = 0; i < 20; ++i) REQUIRE_FALSE(apply_violation(never, b, p2, c, 0, r1, rng));
}

TEST_CASE("utility-driven violation on an adjacent pending pair", "[selfish]") {
  // each agent prefers the other as head: both skip
  const Graph p2 = path_graph(2);
  const AlgorithmDescriptor& b = build("bMIS");
  const Configuration c = config_from("OO");
  REQUIRE(beneficial_violation(b, p2, c, 0));
  REQUIRE(beneficial_violation(b, p2, c, 1));

  // an isolated agent must self-elect
  const Graph p1 = path_graph(1);
  REQUIRE_FALSE(beneficial_violation(b, p1, Configuration(1), 0));

  // dpMIS has a unique completion, vpMIS entries are dead-ends
  REQUIRE_FALSE(beneficial_violation(build("dpMIS"), p2, c, 0));
  REQUIRE_FALSE(beneficial_violation(build("vpMIS"), p2, c, 0));
}

TEST_CASE("perturbation injection", "[selfish]") {
  const Graph p3 = path_graph(3);
  const AlgorithmDescriptor& b = build("bMIS");
  const Configuration legit = config_from("IOI");

  auto [faulted, ev] = inject_perturbation(b, p3, legit, 0);
  REQUIRE_FALSE(faulted.is_in(0));
  REQUIRE(ev.agent == 0);
  REQUIRE(ev.variable == "state");
  REQUIRE(ev.before == "IN");
  REQUIRE(ev.after == "OUT");

  // exactly one variable differs
  int diffs = 0;
  for (int v = 0; v < 3; ++v)
    if (!(faulted.agents[v] == legit.agents[v])) ++diffs;
  REQUIRE(diffs == 1);

  REQUIRE_THROWS_AS(inject_perturbation(b, p3, legit, 1), std::invalid_argument);  // OUT agent
  REQUIRE_THROWS_AS(inject_perturbation(b, p3, config_from("IIO"), 0), std::invalid_argument);
}

TEST_CASE("deflection condition", "[selfish]") {
  const Graph p3 = path_graph(3);
  REQUIRE(deflection_condition(p3, config_from("IOO"), 0));  // node 1 depends on 0 alone

  const Graph p5 = path_graph(5);
  REQUIRE_FALSE(deflection_condition(p5, config_from("IOIOI"), 2));  // both covered elsewhere

  const Graph star = star_graph(4);
  REQUIRE(deflection_condition(star, config_from("IOOOO"), 0));
}

TEST_CASE("dead-end detection", "[selfish]") {
  const AlgorithmDescriptor& vp = build("vpMIS");
  const AlgorithmDescriptor& b = build("bMIS");

  // vpMIS R1 enabled implies a dead-end, over random reachable configurations
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = generate_ba(10, 2, seed);
    Configuration c = random_configuration(g, kVarState, derive_seed(3, seed, 0, 0));
    RngStream rng(seed);
    for (int step = 0; step < 4; ++step)
      for (int v = 0; v < g.n; ++v) {
        const Rule* r = first_enabled(vp, g, c, v);
        if (r && rng.bernoulli(0.5)) c.agents[v] = r->apply(g, c, v);
      }
    for (int v = 0; v < g.n; ++v)
      if (rules::vp_r1(g, c, v)) REQUIRE(detect_dead_end(vp, g, c, v));
  }

  // interior bMIS agents on an all-OUT path have enabled neighbors
  const Graph p4 = path_graph(4);
  REQUIRE_FALSE(detect_dead_end(b, p4, config_from("OOOO"), 1));
  REQUIRE(detect_dead_end(b, path_graph(1), Configuration(1), 0));
}

TEST_CASE("containment shortcuts for exits from legitimate configurations", "[selfish]") {
  const Graph p3 = path_graph(3);
  const Configuration legit = config_from("IOI");
  REQUIRE_FALSE(beneficial_exit(build("pfMIS"), p3, legit, 0, true));
  REQUIRE_FALSE(beneficial_exit(build("dtMIS"), p3, legit, 0, true));
  REQUIRE_FALSE(beneficial_exit(build("dpMIS"), p3, legit, 0, true));
  // on I-O-I the middle agent stays covered by the other head, so nobody
  // would ever cover the exiting head: no benefit
  REQUIRE_FALSE(beneficial_exit(build("bMIS"), p3, legit, 0, true));
  // a star center can hope for a leaf to take over
  const Graph star = star_graph(3);
  REQUIRE(beneficial_exit(build("bMIS"), star, config_from("IOOO"), 0, true));
}

TEST_CASE("dpMIS with deviations still lands on the reference MIS", "[selfish]") {
  const AlgorithmDescriptor& dp = build("dpMIS");
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = generate_ba(12, 2, seed);
    const uint64_t want = digest(config_from_in_set(g, reference_unique_mis(g)), dp.declared_vars);
    for (DeviationKind kind : {DeviationKind::Violation, DeviationKind::Deflection}) {
      EngineOptions opt;
      opt.scheduler.kind = SchedulerKind::DistributedRandomized;
      opt.scheduler.p_s = 0.8;
      opt.deviation = {kind, DeviationPolicy::UtilityDriven, 1.0};
      opt.round_limit = 50L * g.n;
      opt.seed = derive_seed(88, seed, static_cast<uint64_t>(kind), 0);
      Engine engine(g, dp, opt);
      const RunResult run =
          engine.run(random_configuration(g, kVarState, derive_seed(6, seed, 0, 0)));
      REQUIRE(run.converged);
      REQUIRE(run.deviations == 0);
      REQUIRE(digest(run.final_config, dp.declared_vars) == want);
    }
  }
}
