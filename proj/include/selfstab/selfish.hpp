#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "selfstab/algorithms.hpp"
#include "selfstab/core.hpp"
#include "selfstab/graph.hpp"

namespace selfstab {

enum class DeviationKind { None, Violation, Perturbation, Deflection };
enum class DeviationPolicy { Always, Probabilistic, UtilityDriven };

struct DeviationModel {
  DeviationKind kind = DeviationKind::None;
  DeviationPolicy policy = DeviationPolicy::UtilityDriven;
  double w = 1.0;  // per-opportunity probability for the probabilistic policy

  void validate() const {
    if (w < 0.0 || w > 1.0) throw std::invalid_argument("deviation: w in [0,1]");
  }
};

// A 1-fault: one agent's variable changed from one value to another.
struct FaultEvent {
  int agent = -1;
  std::string variable;
  std::string before;
  std::string after;
  long round = 0;
};

// Quiescence with respect to positive-probability rules; for MIS state
// projections this is the legitimacy predicate. dtMIS R7's guard stays
// enabled at cluster-heads but carries zero probability once no neighbor is
// pending, which an MIS guarantees.
inline bool is_legitimate(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c) {
  if (!is_mis(g, c)) return false;
  for (int v = 0; v < g.n; ++v) {
    for (const Rule& r : alg.rules) {
      if (alg.id == AlgorithmId::dtMIS && r.index == 7) continue;
      if (r.guard(g, c, v)) return false;
    }
  }
  return true;
}

// Flips a cluster-head to OUT in a legitimate configuration; all other
// variables untouched.
inline std::pair<Configuration, FaultEvent> inject_perturbation(const AlgorithmDescriptor& alg,
                                                                const Graph& g,
                                                                const Configuration& c, int v,
                                                                long round = 0) {
  if (v < 0 || v >= g.n || !c.is_in(v))
    throw std::invalid_argument("inject_perturbation: agent is not a cluster-head");
  if (!is_legitimate(alg, g, c))
    throw std::invalid_argument("inject_perturbation: configuration is not legitimate");
  Configuration out = c;
  out.agents[v].state = NodeState::OUT;
  FaultEvent ev{v, "state", "IN", "OUT", round};
  return {std::move(out), ev};
}

// The experiments' trigger for an unauthorized IN-to-OUT move: a cluster-head
// with some neighbor whose only neighboring cluster-head is it.
inline bool deflection_condition(const Graph& g, const Configuration& c, int v) {
  if (!c.is_in(v) || conflict(g, c, v)) return false;
  for (int w : g.adj[v]) {
    bool other_head = false;
    for (int u : g.adj[w])
      if (u != v && c.is_in(u)) {
        other_head = true;
        break;
      }
    if (!other_head) return true;
  }
  return false;
}

// v is enabled while no agent in N(v) is.
inline bool detect_dead_end(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c,
                            int v) {
  if (!first_enabled(alg, g, c, v)) return false;
  for (int w : g.adj[v])
    if (first_enabled(alg, g, c, w)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Utility-driven deviation oracle
// ---------------------------------------------------------------------------

namespace detail {

// Induced subgraph on the 2-hop view of v, carrying over identifiers.
struct LocalView {
  Graph graph;
  Configuration config;
  int target = 0;  // v's index in the subgraph
};

inline std::optional<LocalView> local_view(const Graph& g, const Configuration& c, int v,
                                           int max_nodes) {
  Locality loc = locality(g, v, 2);
  if (static_cast<int>(loc.members.size()) > max_nodes) return std::nullopt;
  LocalView view;
  view.graph.n = static_cast<int>(loc.members.size());
  view.graph.adj.assign(view.graph.n, {});
  view.graph.ids.resize(view.graph.n);
  view.config = Configuration(view.graph.n);
  for (int i = 0; i < view.graph.n; ++i) {
    const int node = loc.members[i];
    view.graph.ids[i] = g.ids[node];
    view.config.agents[i].state = c.agents[node].state;
    // secondary variables carried over where they stay inside the view
    const int par = c.agents[node].parent;
    view.config.agents[i].parent = par >= 0 ? loc.index_of(par) : kNoParent;
    for (int p : c.agents[node].parents) {
      const int q = loc.index_of(p);
      if (q >= 0) insert_parent(view.config.agents[i].parents, q);
    }
  }
  for (auto [a, b] : loc.induced_edges) {
    const int i = loc.index_of(a), j = loc.index_of(b);
    view.graph.adj[i].push_back(j);
    view.graph.adj[j].push_back(i);
  }
  for (auto& nb : view.graph.adj) std::sort(nb.begin(), nb.end());
  view.target = loc.index_of(v);
  return view;
}

// Bounded reachability over the view: from each configuration any single
// enabled positive-probability rule may fire. Collects whether some quiescent
// completion leaves the target OUT.
inline std::optional<bool> target_can_end_out(const AlgorithmDescriptor& alg, const LocalView& view,
                                              int max_configs) {
  ProbContext probs;  // fixed-mode probabilities: only the epsilon rule can be zero
  std::unordered_set<uint64_t> seen;
  std::vector<Configuration> frontier{view.config};
  seen.insert(digest(view.config, alg.declared_vars));
  while (!frontier.empty()) {
    if (static_cast<int>(seen.size()) > max_configs) return std::nullopt;
    Configuration cur = std::move(frontier.back());
    frontier.pop_back();
    bool any_enabled = false;
    for (int v = 0; v < view.graph.n; ++v) {
      const Rule* r = first_enabled(alg, view.graph, cur, v);
      if (!r) continue;
      if (probs.probability(view.graph, cur, v, *r) <= 0.0) continue;
      any_enabled = true;
      Configuration next = cur;
      next.agents[v] = r->apply(view.graph, cur, v);
      const uint64_t d = digest(next, alg.declared_vars);
      if (seen.insert(d).second) frontier.push_back(std::move(next));
    }
    if (!any_enabled && !cur.is_in(view.target)) return true;
  }
  return false;
}

}  // namespace detail

// Decides whether skipping an IS-entering rule can pay off: true when some
// reachable completion of the 2-hop view leaves v a plain member. dpMIS has a
// unique completion and vpMIS entry guards are dead-ends, so neither ever
// benefits.
inline bool beneficial_violation(const AlgorithmDescriptor& alg, const Graph& g,
                                 const Configuration& c, int v, int max_nodes = 16,
                                 int max_configs = 4096) {
  if (alg.id == AlgorithmId::dpMIS || alg.id == AlgorithmId::vpMIS) return false;
  auto view = detail::local_view(g, c, v, max_nodes);
  if (view) {
    auto out = detail::target_can_end_out(alg, *view, max_configs);
    if (out.has_value()) return *out;
  }
  // view too large: a pending competitor marks a plausible alternative
  for (int w : g.adj[v])
    if (pending(g, c, w)) return true;
  return false;
}

// Decides whether an unauthorized IN-to-OUT move can pay off. From legitimate
// configurations the fault-containing algorithms restore the exiting agent,
// so nothing is gained there.
inline bool beneficial_exit(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c,
                            int v, bool legitimate, int max_nodes = 16, int max_configs = 4096) {
  if (alg.id == AlgorithmId::dpMIS) return false;
  if (legitimate && (alg.id == AlgorithmId::pfMIS || alg.id == AlgorithmId::dtMIS)) return false;
  Configuration flipped = c;
  flipped.agents[v].state = NodeState::OUT;
  auto view = detail::local_view(g, flipped, v, max_nodes);
  if (view) {
    auto out = detail::target_can_end_out(alg, *view, max_configs);
    if (out.has_value()) return *out;
  }
  return deflection_condition(g, c, v);
}

// Violation decision for one enabled IS-entering rule at one (agent, round)
// opportunity. Utility-driven agents only ever skip deterministic entry
// rules: a probabilistic rule already encodes rational hesitation through its
// behavior strategy.
inline bool apply_violation(const DeviationModel& model, const AlgorithmDescriptor& alg,
                            const Graph& g, const Configuration& c, int v, const Rule& rule,
                            RngStream& rng) {
  switch (model.policy) {
    case DeviationPolicy::Always:
      return true;
    case DeviationPolicy::Probabilistic:
      return rng.bernoulli(model.w);
    case DeviationPolicy::UtilityDriven:
      if (rule.prob_source != ProbSource::Always) return false;
      return beneficial_violation(alg, g, c, v);
  }
  return false;
}

}  // namespace selfstab
