#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfstab/core.hpp"
#include "selfstab/graph.hpp"
#include "selfstab/rng.hpp"
#include "selfstab/scheduler.hpp"

namespace selfstab {

enum class AlgorithmId { bMIS = 0, vtMIS, pfMIS, dtMIS, vpMIS, dpMIS };

constexpr int kAlgorithmCount = 6;

constexpr std::array<AlgorithmId, kAlgorithmCount> kAllAlgorithms = {
    AlgorithmId::bMIS, AlgorithmId::vtMIS, AlgorithmId::pfMIS,
    AlgorithmId::dtMIS, AlgorithmId::vpMIS, AlgorithmId::dpMIS};

// Where a rule's execution probability comes from.
enum class ProbSource { Always, ParamP, ParamQ, ParamPc, Game };

struct Rule {
  int index = 0;  // 1-based, listing order
  ProbSource prob_source = ProbSource::Always;
  unsigned touches = kVarState;
  bool (*guard)(const Graph&, const Configuration&, int) = nullptr;
  AgentState (*apply)(const Graph&, const Configuration&, int) = nullptr;
};

struct AlgorithmDescriptor {
  AlgorithmId id{};
  std::string name;
  std::vector<Rule> rules;
  unsigned declared_vars = kVarState;
  SchedulerKind required_scheduler = SchedulerKind::DistributedRandomized;
  bool uses_ids = false;
};

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

// pfMIS: a pending agent hesitates when the local parent pattern shows that a
// neighboring cluster-head just suffered an IN-to-OUT fault, so that only the
// faulty agent re-enters.
inline bool hesitate_pf(const Graph& g, const Configuration& c, int v) {
  const int w = c.agents[v].parent;
  if (w == kNoParent) return false;
  if (!g.has_edge(v, w)) return false;  // parent must name a neighbor
  for (int z : g.adj[v])
    if (z != w && c.agents[z].parent == v) return false;
  for (int u : g.adj[w]) {
    if (u == v) continue;
    if (c.is_in(u)) return false;
    if (c.agents[u].parent != w && c.agents[u].parent != kNoParent) return false;
  }
  const int wp = c.agents[w].parent;
  if (wp == kNoParent || wp != v) return true;
  if (g.ids[w] < g.ids[v]) return true;
  for (int y : g.adj[w])
    if (y != v && c.agents[y].parent == w) return true;
  return false;
}

// dtMIS variant of hesitate over the `parents` sets.
inline bool hesitate_dt(const Graph& g, const Configuration& c, int v) {
  const auto& pv = c.agents[v].parents;
  if (pv.empty()) return false;
  for (int w : g.adj[v]) {
    if (!contains_parent(pv, w)) continue;
    bool ok = true;
    for (int z : g.adj[v]) {
      if (z != w && contains_parent(c.agents[z].parents, v)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    for (int z : g.adj[w]) {
      if (z == v) continue;
      if (c.is_in(z) || !contains_parent(c.agents[z].parents, w)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    bool last = !contains_parent(c.agents[w].parents, v) || g.ids[w] < g.ids[v];
    if (!last) {
      for (int z : g.adj[w]) {
        if (z != v && contains_parent(c.agents[z].parents, w)) {
          last = true;
          break;
        }
      }
    }
    if (last) return true;
  }
  return false;
}

// dpMIS: some neighbor is a cluster-head with a smaller identifier.
inline bool liberated(const Graph& g, const Configuration& c, int v) {
  for (int w : g.adj[v])
    if (c.is_in(w) && g.ids[w] < g.ids[v]) return true;
  return false;
}

// vpMIS total order: larger degree wins, identifiers break ties.
inline bool vp_cmp(const Graph& g, int v, int w) {
  const int dv = g.degree(v), dw = g.degree(w);
  return dv > dw || (dv == dw && g.ids[v] < g.ids[w]);
}

// vpMIS conflict restricted to neighbors that dominate v in the cmp order.
inline bool conflict_star(const Graph& g, const Configuration& c, int v) {
  if (!c.is_in(v)) return false;
  for (int w : g.adj[v])
    if (c.is_in(w) && !vp_cmp(g, v, w)) return true;
  return false;
}

namespace rules {

inline AgentState enter(const Graph&, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  a.state = NodeState::IN;
  return a;
}

inline AgentState exit(const Graph&, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  a.state = NodeState::OUT;
  return a;
}

// --- bMIS / vtMIS ---

inline bool guard_pending(const Graph& g, const Configuration& c, int v) { return pending(g, c, v); }
inline bool guard_conflict(const Graph& g, const Configuration& c, int v) { return conflict(g, c, v); }

// --- pfMIS ---

inline bool pf_r1(const Graph& g, const Configuration& c, int v) {
  return pending(g, c, v) && !hesitate_pf(g, c, v);
}

// Unique IN neighbor of v, or -1 if none/multiple.
inline int unique_in_neighbor(const Graph& g, const Configuration& c, int v) {
  int found = -1;
  for (int w : g.adj[v]) {
    if (c.is_in(w)) {
      if (found >= 0) return -1;
      found = w;
    }
  }
  return found;
}

inline bool pf_r3(const Graph& g, const Configuration& c, int v) {
  if (c.is_in(v)) return false;
  for (int u : g.adj[v])
    if (pending(g, c, u)) return false;
  const int w = unique_in_neighbor(g, c, v);
  return w >= 0 && c.agents[v].parent != w;
}

inline AgentState pf_r3_apply(const Graph& g, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  a.parent = unique_in_neighbor(g, c, v);
  return a;
}

inline bool pf_r4(const Graph& g, const Configuration& c, int v) {
  if (c.is_in(v) || c.agents[v].parent == kNoParent) return false;
  int heads = 0;
  for (int w : g.adj[v])
    if (c.is_in(w) && ++heads >= 2) return true;
  return false;
}

inline AgentState clear_parent(const Graph&, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  a.parent = kNoParent;
  return a;
}

inline bool pf_r5(const Graph& g, const Configuration& c, int v) {
  return c.is_in(v) && !conflict(g, c, v) && c.agents[v].parent != kNoParent;
}

// --- dtMIS ---

inline bool dt_r1(const Graph& g, const Configuration& c, int v) {
  return pending(g, c, v) && !hesitate_dt(g, c, v);
}

inline int dt_r3_witness(const Graph& g, const Configuration& c, int v) {
  for (int w : g.adj[v])
    if (contains_parent(c.agents[v].parents, w) && !c.is_in(w) && !pending(g, c, w)) return w;
  return -1;
}

inline bool dt_r3(const Graph& g, const Configuration& c, int v) {
  return !c.is_in(v) && dt_r3_witness(g, c, v) >= 0;
}

inline AgentState dt_r3_apply(const Graph& g, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  const int w = dt_r3_witness(g, c, v);
  a.parents.erase(std::remove(a.parents.begin(), a.parents.end(), w), a.parents.end());
  return a;
}

inline int dt_r4_witness(const Graph& g, const Configuration& c, int v) {
  for (int w : g.adj[v])
    if (c.is_in(w) && !contains_parent(c.agents[v].parents, w)) return w;
  return -1;
}

inline bool dt_r4(const Graph& g, const Configuration& c, int v) {
  return !c.is_in(v) && dt_r4_witness(g, c, v) >= 0;
}

inline AgentState dt_r4_apply(const Graph& g, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  insert_parent(a.parents, dt_r4_witness(g, c, v));
  return a;
}

inline bool dt_r5(const Graph& g, const Configuration& c, int v) {
  return c.is_in(v) && !conflict(g, c, v) && !c.agents[v].parents.empty();
}

inline AgentState clear_parents(const Graph&, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  a.parents.clear();
  return a;
}

inline bool dt_r6(const Graph& g, const Configuration& c, int v) {
  for (int w : c.agents[v].parents)
    if (!g.has_edge(v, w)) return true;
  return false;
}

inline AgentState dt_r6_apply(const Graph& g, const Configuration& c, int v) {
  AgentState a = c.agents[v];
  std::vector<int> kept;
  for (int w : a.parents)
    if (g.has_edge(v, w)) kept.push_back(w);
  a.parents = std::move(kept);
  return a;
}

inline bool dt_r7(const Graph& g, const Configuration& c, int v) {
  return c.is_in(v) && !conflict(g, c, v);
}

// --- vpMIS ---

inline bool vp_r1(const Graph& g, const Configuration& c, int v) {
  if (!pending(g, c, v)) return false;
  for (int w : g.adj[v])
    if (pending(g, c, w) && !vp_cmp(g, v, w)) return false;
  return true;
}

inline bool vp_r2(const Graph& g, const Configuration& c, int v) { return conflict_star(g, c, v); }

// --- dpMIS ---

inline bool dp_r1(const Graph& g, const Configuration& c, int v) {
  if (c.is_in(v)) return false;
  for (int w : g.adj[v])
    if (g.ids[v] >= g.ids[w] && !liberated(g, c, w)) return false;
  return true;
}

inline bool dp_r2(const Graph& g, const Configuration& c, int v) {
  if (!c.is_in(v)) return false;
  for (int w : g.adj[v])
    if (!liberated(g, c, w)) return true;
  return false;
}

}  // namespace rules

// ---------------------------------------------------------------------------
// Descriptors
// ---------------------------------------------------------------------------

namespace detail {

inline AlgorithmDescriptor make_descriptor(AlgorithmId id) {
  AlgorithmDescriptor d;
  d.id = id;
  switch (id) {
    case AlgorithmId::bMIS:
      d.name = "bMIS";
      d.declared_vars = kVarState;
      d.required_scheduler = SchedulerKind::DistributedRandomized;
      d.rules = {
          {1, ProbSource::Always, kVarState, rules::guard_pending, rules::enter},
          {2, ProbSource::Always, kVarState, rules::guard_conflict, rules::exit},
      };
      break;
    case AlgorithmId::vtMIS:
      d.name = "vtMIS";
      d.declared_vars = kVarState;
      d.required_scheduler = SchedulerKind::DistributedRandomized;
      d.rules = {
          {1, ProbSource::ParamP, kVarState, rules::guard_pending, rules::enter},
          {2, ProbSource::Always, kVarState, rules::guard_conflict, rules::exit},
      };
      break;
    case AlgorithmId::pfMIS:
      d.name = "pfMIS";
      d.declared_vars = kVarState | kVarParent;
      d.required_scheduler = SchedulerKind::DistributedRandomized;
      d.uses_ids = true;  // only inside hesitate's id comparison branch
      d.rules = {
          {1, ProbSource::Always, kVarState, rules::pf_r1, rules::enter},
          {2, ProbSource::Always, kVarState, rules::guard_conflict, rules::exit},
          {3, ProbSource::Always, kVarParent, rules::pf_r3, rules::pf_r3_apply},
          {4, ProbSource::Always, kVarParent, rules::pf_r4, rules::clear_parent},
          {5, ProbSource::Always, kVarParent, rules::pf_r5, rules::clear_parent},
      };
      break;
    case AlgorithmId::dtMIS:
      d.name = "dtMIS";
      d.declared_vars = kVarState | kVarParents;
      d.required_scheduler = SchedulerKind::DistributedRandomized;
      d.uses_ids = true;
      d.rules = {
          {1, ProbSource::ParamP, kVarState, rules::dt_r1, rules::enter},
          {2, ProbSource::Always, kVarState, rules::guard_conflict, rules::exit},
          {3, ProbSource::Always, kVarParents, rules::dt_r3, rules::dt_r3_apply},
          {4, ProbSource::Always, kVarParents, rules::dt_r4, rules::dt_r4_apply},
          {5, ProbSource::Always, kVarParents, rules::dt_r5, rules::clear_parents},
          {6, ProbSource::Always, kVarParents, rules::dt_r6, rules::dt_r6_apply},
          {7, ProbSource::ParamQ, kVarState, rules::dt_r7, rules::exit},
      };
      break;
    case AlgorithmId::vpMIS:
      d.name = "vpMIS";
      d.declared_vars = kVarState;
      d.required_scheduler = SchedulerKind::Unfair;
      d.uses_ids = true;
      d.rules = {
          {1, ProbSource::ParamPc, kVarState, rules::vp_r1, rules::enter},
          {2, ProbSource::Always, kVarState, rules::vp_r2, rules::exit},
      };
      break;
    case AlgorithmId::dpMIS:
      d.name = "dpMIS";
      d.declared_vars = kVarState;
      d.required_scheduler = SchedulerKind::Unfair;
      d.uses_ids = true;
      d.rules = {
          {1, ProbSource::Always, kVarState, rules::dp_r1, rules::enter},
          {2, ProbSource::Always, kVarState, rules::dp_r2, rules::exit},
      };
      break;
  }
  return d;
}

}  // namespace detail

inline const AlgorithmDescriptor& descriptor(AlgorithmId id) {
  static const std::array<AlgorithmDescriptor, kAlgorithmCount> table = [] {
    std::array<AlgorithmDescriptor, kAlgorithmCount> t;
    for (int i = 0; i < kAlgorithmCount; ++i) t[i] = detail::make_descriptor(static_cast<AlgorithmId>(i));
    return t;
  }();
  return table[static_cast<int>(id)];
}

inline AlgorithmId algorithm_from_name(std::string_view name) {
  for (AlgorithmId id : kAllAlgorithms)
    if (descriptor(id).name == name) return id;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

inline const AlgorithmDescriptor& build(std::string_view name) {
  return descriptor(algorithm_from_name(name));
}

// Guard-enabled rule indices in listing order.
inline std::vector<int> enabled_rules(const AlgorithmDescriptor& alg, const Graph& g,
                                      const Configuration& c, int v) {
  std::vector<int> out;
  for (const Rule& r : alg.rules)
    if (r.guard(g, c, v)) out.push_back(r.index);
  return out;
}

// Lowest-index enabled rule, or nullptr. When several rules are enabled at one
// agent the lowest index is evaluated; the rest wait.
inline const Rule* first_enabled(const AlgorithmDescriptor& alg, const Graph& g,
                                 const Configuration& c, int v) {
  for (const Rule& r : alg.rules)
    if (r.guard(g, c, v)) return &r;
  return nullptr;
}

// Supplies execution probabilities for probabilistic rules. When `game_prob`
// is set it overrides the fixed parameters for ParamP/ParamQ rules.
struct ProbContext {
  double p = 1.0;
  double pc = 1.0;
  double epsilon = 0.1;   // dtMIS R7 fixed-mode rate
  double q_const = -1.0;  // >= 0 pins R7's q to a constant instead
  std::function<double(const Graph&, const Configuration&, int, const Rule&)> game_prob;

  double probability(const Graph& g, const Configuration& c, int v, const Rule& r) const {
    switch (r.prob_source) {
      case ProbSource::Always:
        return 1.0;
      case ProbSource::ParamPc:
        return pc;
      case ProbSource::ParamP:
        if (game_prob) return game_prob(g, c, v, r);
        return p;
      case ProbSource::ParamQ:
        if (game_prob) return game_prob(g, c, v, r);
        if (q_const >= 0.0) return q_const;
        // a cluster-head leaves only while it could profit, i.e. while some
        // neighbor is pending and not hesitating
        for (int w : g.adj[v])
          if (pending(g, c, w) && !hesitate_dt(g, c, w)) return epsilon;
        return 0.0;
      case ProbSource::Game:
        if (game_prob) return game_prob(g, c, v, r);
        return 1.0;
    }
    return 1.0;
  }
};

struct ExecResult {
  AgentState next;
  bool executed = false;
};

// Draws against the rule's execution probability and applies the action to v
// only. The rule must be enabled.
inline ExecResult execute(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c,
                          int v, int rule_index, const ProbContext& ctx, RngStream& rng) {
  const Rule* rule = nullptr;
  for (const Rule& r : alg.rules)
    if (r.index == rule_index) rule = &r;
  if (!rule || !rule->guard(g, c, v)) throw std::logic_error("execute: rule not enabled");
  const double prob = ctx.probability(g, c, v, *rule);
  ExecResult res;
  res.next = c.agents[v];
  if (prob >= 1.0)
    res.executed = true;
  else if (prob <= 0.0)
    res.executed = false;
  else
    res.executed = rng.bernoulli(prob);
  if (res.executed) res.next = rule->apply(g, c, v);
  return res;
}

// Iterative local-minimum-id peeling; the unique MIS that dpMIS stabilizes to.
inline std::vector<int> reference_unique_mis(const Graph& g) {
  std::vector<int> result;
  std::vector<char> alive(g.n, 1);
  int remaining = g.n;
  while (remaining > 0) {
    std::vector<int> round;
    for (int v = 0; v < g.n; ++v) {
      if (!alive[v]) continue;
      bool is_min = true;
      for (int w : g.adj[v])
        if (alive[w] && g.ids[w] < g.ids[v]) {
          is_min = false;
          break;
        }
      if (is_min) round.push_back(v);
    }
    for (int v : round) {
      result.push_back(v);
      if (alive[v]) {
        alive[v] = 0;
        --remaining;
      }
      for (int w : g.adj[v])
        if (alive[w]) {
          alive[w] = 0;
          --remaining;
        }
    }
  }
  std::sort(result.begin(), result.end());
  return result;
}

inline Configuration config_from_in_set(const Graph& g, const std::vector<int>& in_set) {
  Configuration c(g.n);
  for (int v : in_set) c.agents[v].state = NodeState::IN;
  return c;
}

}  // namespace selfstab
