#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "selfstab/algorithms.hpp"
#include "selfstab/core.hpp"
#include "selfstab/graph.hpp"
#include "selfstab/selfish.hpp"
#include "selfstab/sim.hpp"

namespace selfstab {

// ---------------------------------------------------------------------------
// Small-graph catalog: all connected graphs up to isomorphism
// ---------------------------------------------------------------------------

namespace detail {

inline uint64_t canonical_form(int n, uint64_t edge_mask, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  uint64_t best = ~0ull;
  std::map<std::pair<int, int>, int> pair_index;
  for (size_t i = 0; i < pairs.size(); ++i) pair_index[pairs[i]] = static_cast<int>(i);
  do {
    uint64_t mask = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      if (!((edge_mask >> i) & 1ull)) continue;
      int a = perm[pairs[i].first], b = perm[pairs[i].second];
      if (a > b) std::swap(a, b);
      mask |= 1ull << pair_index[{a, b}];
    }
    best = std::min(best, mask);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace detail

// Connected graphs on 1..max_n nodes, one representative per isomorphism
// class, identifiers 1..n by node index. max_n <= 6.
inline std::vector<Graph> connected_graph_catalog(int max_n) {
  if (max_n > 6) throw std::invalid_argument("catalog: max_n <= 6");
  std::vector<Graph> catalog;
  for (int n = 1; n <= max_n; ++n) {
    std::vector<std::pair<int, int>> pairs;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
    std::set<uint64_t> seen;
    const uint64_t total = 1ull << pairs.size();
    for (uint64_t mask = 0; mask < total; ++mask) {
      std::vector<std::pair<int, int>> edges;
      for (size_t i = 0; i < pairs.size(); ++i)
        if ((mask >> i) & 1ull) edges.push_back(pairs[i]);
      Graph g = graph_from_edges(n, edges);
      if (!g.connected()) continue;
      const uint64_t canon = detail::canonical_form(n, mask, pairs);
      if (seen.insert(canon).second) catalog.push_back(std::move(g));
    }
  }
  return catalog;
}

// ---------------------------------------------------------------------------
// Legitimate-configuration enumeration
// ---------------------------------------------------------------------------

namespace detail {

// Stabilized secondary variables for a given membership pattern, obtained by
// running the parent rules to fixpoint.
inline void derive_secondary(const AlgorithmDescriptor& alg, const Graph& g, Configuration& c) {
  if (!(alg.declared_vars & (kVarParent | kVarParents))) return;
  for (int pass = 0; pass < g.n + 2; ++pass) {
    bool changed = false;
    for (int v = 0; v < g.n; ++v) {
      for (const Rule& r : alg.rules) {
        if (r.touches & kVarState) continue;
        if (!r.guard(g, c, v)) continue;
        AgentState next = r.apply(g, c, v);
        if (!(next == c.agents[v])) {
          c.agents[v] = std::move(next);
          changed = true;
        }
        break;
      }
    }
    if (!changed) return;
  }
}

inline bool rule_positive(const Graph& g, const Configuration& c, int v, const Rule& r) {
  static const ProbContext probs;  // fixed-mode probabilities, epsilon rule for R7
  return r.guard(g, c, v) && probs.probability(g, c, v, r) > 0.0;
}

inline bool quiescent_config(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c) {
  for (int v = 0; v < g.n; ++v)
    for (const Rule& r : alg.rules)
      if (rule_positive(g, c, v, r)) return false;
  return true;
}

}  // namespace detail

struct LegitimateSet {
  std::vector<Configuration> configs;
  std::set<uint64_t> digests;
};

// All quiescent configurations of the algorithm on g. State patterns are
// enumerated exhaustively; secondary variables are derived by running the
// parent rules to fixpoint.
inline LegitimateSet enumerate_legitimate(const AlgorithmDescriptor& alg, const Graph& g) {
  if (g.n > 12) throw std::invalid_argument("enumerate_legitimate: n <= 12");
  LegitimateSet out;
  for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
    Configuration c(g.n);
    for (int v = 0; v < g.n; ++v)
      if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
    detail::derive_secondary(alg, g, c);
    if (!detail::quiescent_config(alg, g, c)) continue;
    if (!is_mis(g, c)) throw std::logic_error("enumerate_legitimate: quiescent non-MIS state");
    const uint64_t d = digest(c, alg.declared_vars);
    if (out.digests.insert(d).second) out.configs.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nash check
// ---------------------------------------------------------------------------

namespace detail {

// Explores the computation tree after a unilateral deviation; scheduler
// choices are OR-branches over non-empty subsets of enabled agents and
// positive-probability rules may fire. Returns true when a legitimate
// configuration with gain(v) > target is reachable within the step bound.
inline bool improving_path(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c0,
                           int v, double target, const GainParams& params, int depth_bound,
                           int max_visited = 200000) {
  struct Node {
    Configuration c;
    int depth;
  };
  std::unordered_set<uint64_t> seen;
  std::vector<Node> stack{{c0, 0}};
  seen.insert(digest(c0, alg.declared_vars));
  while (!stack.empty()) {
    if (static_cast<int>(seen.size()) > max_visited)
      throw std::runtime_error("nash_check: state bound exceeded");
    Node node = std::move(stack.back());
    stack.pop_back();
    std::vector<int> enabled;
    std::vector<const Rule*> rule_of(g.n, nullptr);
    for (int u = 0; u < g.n; ++u) {
      for (const Rule& r : alg.rules) {
        if (rule_positive(g, node.c, u, r)) {
          rule_of[u] = &r;
          enabled.push_back(u);
          break;
        }
      }
    }
    if (enabled.empty()) {
      if (gain(g, node.c, v, params) > target) return true;
      continue;
    }
    if (node.depth >= depth_bound) continue;
    const uint32_t subsets = 1u << enabled.size();
    for (uint32_t sub = 1; sub < subsets; ++sub) {
      Configuration next = node.c;
      for (size_t k = 0; k < enabled.size(); ++k) {
        if (!((sub >> k) & 1u)) continue;
        const int u = enabled[k];
        next.agents[u] = rule_of[u]->apply(g, node.c, u);
      }
      const uint64_t d = digest(next, alg.declared_vars);
      if (seen.insert(d).second) stack.push_back({std::move(next), node.depth + 1});
    }
  }
  return false;
}

}  // namespace detail

// True iff no agent has a unilateral state flip from which some bounded
// computation reaches a legitimate configuration with strictly higher gain.
inline bool nash_check(const AlgorithmDescriptor& alg, const Graph& g, const Configuration& c,
                       const GainParams& params, int depth_bound) {
  if (g.n > 6 || depth_bound > 8) throw std::invalid_argument("nash_check: n <= 6, depth <= 8");
  for (int v = 0; v < g.n; ++v) {
    const double base = gain(g, c, v, params);
    Configuration c1 = c;
    c1.agents[v].state = c.is_in(v) ? NodeState::OUT : NodeState::IN;
    if (detail::improving_path(alg, g, c1, v, base, params, depth_bound)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Fault-containment audit
// ---------------------------------------------------------------------------

struct ContainmentCase {
  uint64_t config_digest = 0;
  int agent = -1;
  int max_depth = 0;
  bool always_restored = true;
  bool always_recovered = true;
};

struct ContainmentReport {
  std::vector<ContainmentCase> cases;
  int max_depth = 0;
  double restored_rate = 1.0;
  bool all_recovered = true;
};

// For every legitimate configuration and IN agent: inject the IN-to-OUT
// 1-fault and replay recovery under sampled scheduler sequences.
inline ContainmentReport fault_containment_audit(const AlgorithmDescriptor& alg, const Graph& g,
                                                 int scheduler_samples = 20,
                                                 double p_s = 0.7, uint64_t seed = 20240501) {
  if (g.n > 10) throw std::invalid_argument("fault_containment_audit: n <= 10");
  ContainmentReport report;
  const LegitimateSet legit = enumerate_legitimate(alg, g);
  long restored = 0, total = 0;
  for (const Configuration& c : legit.configs) {
    for (int v = 0; v < g.n; ++v) {
      if (!c.is_in(v)) continue;
      ContainmentCase cs;
      cs.config_digest = digest(c, alg.declared_vars);
      cs.agent = v;
      auto [faulted, ev] = inject_perturbation(alg, g, c, v);
      for (int s = 0; s < scheduler_samples; ++s) {
        EngineOptions opt;
        opt.scheduler.kind = SchedulerKind::DistributedRandomized;
        opt.scheduler.p_s = p_s;
        opt.round_limit = 50L * g.n + 50;
        opt.seed = derive_seed(seed, static_cast<uint64_t>(v), static_cast<uint64_t>(s),
                               cs.config_digest);
        Engine engine(g, alg, opt);
        RunResult run = engine.run(faulted);
        cs.always_recovered &= run.converged;
        cs.max_depth = std::max(cs.max_depth, contamination_depth(g, ev, run.movers));
        const bool same = digest(run.final_config, alg.declared_vars) == cs.config_digest;
        cs.always_restored &= same;
        ++total;
        if (same) ++restored;
      }
      report.max_depth = std::max(report.max_depth, cs.max_depth);
      report.all_recovered &= cs.always_recovered;
      report.cases.push_back(cs);
    }
  }
  report.restored_rate = total ? static_cast<double>(restored) / total : 1.0;
  return report;
}

// ---------------------------------------------------------------------------
// Weak stabilization
// ---------------------------------------------------------------------------

namespace detail {

inline void enumerate_full_configs(const AlgorithmDescriptor& alg, const Graph& g,
                                   std::vector<Configuration>& out, long bound) {
  Configuration c(g.n);
  // per-agent variable domain sizes
  std::vector<long> domain(g.n, 2);
  if (alg.declared_vars & kVarParent)
    for (int v = 0; v < g.n; ++v) domain[v] *= g.degree(v) + 1;
  if (alg.declared_vars & kVarParents)
    for (int v = 0; v < g.n; ++v) domain[v] *= 1L << g.degree(v);
  long total = 1;
  for (int v = 0; v < g.n; ++v) {
    total *= domain[v];
    if (total > bound) throw std::invalid_argument("weak_stabilization_check: state space too large");
  }
  for (long code = 0; code < total; ++code) {
    long rest = code;
    for (int v = 0; v < g.n; ++v) {
      long local = rest % domain[v];
      rest /= domain[v];
      c.agents[v] = AgentState{};
      c.agents[v].state = (local & 1) ? NodeState::IN : NodeState::OUT;
      local >>= 1;
      if (alg.declared_vars & kVarParent) {
        const long k = local % (g.degree(v) + 1);
        local /= g.degree(v) + 1;
        c.agents[v].parent = k == 0 ? kNoParent : g.adj[v][k - 1];
      }
      if (alg.declared_vars & kVarParents) {
        for (int b = 0; b < g.degree(v); ++b)
          if ((local >> b) & 1) insert_parent(c.agents[v].parents, g.adj[v][b]);
      }
    }
    out.push_back(c);
  }
}

}  // namespace detail

// From every configuration of the full declared-variable space, some
// computation (existential over scheduler subsets and positive-probability
// draws) reaches a legitimate configuration.
inline bool weak_stabilization_check(const AlgorithmDescriptor& alg, const Graph& g,
                                     long state_bound = 200000) {
  if (g.n > 6) throw std::invalid_argument("weak_stabilization_check: n <= 6");
  std::vector<Configuration> all;
  detail::enumerate_full_configs(alg, g, all, state_bound);

  std::unordered_map<uint64_t, int> index;
  for (size_t i = 0; i < all.size(); ++i) index.emplace(digest(all[i], alg.declared_vars), i);

  // forward edges under non-empty subsets of enabled agents
  std::vector<std::vector<int>> redges(all.size());
  std::vector<char> legit(all.size(), 0);
  for (size_t i = 0; i < all.size(); ++i) {
    const Configuration& c = all[i];
    std::vector<int> enabled;
    std::vector<const Rule*> rule_of(g.n, nullptr);
    for (int u = 0; u < g.n; ++u) {
      for (const Rule& r : alg.rules) {
        if (detail::rule_positive(g, c, u, r)) {
          rule_of[u] = &r;
          enabled.push_back(u);
          break;
        }
      }
    }
    if (enabled.empty()) {
      legit[i] = 1;
      continue;
    }
    const uint32_t subsets = 1u << enabled.size();
    for (uint32_t sub = 1; sub < subsets; ++sub) {
      Configuration next = c;
      for (size_t k = 0; k < enabled.size(); ++k) {
        if (!((sub >> k) & 1u)) continue;
        next.agents[enabled[k]] = rule_of[enabled[k]]->apply(g, c, enabled[k]);
      }
      auto it = index.find(digest(next, alg.declared_vars));
      if (it != index.end() && it->second != static_cast<int>(i))
        redges[it->second].push_back(static_cast<int>(i));
    }
  }

  // reverse reachability from the legitimate set
  std::vector<char> reaches(all.size(), 0);
  std::vector<int> queue;
  for (size_t i = 0; i < all.size(); ++i)
    if (legit[i]) {
      reaches[i] = 1;
      queue.push_back(static_cast<int>(i));
    }
  while (!queue.empty()) {
    const int i = queue.back();
    queue.pop_back();
    for (int j : redges[i])
      if (!reaches[j]) {
        reaches[j] = 1;
        queue.push_back(j);
      }
  }
  return std::all_of(reaches.begin(), reaches.end(), [](char r) { return r != 0; });
}

}  // namespace selfstab
