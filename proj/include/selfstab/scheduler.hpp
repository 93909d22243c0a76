#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "selfstab/graph.hpp"
#include "selfstab/rng.hpp"

namespace selfstab {

enum class SchedulerKind { Central, Synchronous, DistributedRandomized, Unfair };

enum class AdversaryKind { MaxIdFirst, MinProgress, WorstChain };

struct SchedulerPolicy {
  SchedulerKind kind = SchedulerKind::DistributedRandomized;
  double p_s = 1.0;  // selection probability ("synchrony") when randomized
  AdversaryKind adversary = AdversaryKind::MaxIdFirst;

  void validate() const {
    if (kind == SchedulerKind::DistributedRandomized && !(p_s > 0.0 && p_s <= 1.0))
      throw std::invalid_argument("scheduler: need 0 < p_s <= 1");
  }
};

// Extra knowledge the unfair adversaries may consult.
struct AdversaryContext {
  const Graph* g = nullptr;
  // True when executing the agent's priority rule this round would move it
  // into the IS (the min-progress adversary pairs such agents up to
  // manufacture conflicts).
  std::function<bool(int)> entering;
};

namespace detail {

inline std::vector<int> pick_singleton(int v) { return {v}; }

inline int extreme_id(const std::vector<int>& enabled, const AdversaryContext* ctx, bool largest) {
  int best = enabled.front();
  for (int v : enabled) {
    int idv = ctx && ctx->g ? ctx->g->ids[v] : v;
    int idb = ctx && ctx->g ? ctx->g->ids[best] : best;
    if (largest ? idv > idb : idv < idb) best = v;
  }
  return best;
}

}  // namespace detail

// Chooses which enabled agents act this round. Always returns a subset of
// `enabled`, non-empty whenever `enabled` is non-empty.
inline std::vector<int> select(const SchedulerPolicy& policy, const std::vector<int>& enabled,
                               long round, RngStream& rng, const AdversaryContext* ctx = nullptr) {
  (void)round;
  if (enabled.empty()) return {};
  switch (policy.kind) {
    case SchedulerKind::Central:
      return detail::pick_singleton(enabled[rng.below(enabled.size())]);
    case SchedulerKind::Synchronous:
      return enabled;
    case SchedulerKind::DistributedRandomized: {
      // iid Bernoulli(p_s) per enabled agent, redrawn until non-empty to honor
      // the non-empty-selection obligation.
      std::vector<int> chosen;
      for (;;) {
        chosen.clear();
        for (int v : enabled)
          if (rng.bernoulli(policy.p_s)) chosen.push_back(v);
        if (!chosen.empty()) return chosen;
      }
    }
    case SchedulerKind::Unfair:
      switch (policy.adversary) {
        case AdversaryKind::MaxIdFirst:
          return detail::pick_singleton(detail::extreme_id(enabled, ctx, true));
        case AdversaryKind::WorstChain:
          // serializes progress one agent per round, smallest id first
          return detail::pick_singleton(detail::extreme_id(enabled, ctx, false));
        case AdversaryKind::MinProgress: {
          // prefer simultaneous adjacent IS entries, which create conflicts
          if (ctx && ctx->g && ctx->entering) {
            std::vector<int> clash;
            for (int v : enabled) {
              if (!ctx->entering(v)) continue;
              for (int w : enabled) {
                if (w != v && ctx->g->has_edge(v, w) && ctx->entering(w)) {
                  clash.push_back(v);
                  break;
                }
              }
            }
            if (clash.size() >= 2) return clash;
          }
          return detail::pick_singleton(detail::extreme_id(enabled, ctx, true));
        }
      }
  }
  return detail::pick_singleton(enabled.front());
}

}  // namespace selfstab
