#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "selfstab/algorithms.hpp"
#include "selfstab/core.hpp"
#include "selfstab/graph.hpp"
#include "selfstab/rng.hpp"

namespace selfstab {

// Types of boundary agents: whether the agent has a cluster-head neighbor
// beyond the modeling agent's view.
enum TypeValue : int { kTypeIn = 0, kTypeOut = 1 };

using TypeDist = std::array<double, 2>;  // indexed by TypeValue

enum class Action : int { Preserve = 0, Switch = 1 };

struct GameSizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Beliefs
// ---------------------------------------------------------------------------

// Per-boundary-agent distribution over types, plus stabilization flags.
struct BeliefState {
  std::vector<int> agents;  // boundary node indices, ascending
  std::vector<TypeDist> mu;
  std::vector<uint8_t> stabilized;

  int slot_of(int node) const {
    auto it = std::lower_bound(agents.begin(), agents.end(), node);
    if (it == agents.end() || *it != node) return -1;
    return static_cast<int>(it - agents.begin());
  }

  void check() const {
    for (const TypeDist& d : mu) {
      if (d[0] < -1e-12 || d[1] < -1e-12 || std::abs(d[0] + d[1] - 1.0) > 1e-12)
        throw std::logic_error("belief: not a distribution");
    }
  }
};

// mu(OUT) = p0^max(0, dbar - shared), the first-round approximation.
inline double initial_out_belief(double p0, int dbar, int shared_neighbors) {
  const int e = std::max(0, dbar - shared_neighbors);
  if (e == 0) return 1.0;
  return std::pow(p0, e);
}

inline int ceil_mean_degree(const Graph& g, const std::vector<int>& members) {
  long total = 0;
  for (int w : members) total += g.degree(w);
  return static_cast<int>(std::ceil(static_cast<double>(total) / static_cast<double>(members.size())));
}

inline BeliefState initial_type_belief(const Graph& g, const Locality& loc, const Configuration& c) {
  if (loc.radius != 2) throw std::invalid_argument("initial_type_belief: needs k = 2 locality");
  int out_count = 0;
  for (int w : loc.members)
    if (!c.is_in(w)) ++out_count;
  const double p0 = static_cast<double>(out_count) / static_cast<double>(loc.members.size());
  const int dbar = ceil_mean_degree(g, loc.members);

  BeliefState b;
  b.agents = loc.boundary;
  b.mu.resize(b.agents.size());
  b.stabilized.assign(b.agents.size(), 0);
  for (size_t i = 0; i < b.agents.size(); ++i) {
    const int u = b.agents[i];
    int shared = 0;  // agents in L(1) adjacent to u
    for (size_t m = 0; m < loc.members.size(); ++m) {
      if (loc.dist[m] <= 1 && g.has_edge(loc.members[m], u)) ++shared;
    }
    const double out = initial_out_belief(p0, dbar, shared);
    b.mu[i] = {1.0 - out, out};
  }
  return b;
}

// Bayes update of one agent's type distribution from an observed action.
// `likelihood[t]` is Pr(observed action | type t); all-zero mass is a belief
// contradiction and throws.
inline BeliefState belief_posterior(const BeliefState& prior, int agent_node,
                                    const TypeDist& likelihood) {
  const int s = prior.slot_of(agent_node);
  if (s < 0) throw std::invalid_argument("belief_posterior: unknown agent");
  BeliefState b = prior;
  const double num_in = b.mu[s][kTypeIn] * likelihood[kTypeIn];
  const double num_out = b.mu[s][kTypeOut] * likelihood[kTypeOut];
  const double z = num_in + num_out;
  if (z <= 0.0) throw std::runtime_error("belief_posterior: zero likelihood for every type");
  b.mu[s] = {num_in / z, num_out / z};
  return b;
}

inline TypeDist markov_push(const TypeDist& mu, const double rows[2][2]) {
  TypeDist out{};
  for (int to = 0; to < 2; ++to)
    for (int from = 0; from < 2; ++from) out[to] += mu[from] * rows[from][to];
  return out;
}

// One-step push-forward through the type transition, applied only while the
// stabilization score sum_t P(t -> t) mu(t) stays below 1/2; once it reaches
// 1/2 the neighborhood is deemed stabilized and the belief is frozen.
inline BeliefState belief_predict(const BeliefState& prior, int agent_node, const double rows[2][2]) {
  const int s = prior.slot_of(agent_node);
  if (s < 0) throw std::invalid_argument("belief_predict: unknown agent");
  BeliefState b = prior;
  const double score = rows[kTypeIn][kTypeIn] * b.mu[s][kTypeIn] +
                       rows[kTypeOut][kTypeOut] * b.mu[s][kTypeOut];
  if (score >= 0.5) {
    b.stabilized[s] = 1;
    return b;
  }
  b.mu[s] = markov_push(b.mu[s], rows);
  return b;
}

// Types are independent; a joint type's probability is the product of the
// per-agent marginals. Bit i of `theta_mask` set means agent i has type IN.
inline double joint_type_prob(const BeliefState& b, uint32_t theta_mask) {
  double p = 1.0;
  for (size_t i = 0; i < b.mu.size(); ++i)
    p *= (theta_mask >> i) & 1u ? b.mu[i][kTypeIn] : b.mu[i][kTypeOut];
  return p;
}

// ---------------------------------------------------------------------------
// Type transition estimation on a dbar-regular surrogate
// ---------------------------------------------------------------------------

enum class PolicyOracle { Myopic, FixedP };

struct TypeTransitionTable {
  // [st0][st1][tp0][tp1], states and types indexed IN=0 / OUT=1
  double prob[2][2][2][2];
  int dbar_used = 0;
  bool adjusted_degree = false;

  TypeTransitionTable() {
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int t0 = 0; t0 < 2; ++t0)
          for (int t1 = 0; t1 < 2; ++t1) prob[a][b][t0][t1] = (t0 == t1) ? 1.0 : 0.0;
  }

  void row(int st0, int st1, double out[2][2]) const {
    for (int t0 = 0; t0 < 2; ++t0)
      for (int t1 = 0; t1 < 2; ++t1) out[t0][t1] = prob[st0][st1][t0][t1];
  }
};

namespace detail {

inline std::vector<std::vector<int>> circulant_regular(int m, int degree) {
  std::vector<std::vector<int>> adj(m);
  auto link = [&adj](int a, int b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (int k = 1; k <= degree / 2; ++k)
    for (int i = 0; i < m; ++i)
      if ((i + k) % m != i) link(i, (i + k) % m);
  if (degree % 2 == 1)
    for (int i = 0; i < m / 2; ++i) link(i, i + m / 2);
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return adj;
}

// Largest feasible regular degree <= requested on m nodes (m*d must be even).
inline int feasible_degree(int m, int requested) {
  int d = std::min(requested, m - 1);
  if (d < 1) return 0;
  if ((m % 2 == 1) && (d % 2 == 1)) --d;
  return std::max(d, 0);
}

}  // namespace detail

// Estimates Pr(type' | type, own-state pair) by simulating one round of vtMIS
// on a dbar-regular surrogate with iid Bernoulli(1 - p0) initial memberships.
inline TypeTransitionTable type_transition_estimate(const Graph& g, const Locality& loc,
                                                    const Configuration& c, PolicyOracle policy,
                                                    int samples, double p_s, double fixed_p = 0.5,
                                                    uint64_t seed = 0, bool force_mc = false) {
  const int m = static_cast<int>(loc.members.size());
  TypeTransitionTable table;
  if (m < 2) return table;

  int out_count = 0;
  for (int w : loc.members)
    if (!c.is_in(w)) ++out_count;
  const double p0 = static_cast<double>(out_count) / static_cast<double>(m);
  const int requested = ceil_mean_degree(g, loc.members);
  const int dbar = detail::feasible_degree(m, requested);
  table.dbar_used = dbar;
  table.adjusted_degree = dbar != requested;
  if (dbar == 0) return table;
  const auto adj = detail::circulant_regular(m, dbar);

  double num[2][2][2][2] = {};
  double den[2][2][2] = {};

  auto switch_prob = [&](const std::vector<uint8_t>& st, int v) -> double {
    bool in = st[v];
    bool any_in_nb = false;
    for (int w : adj[v])
      if (st[w]) any_in_nb = true;
    if (in && any_in_nb) return 1.0;              // conflict: forced exit
    if (!in && !any_in_nb)                        // pending: IS entry
      return policy == PolicyOracle::Myopic ? 1.0 : fixed_p;
    return 0.0;
  };

  auto type_of = [&](const std::vector<uint8_t>& st, int v) -> int {
    for (int w : adj[v])
      if (st[w]) return kTypeIn;
    return kTypeOut;
  };

  auto tally = [&](const std::vector<uint8_t>& c0, const std::vector<uint8_t>& c1, int v, double w) {
    const int st0 = c0[v] ? 0 : 1;
    const int st1 = c1[v] ? 0 : 1;
    const int tp0 = type_of(c0, v);
    const int tp1 = type_of(c1, v);
    num[st0][st1][tp0][tp1] += w;
    den[st0][st1][tp0] += w;
  };

  if (m <= 12 && !force_mc) {
    // exact: enumerate initial configurations; per agent, enumerate flips of
    // its closed neighborhood (the only states its indicator depends on)
    std::vector<uint8_t> c0(m), c1(m);
    for (uint32_t mask = 0; mask < (1u << m); ++mask) {
      double w0 = 1.0;
      for (int v = 0; v < m; ++v) {
        c0[v] = (mask >> v) & 1u;
        w0 *= c0[v] ? (1.0 - p0) : p0;
      }
      if (w0 <= 0.0) continue;
      std::vector<double> flip(m);
      for (int v = 0; v < m; ++v) flip[v] = switch_prob(c0, v) * p_s;
      for (int v = 0; v < m; ++v) {
        std::vector<int> hood = adj[v];
        hood.push_back(v);
        const int h = static_cast<int>(hood.size());
        for (uint32_t f = 0; f < (1u << h); ++f) {
          double wf = 1.0;
          c1 = c0;
          for (int i = 0; i < h; ++i) {
            const int node = hood[i];
            if ((f >> i) & 1u) {
              wf *= flip[node];
              c1[node] = !c1[node];
            } else {
              wf *= 1.0 - flip[node];
            }
          }
          if (wf <= 0.0) continue;
          tally(c0, c1, v, w0 * wf);
        }
      }
    }
  } else {
    RngStream rng(seed, static_cast<uint64_t>(m), static_cast<uint64_t>(dbar), Draw::Game);
    std::vector<uint8_t> c0(m), c1(m);
    for (int s = 0; s < samples; ++s) {
      for (int v = 0; v < m; ++v) c0[v] = rng.bernoulli(1.0 - p0);
      c1 = c0;
      for (int v = 0; v < m; ++v)
        if (rng.bernoulli(switch_prob(c0, v) * p_s)) c1[v] = !c1[v];
      for (int v = 0; v < m; ++v) tally(c0, c1, v, 1.0);
    }
  }

  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int t0 = 0; t0 < 2; ++t0) {
        if (den[a][b][t0] > 0.0) {
          for (int t1 = 0; t1 < 2; ++t1) table.prob[a][b][t0][t1] = num[a][b][t0][t1] / den[a][b][t0];
        }  // zero-mass rows keep the identity fallback
      }
  return table;
}

// ---------------------------------------------------------------------------
// The local stage game
// ---------------------------------------------------------------------------

enum class ActionKind { ForcedPreserve, ForcedSwitch, Choice };

// A stage game modeled from one agent's 2-hop view. States of members are the
// paper's lambda; boundary agents carry hidden types.
struct LocalGame {
  const Graph* g = nullptr;
  AlgorithmId alg = AlgorithmId::vtMIS;
  Locality loc;
  std::vector<AgentState> agent0;  // per member, fixed secondary variables
  GainParams gain;
  double p_s = 1.0;
  double delta = 0.88;
  int horizon = 3;

  int focal = 0;                        // local index of loc.focal
  uint64_t lambda0 = 0;                 // initial state mask (bit = IN)
  std::vector<std::vector<int>> ladj;   // member adjacency within L(2)
  std::vector<std::vector<int>> vadj1;  // member adjacency restricted to L(1)
  std::vector<int> bslot;               // member -> boundary slot or -1

  int members() const { return static_cast<int>(loc.members.size()); }
  bool is_boundary(int i) const { return bslot[i] >= 0; }
  int node(int i) const { return loc.members[i]; }
};

inline LocalGame make_local_game(const Graph& g, AlgorithmId alg, const Configuration& c, int focal,
                                 const GainParams& gain, double p_s, double delta, int horizon) {
  if (alg != AlgorithmId::vtMIS && alg != AlgorithmId::dtMIS)
    throw std::invalid_argument("make_local_game: game-backed probabilities exist for vtMIS/dtMIS");
  LocalGame game;
  game.g = &g;
  game.alg = alg;
  game.loc = locality(g, focal, 2);
  game.gain = gain;
  game.p_s = p_s;
  game.delta = delta;
  game.horizon = horizon;

  const int m = game.members();
  if (m > 64) throw GameSizeError("make_local_game: locality exceeds 64 members");
  game.focal = game.loc.index_of(focal);
  game.agent0.reserve(m);
  for (int i = 0; i < m; ++i) game.agent0.push_back(c.agents[game.loc.members[i]]);
  for (int i = 0; i < m; ++i)
    if (c.is_in(game.loc.members[i])) game.lambda0 |= 1ull << i;

  game.ladj.assign(m, {});
  game.vadj1.assign(m, {});
  game.bslot.assign(m, -1);
  for (int i = 0; i < m; ++i) {
    for (int w : g.adj[game.loc.members[i]]) {
      const int j = game.loc.index_of(w);
      if (j < 0) continue;
      game.ladj[i].push_back(j);
      if (game.loc.dist[j] <= 1) game.vadj1[i].push_back(j);
    }
  }
  int slot = 0;
  for (int i = 0; i < m; ++i)
    if (game.loc.dist[i] == 2) game.bslot[i] = slot++;
  return game;
}

namespace detail {

inline bool m_in(uint64_t lambda, int i) { return (lambda >> i) & 1ull; }

inline int m_type(const LocalGame& game, uint32_t theta, int i) {
  return (theta >> game.bslot[i]) & 1u ? kTypeIn : kTypeOut;
}

// Boundary agents' pending/conflict use their visible L(1) neighbors plus the
// type standing in for everything beyond; interior agents see everything.
inline bool m_pending(const LocalGame& game, uint64_t lambda, uint32_t theta, int i) {
  if (m_in(lambda, i)) return false;
  if (!game.is_boundary(i)) {
    for (int j : game.ladj[i])
      if (m_in(lambda, j)) return false;
    return true;
  }
  for (int j : game.vadj1[i])
    if (m_in(lambda, j)) return false;
  return m_type(game, theta, i) == kTypeOut;
}

inline bool m_conflict(const LocalGame& game, uint64_t lambda, uint32_t theta, int i) {
  if (!m_in(lambda, i)) return false;
  if (!game.is_boundary(i)) {
    for (int j : game.ladj[i])
      if (m_in(lambda, j)) return true;
    return false;
  }
  for (int j : game.vadj1[i])
    if (m_in(lambda, j)) return true;
  return m_type(game, theta, i) == kTypeIn;
}

// dtMIS hesitate over the modeled view; quantifiers range over visible
// members, and boundary agents (whose parent sets reach outside the view) are
// treated as not hesitating.
inline bool m_hesitate(const LocalGame& game, uint64_t lambda, int i) {
  if (game.alg != AlgorithmId::dtMIS) return false;
  if (game.is_boundary(i)) return false;
  const Graph& g = *game.g;
  const int vi = game.node(i);
  const auto& pv = game.agent0[i].parents;
  if (pv.empty()) return false;
  for (int j : game.ladj[i]) {
    const int w = game.node(j);
    if (!contains_parent(pv, w)) continue;
    bool ok = true;
    for (int k : game.ladj[i]) {
      if (k != j && contains_parent(game.agent0[k].parents, vi)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    for (int k : game.ladj[j]) {
      if (k == i) continue;
      if (m_in(lambda, k) || !contains_parent(game.agent0[k].parents, w)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    bool last = !contains_parent(game.agent0[j].parents, vi) || g.ids[w] < g.ids[vi];
    if (!last) {
      for (int k : game.ladj[j]) {
        if (k != i && contains_parent(game.agent0[k].parents, w)) {
          last = true;
          break;
        }
      }
    }
    if (last) return true;
  }
  return false;
}

}  // namespace detail

// Per the algorithms' action tables: conflicted agents must switch, pending
// (and for dtMIS: unconflicted heads) may choose, everyone else preserves.
inline ActionKind available_actions(const LocalGame& game, uint64_t lambda, uint32_t theta, int i) {
  if (detail::m_conflict(game, lambda, theta, i)) return ActionKind::ForcedSwitch;
  if (detail::m_pending(game, lambda, theta, i)) {
    if (game.alg == AlgorithmId::dtMIS && detail::m_hesitate(game, lambda, i))
      return ActionKind::ForcedPreserve;
    return ActionKind::Choice;
  }
  if (game.alg == AlgorithmId::dtMIS && detail::m_in(lambda, i) &&
      !detail::m_conflict(game, lambda, theta, i))
    return ActionKind::Choice;
  return ActionKind::ForcedPreserve;
}

inline bool quiescent(const LocalGame& game, uint64_t lambda, uint32_t theta) {
  for (int i = 0; i < game.members(); ++i)
    if (available_actions(game, lambda, theta, i) != ActionKind::ForcedPreserve) return false;
  return true;
}

// The gain of eq. form: 0 when pending, theta when covered, theta - zeta as a
// cluster-head; boundary agents' coverage uses their type.
inline double local_gain(const LocalGame& game, uint64_t lambda, uint32_t theta, int i) {
  if (detail::m_pending(game, lambda, theta, i)) return 0.0;
  if (!detail::m_in(lambda, i)) return game.gain.theta;
  return game.gain.theta - game.gain.zeta;
}

inline double payoff(const LocalGame& game, uint64_t lambda, uint64_t lambda_next, uint32_t theta,
                     int i) {
  return local_gain(game, lambda_next, theta, i) - local_gain(game, lambda, theta, i);
}

// P(lambda' | lambda, joint action) = p_s^|changed| (1-p_s)^(writers-changed)
// when every changed variable is one the joint action writes, else 0.
// `switchers` has a bit per member whose action writes its state.
inline double transition_prob(uint64_t lambda, uint64_t switchers, uint64_t lambda_next, double p_s) {
  const uint64_t diff = lambda ^ lambda_next;
  if (diff & ~switchers) return 0.0;
  const int writers = std::popcount(switchers);
  const int changed = std::popcount(diff);
  return std::pow(p_s, changed) * std::pow(1.0 - p_s, writers - changed);
}

// P(Switch | own type) per member; interior members carry the same value in
// both slots.
using TypedStrategies = std::vector<TypeDist>;

struct StrategyProfile {
  std::vector<double> switch_prob;  // per member, marginal over own type
  bool converged = true;
};

struct SolveResult {
  StrategyProfile profile;
  TypedStrategies typed;
  bool used_exact = true;
};

struct SolveOptions {
  double br_tol = 1e-6;
  int max_br_sweeps = 64;
  int exact_max_boundary = 12;
  int exact_max_free = 10;
  int exact_max_switchers = 14;
  int mc_rollouts = 96;
  uint64_t mc_seed = 0;
};

namespace detail {

// Exact expected-payoff recursion for a fixed joint type.
struct ExactCtx {
  const LocalGame* game;
  uint32_t theta;
  int z;
  const TypedStrategies* sigma;
  const SolveOptions* opt;
  std::unordered_map<uint64_t, double> memo;  // (lambda, depth) -> max_a E

  double sigma_of(int i, uint64_t) const {
    const auto& s = (*sigma)[i];
    return game->is_boundary(i) ? s[m_type(*game, theta, i)] : s[0];
  }
};

inline double exact_E(ExactCtx& ctx, uint64_t lambda, Action a_z, int depth);

inline double exact_Emax(ExactCtx& ctx, uint64_t lambda, int depth) {
  const uint64_t key = lambda * 8ull + static_cast<uint64_t>(depth);
  if (auto it = ctx.memo.find(key); it != ctx.memo.end()) return it->second;
  const ActionKind kind = available_actions(*ctx.game, lambda, ctx.theta, ctx.z);
  double val = 0.0;
  if (kind == ActionKind::Choice)
    val = std::max(exact_E(ctx, lambda, Action::Switch, depth),
                   exact_E(ctx, lambda, Action::Preserve, depth));
  else if (kind == ActionKind::ForcedSwitch)
    val = exact_E(ctx, lambda, Action::Switch, depth);
  else
    val = exact_E(ctx, lambda, Action::Preserve, depth);
  ctx.memo.emplace(key, val);
  return val;
}

inline double exact_E(ExactCtx& ctx, uint64_t lambda, Action a_z, int depth) {
  const LocalGame& game = *ctx.game;
  std::vector<int> free;  // members with a real choice, other than z
  uint64_t base_switchers = 0;
  for (int i = 0; i < game.members(); ++i) {
    const ActionKind kind = available_actions(game, lambda, ctx.theta, i);
    if (i == ctx.z) {
      if (a_z == Action::Switch) base_switchers |= 1ull << i;
      continue;
    }
    if (kind == ActionKind::ForcedSwitch)
      base_switchers |= 1ull << i;
    else if (kind == ActionKind::Choice)
      free.push_back(i);
  }
  if (static_cast<int>(free.size()) > ctx.opt->exact_max_free)
    throw GameSizeError("exact_E: too many free members");

  double total = 0.0;
  const uint32_t nfree = 1u << free.size();
  for (uint32_t fmask = 0; fmask < nfree; ++fmask) {
    double w = 1.0;
    uint64_t switchers = base_switchers;
    for (size_t k = 0; k < free.size(); ++k) {
      const double s = ctx.sigma_of(free[k], lambda);
      if ((fmask >> k) & 1u) {
        w *= s;
        switchers |= 1ull << free[k];
      } else {
        w *= 1.0 - s;
      }
    }
    if (w <= 0.0) continue;
    const int nsw = std::popcount(switchers);
    if (nsw > ctx.opt->exact_max_switchers) throw GameSizeError("exact_E: too many switchers");

    // expand switch subsets into successor states
    std::vector<int> bits;
    for (int i = 0; i < game.members(); ++i)
      if ((switchers >> i) & 1ull) bits.push_back(i);
    for (uint32_t sub = 0; sub < (1u << nsw); ++sub) {
      uint64_t flip = 0;
      for (int k = 0; k < nsw; ++k)
        if ((sub >> k) & 1u) flip |= 1ull << bits[k];
      const uint64_t next = lambda ^ flip;
      const double tp = transition_prob(lambda, switchers, next, game.p_s);
      if (tp <= 0.0) continue;
      double val = payoff(game, lambda, next, ctx.theta, ctx.z);
      if (depth > 0 && !quiescent(game, next, ctx.theta))
        val += game.delta * exact_Emax(ctx, next, depth - 1);
      total += w * tp * val;
    }
  }
  return total;
}

// Sum over joint types, optionally conditioning one boundary slot (a boundary
// agent knows its own type when best-responding).
inline double expected_payoff_typed(const LocalGame& game, int z, Action a_z,
                                    const BeliefState& belief, const TypedStrategies& sigma,
                                    int depth, const SolveOptions& opt, int cond_slot,
                                    int cond_type) {
  const int nb = static_cast<int>(belief.agents.size());
  if (nb > opt.exact_max_boundary) throw GameSizeError("expected_payoff: too many boundary agents");
  double total = 0.0;
  for (uint32_t theta = 0; theta < (1u << nb); ++theta) {
    if (cond_slot >= 0) {
      const int own = (theta >> cond_slot) & 1u ? kTypeIn : kTypeOut;
      if (own != cond_type) continue;
    }
    double w = 1.0;
    for (int i = 0; i < nb; ++i) {
      if (i == cond_slot) continue;
      w *= (theta >> i) & 1u ? belief.mu[i][kTypeIn] : belief.mu[i][kTypeOut];
    }
    if (w <= 0.0) continue;
    ExactCtx ctx{&game, theta, z, &sigma, &opt, {}};
    total += w * exact_E(ctx, game.lambda0, a_z, depth);
  }
  return total;
}

}  // namespace detail

// HBA: expectation over joint types of the Bellman-style recursive payoff of
// playing a_z now and optimally afterwards, others following `sigma`.
inline double hba_expected_payoff(const LocalGame& game, int z, Action a_z,
                                  const BeliefState& belief, const TypedStrategies& sigma,
                                  int depth, const SolveOptions& opt = {}) {
  return detail::expected_payoff_typed(game, z, a_z, belief, sigma, depth, opt, -1, -1);
}

namespace detail {

// --- Monte-Carlo fallback for localities too large to enumerate ---

// One-step closed-form comparison used for the focal member's own future
// moves inside rollouts.
inline Action greedy_action(const LocalGame& game, uint64_t lambda, uint32_t theta, int i,
                            const TypedStrategies& sigma) {
  const ActionKind kind = available_actions(game, lambda, theta, i);
  if (kind == ActionKind::ForcedSwitch) return Action::Switch;
  if (kind == ActionKind::ForcedPreserve) return Action::Preserve;
  const auto& nbs = game.is_boundary(i) ? game.vadj1[i] : game.ladj[i];
  double p_all_out = 1.0;  // P(no visible neighbor IN next)
  for (int j : nbs) {
    double flip = 0.0;
    const ActionKind kj = available_actions(game, lambda, theta, j);
    if (kj == ActionKind::ForcedSwitch)
      flip = game.p_s;
    else if (kj == ActionKind::Choice) {
      const double s = game.is_boundary(j) ? sigma[j][m_type(game, theta, j)] : sigma[j][0];
      flip = s * game.p_s;
    }
    const double p_out = m_in(lambda, j) ? flip : 1.0 - flip;
    p_all_out *= p_out;
  }
  if (game.is_boundary(i) && m_type(game, theta, i) == kTypeIn) p_all_out = 0.0;
  const bool in_now = m_in(lambda, i);
  const double g_head = game.gain.theta - game.gain.zeta;
  double e_stay, e_switch;
  if (in_now) {
    e_stay = g_head;
    const double g_out = game.gain.theta * (1.0 - p_all_out);
    e_switch = game.p_s * g_out + (1.0 - game.p_s) * g_head;
  } else {
    const double g_out = game.gain.theta * (1.0 - p_all_out);
    e_stay = g_out;
    e_switch = game.p_s * g_head + (1.0 - game.p_s) * g_out;
  }
  return e_switch > e_stay ? Action::Switch : Action::Preserve;
}

// Common-random-number estimate of E^Switch - E^Preserve for member z.
inline double mc_gap(const LocalGame& game, int z, const BeliefState& belief,
                     const TypedStrategies& sigma, const SolveOptions& opt, uint64_t stream_id,
                     int cond_type = -1) {
  const int m = game.members();
  const int nb = static_cast<int>(belief.agents.size());
  double acc = 0.0;
  for (int r = 0; r < opt.mc_rollouts; ++r) {
    RngStream rng(opt.mc_seed, stream_id, static_cast<uint64_t>(r), Draw::Game);
    uint32_t theta = 0;
    for (int i = 0; i < nb; ++i)
      if (rng.bernoulli(belief.mu[i][kTypeIn])) theta |= 1u << i;
    if (cond_type >= 0 && game.is_boundary(z)) {
      const int slot = game.bslot[z];
      if (cond_type == kTypeIn)
        theta |= 1u << slot;
      else
        theta &= ~(1u << slot);
    }
    // pre-draw shared uniforms per (level, member)
    double total[2] = {0.0, 0.0};
    uint64_t lam[2] = {game.lambda0, game.lambda0};
    double disc = 1.0;
    for (int level = 0; level < game.horizon; ++level) {
      std::vector<double> u_act(m), u_sched(m);
      for (int i = 0; i < m; ++i) u_act[i] = rng.uniform();
      for (int i = 0; i < m; ++i) u_sched[i] = rng.uniform();
      for (int arm = 0; arm < 2; ++arm) {
        uint64_t lambda = lam[arm];
        if (quiescent(game, lambda, theta)) continue;
        uint64_t flips = 0;
        for (int i = 0; i < m; ++i) {
          Action a = Action::Preserve;
          if (i == z && level == 0) {
            a = arm == 0 ? Action::Switch : Action::Preserve;
          } else if (i == z) {
            a = greedy_action(game, lambda, theta, i, sigma);
          } else {
            const ActionKind kind = available_actions(game, lambda, theta, i);
            if (kind == ActionKind::ForcedSwitch)
              a = Action::Switch;
            else if (kind == ActionKind::Choice) {
              const double s = game.is_boundary(i) ? sigma[i][m_type(game, theta, i)] : sigma[i][0];
              a = u_act[i] < s ? Action::Switch : Action::Preserve;
            }
          }
          if (a == Action::Switch && u_sched[i] < game.p_s) flips |= 1ull << i;
        }
        const uint64_t next = lambda ^ flips;
        total[arm] += disc * payoff(game, lambda, next, theta, z);
        lam[arm] = next;
      }
      disc *= game.delta;
      if (quiescent(game, lam[0], theta) && quiescent(game, lam[1], theta)) break;
    }
    acc += total[0] - total[1];
  }
  return acc / static_cast<double>(opt.mc_rollouts);
}

struct FreeCoord {
  int member;
  int type;  // kTypeIn/kTypeOut for boundary members, -1 for interior
};

}  // namespace detail

// Iterated best response over the members, refined by a logit homotopy and a
// Newton polish on mixed coordinates when plain best response cycles. The
// returned strategies put mass only on expected-payoff-maximizing actions; on
// genuinely indifferent coordinates they stay mixed.
inline SolveResult solve_stage_bne(const LocalGame& game, const BeliefState& belief,
                                   const SolveOptions& opt = {}) {
  const int m = game.members();
  SolveResult res;
  res.typed.assign(m, {0.0, 0.0});

  // classify availability per member (and own type for boundary members)
  std::vector<detail::FreeCoord> free;
  for (int i = 0; i < m; ++i) {
    if (!game.is_boundary(i)) {
      const ActionKind kind = available_actions(game, game.lambda0, 0, i);
      const double v = kind == ActionKind::ForcedSwitch ? 1.0 : 0.0;
      res.typed[i] = {v, v};
      if (kind == ActionKind::Choice) {
        res.typed[i] = {0.5, 0.5};
        free.push_back({i, -1});
      }
    } else {
      const int slot = game.bslot[i];
      for (int t = 0; t < 2; ++t) {
        const uint32_t theta = t == kTypeIn ? (1u << slot) : 0u;
        const ActionKind kind = available_actions(game, game.lambda0, theta, i);
        res.typed[i][t] = kind == ActionKind::ForcedSwitch ? 1.0 : 0.0;
        if (kind == ActionKind::Choice) {
          res.typed[i][t] = 0.5;
          free.push_back({i, t});
        }
      }
    }
  }

  bool exact = true;
  auto gap_of = [&](const detail::FreeCoord& fc, const TypedStrategies& sigma) -> double {
    if (exact) {
      const int slot = fc.type >= 0 ? game.bslot[fc.member] : -1;
      const double es = detail::expected_payoff_typed(game, fc.member, Action::Switch, belief,
                                                      sigma, game.horizon, opt, slot, fc.type);
      const double ep = detail::expected_payoff_typed(game, fc.member, Action::Preserve, belief,
                                                      sigma, game.horizon, opt, slot, fc.type);
      return es - ep;
    }
    const uint64_t id = static_cast<uint64_t>(fc.member) * 4ull + static_cast<uint64_t>(fc.type + 1);
    return detail::mc_gap(game, fc.member, belief, res.typed, opt, id, fc.type);
  };

  auto set_sigma = [&](const detail::FreeCoord& fc, double v) {
    if (fc.type < 0)
      res.typed[fc.member] = {v, v};
    else
      res.typed[fc.member][fc.type] = v;
  };
  auto get_sigma = [&](const detail::FreeCoord& fc) -> double {
    return fc.type < 0 ? res.typed[fc.member][0] : res.typed[fc.member][fc.type];
  };

  res.used_exact = exact;

  // all updates are simultaneous so that symmetric instances keep symmetric
  // profiles
  auto all_gaps = [&](std::vector<double>& gaps) {
    for (size_t k = 0; k < free.size(); ++k) gaps[k] = gap_of(free[k], res.typed);
  };

  bool br_stable = free.empty();
  bool solved = free.empty();
  if (!solved && exact) try {
    // plain best response
    std::vector<double> gaps(free.size());
    for (int sweep = 0; sweep < opt.max_br_sweeps && !br_stable; ++sweep) {
      br_stable = true;
      all_gaps(gaps);
      for (size_t k = 0; k < free.size(); ++k) {
        const double next = gaps[k] > 1e-12 ? 1.0 : gaps[k] < -1e-12 ? 0.0 : 0.5;
        if (std::abs(next - get_sigma(free[k])) > 1e-15) br_stable = false;
        set_sigma(free[k], next);
      }
    }
    if (!br_stable) {
      // logit homotopy toward the limiting equilibrium
      for (const auto& fc : free) set_sigma(fc, 0.5);
      for (double beta = 0.125; beta < 1e13; beta *= 2.0) {
        for (int it = 0; it < 40; ++it) {
          all_gaps(gaps);
          double delta_max = 0.0;
          for (size_t k = 0; k < free.size(); ++k) {
            const double arg = std::clamp(beta * gaps[k], -700.0, 700.0);
            const double target = 1.0 / (1.0 + std::exp(-arg));
            const double prev = get_sigma(free[k]);
            const double next = 0.5 * prev + 0.5 * target;
            set_sigma(free[k], next);
            delta_max = std::max(delta_max, std::abs(next - prev));
          }
          if (delta_max < 1e-11) break;
        }
      }
      // Newton polish on interior coordinates
      std::vector<int> interior;
      for (size_t k = 0; k < free.size(); ++k) {
        const double s = get_sigma(free[k]);
        if (s > 1e-7 && s < 1.0 - 1e-7) interior.push_back(static_cast<int>(k));
      }
      const int ni = static_cast<int>(interior.size());
      if (ni > 0 && ni <= 8) {
        for (int iter = 0; iter < 12; ++iter) {
          std::vector<double> f(ni);
          double norm = 0.0;
          for (int a = 0; a < ni; ++a) {
            f[a] = gap_of(free[interior[a]], res.typed);
            norm = std::max(norm, std::abs(f[a]));
          }
          if (norm < 1e-12) break;
          // finite-difference Jacobian
          std::vector<std::vector<double>> J(ni, std::vector<double>(ni, 0.0));
          const double h = 1e-6;
          for (int b = 0; b < ni; ++b) {
            const double saved = get_sigma(free[interior[b]]);
            set_sigma(free[interior[b]], saved + h);
            for (int a = 0; a < ni; ++a)
              J[a][b] = (gap_of(free[interior[a]], res.typed) - f[a]) / h;
            set_sigma(free[interior[b]], saved);
          }
          // solve J dx = f
          std::vector<double> dx = f;
          bool singular = false;
          for (int col = 0; col < ni && !singular; ++col) {
            int piv = col;
            for (int r = col + 1; r < ni; ++r)
              if (std::abs(J[r][col]) > std::abs(J[piv][col])) piv = r;
            if (std::abs(J[piv][col]) < 1e-14) {
              singular = true;
              break;
            }
            std::swap(J[piv], J[col]);
            std::swap(dx[piv], dx[col]);
            for (int r = col + 1; r < ni; ++r) {
              const double factor = J[r][col] / J[col][col];
              for (int cc = col; cc < ni; ++cc) J[r][cc] -= factor * J[col][cc];
              dx[r] -= factor * dx[col];
            }
          }
          if (singular) break;
          for (int r = ni - 1; r >= 0; --r) {
            for (int cc = r + 1; cc < ni; ++cc) dx[r] -= J[r][cc] * dx[cc];
            dx[r] /= J[r][r];
          }
          for (int a = 0; a < ni; ++a) {
            const double s = std::clamp(get_sigma(free[interior[a]]) - dx[a], 1e-9, 1.0 - 1e-9);
            set_sigma(free[interior[a]], s);
          }
        }
      }
      // snap decisively dominated coordinates to pure actions
      for (int pass = 0; pass < 3; ++pass) {
        all_gaps(gaps);
        bool changed = false;
        for (size_t k = 0; k < free.size(); ++k) {
          if (std::abs(gaps[k]) > 1e-7) {
            const double pure = gaps[k] > 0.0 ? 1.0 : 0.0;
            if (std::abs(pure - get_sigma(free[k])) > 1e-15) changed = true;
            set_sigma(free[k], pure);
          }
        }
        if (!changed) break;
      }
    }
    solved = true;
  } catch (const GameSizeError&) {
    exact = false;
    res.used_exact = false;
    for (const auto& fc : free) set_sigma(fc, 0.5);
  }
  if (!solved && !free.empty()) {
    // Monte-Carlo path: damped sweeps, then decisive snapping by gap sign
    std::vector<double> gaps(free.size());
    for (int sweep = 0; sweep < 8; ++sweep) {
      all_gaps(gaps);
      for (size_t k = 0; k < free.size(); ++k) {
        const double target = gaps[k] > 0.25 ? 1.0 : gaps[k] < -0.25 ? 0.0 : 0.5;
        set_sigma(free[k], 0.5 * get_sigma(free[k]) + 0.5 * target);
      }
    }
    all_gaps(gaps);
    for (size_t k = 0; k < free.size(); ++k) {
      if (gaps[k] > 0.25)
        set_sigma(free[k], 1.0);
      else if (gaps[k] < -0.25)
        set_sigma(free[k], 0.0);
      else
        set_sigma(free[k], std::clamp(get_sigma(free[k]), 0.0, 1.0));
    }
    br_stable = true;
  }

  // mutual epsilon-best-response check
  bool ok = true;
  if (exact) {
    for (const auto& fc : free) {
      const double gap = gap_of(fc, res.typed);
      const double s = get_sigma(fc);
      const double regret = gap > 0.0 ? (1.0 - s) * gap : s * -gap;
      if (regret > opt.br_tol) {
        ok = false;
        break;
      }
    }
  }
  res.profile.converged = br_stable || ok;

  res.profile.switch_prob.resize(m);
  for (int i = 0; i < m; ++i) {
    if (game.is_boundary(i)) {
      const int slot = game.bslot[i];
      res.profile.switch_prob[i] = belief.mu[slot][kTypeIn] * res.typed[i][kTypeIn] +
                                   belief.mu[slot][kTypeOut] * res.typed[i][kTypeOut];
    } else {
      res.profile.switch_prob[i] = res.typed[i][0];
    }
  }
  return res;
}

// The probability the behavior strategy assigns to executing a game-backed
// rule: vtMIS R1, dtMIS R1 and dtMIS R7 all map to the focal agent's Switch
// mass.
inline double rule_probability(const AlgorithmDescriptor& alg, int rule_index,
                               const SolveResult& solve, const LocalGame& game) {
  bool game_rule = false;
  for (const Rule& r : alg.rules)
    if (r.index == rule_index)
      game_rule = r.prob_source == ProbSource::ParamP || r.prob_source == ProbSource::ParamQ ||
                  r.prob_source == ProbSource::Game;
  if (!game_rule) throw std::invalid_argument("rule_probability: rule is not game-backed");
  return std::clamp(solve.profile.switch_prob[game.focal], 0.0, 1.0);
}

}  // namespace selfstab
