#pragma once

#include <cmath>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selfstab/algorithms.hpp"
#include "selfstab/core.hpp"
#include "selfstab/game.hpp"
#include "selfstab/graph.hpp"
#include "selfstab/rng.hpp"
#include "selfstab/scheduler.hpp"
#include "selfstab/selfish.hpp"

namespace selfstab {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// (sum x)^2 / (n * sum x^2); 1 for equal allocations.
inline double jain_index(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("jain_index: empty input");
  double sum = 0.0, sumsq = 0.0;
  for (double v : x) {
    if (v < 0.0) throw std::invalid_argument("jain_index: negative profit");
    sum += v;
    sumsq += v * v;
  }
  if (sum <= 0.0) throw std::domain_error("jain_index: all-zero profits");
  return (sum * sum) / (static_cast<double>(x.size()) * sumsq);
}

// Fraction of agents that are themselves, or have a neighbor that is, a
// conflict-free cluster-head.
inline double availability(const Graph& g, const Configuration& c) {
  int covered = 0;
  for (int v = 0; v < g.n; ++v) {
    bool ok = c.is_in(v) && !conflict(g, c, v);
    if (!ok) {
      for (int w : g.adj[v]) {
        if (c.is_in(w) && !conflict(g, c, w)) {
          ok = true;
          break;
        }
      }
    }
    if (ok) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(g.n);
}

inline int cluster_count(const Configuration& c) {
  int k = 0;
  for (int v = 0; v < c.size(); ++v)
    if (c.is_in(v)) ++k;
  return k;
}

// Max distance from the faulty agent to any agent that executed a rule during
// recovery.
inline int contamination_depth(const Graph& g, const FaultEvent& fault,
                               const std::vector<int>& movers) {
  if (movers.empty()) return 0;
  const auto dist = g.distances(fault.agent);
  int depth = 0;
  for (int v : movers) depth = std::max(depth, dist[v]);
  return depth;
}

// A 1-fault "succeeds" when the faulty agent stays OUT after re-convergence.
inline bool fault_success(const FaultEvent& fault, const Configuration& final_c) {
  return !final_c.is_in(fault.agent);
}

// True iff no rule with positive execution probability is enabled anywhere.
inline bool detect_converged(const AlgorithmDescriptor& alg, const Graph& g,
                             const Configuration& c, const ProbContext& probs) {
  for (int v = 0; v < g.n; ++v)
    for (const Rule& r : alg.rules)
      if (r.guard(g, c, v) && probs.probability(g, c, v, r) > 0.0) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Game driver: beliefs + stage solving behind the rule probabilities
// ---------------------------------------------------------------------------

struct GameConfig {
  enum class Mode { Fixed, Game } mode = Mode::Fixed;
  double delta = 0.88;
  int horizon = 3;
  double fixed_p = 0.7;
  double fixed_q = -1.0;  // < 0: dtMIS R7 follows the epsilon rule
  double epsilon = 0.1;
  bool track_beliefs = true;
  int mc_rollouts = 96;
  int tt_samples = 4000;
  PolicyOracle tt_policy = PolicyOracle::Myopic;

  void validate() const {
    if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("game: delta in (0,1]");
    if (horizon < 0) throw std::invalid_argument("game: horizon >= 0");
  }
};

// Solves the focal agent's 2-hop stage game on demand. Results are cached by
// a signature of (focal, local state, bucketed local beliefs), which also
// seeds the Monte-Carlo fallback, so every probability is a pure function of
// the observable situation.
class GameDriver {
 public:
  struct Cache {
    std::unordered_map<uint64_t, double> solve;
    std::unordered_map<uint64_t, TypeTransitionTable> transitions;
  };

  GameDriver(const Graph& g, const AlgorithmDescriptor& alg, const GameConfig& cfg,
             const GainParams& gain, double p_s, std::shared_ptr<Cache> cache = nullptr)
      : g_(g), alg_(alg), cfg_(cfg), gain_(gain), p_s_(p_s), cache_(std::move(cache)) {
    if (!cache_) cache_ = std::make_shared<Cache>();
    agents_.resize(g.n);
  }

  double probability(const Configuration& c, int v, const Rule& rule) {
    // A cluster-head can profit from leaving only while some neighbor is
    // pending and not hesitating; otherwise every completion restores it and
    // Switch is strictly dominated, so its strategy mass is zero.
    if (rule.prob_source == ProbSource::ParamQ) {
      bool contested = false;
      for (int w : g_.adj[v])
        if (pending(g_, c, w) && !hesitate_dt(g_, c, w)) {
          contested = true;
          break;
        }
      if (!contested) return 0.0;
    }
    AgentCtx& ctx = ensure(v, c);
    const uint64_t sig = signature(c, v, ctx);
    if (auto it = cache_->solve.find(sig); it != cache_->solve.end()) return it->second;
    LocalGame game = make_local_game(g_, alg_.id, c, v, gain_, p_s_, cfg_.delta, cfg_.horizon);
    SolveOptions opt;
    opt.mc_rollouts = cfg_.mc_rollouts;
    opt.mc_seed = sig;
    const SolveResult solved = solve_stage_bne(game, ctx.belief, opt);
    // remember the per-type switch predictions: the action model for Bayes
    ctx.pred.assign(ctx.belief.agents.size(), TypeDist{0.0, 0.0});
    for (int i = 0; i < game.members(); ++i)
      if (game.is_boundary(i)) ctx.pred[game.bslot[i]] = solved.typed[i];
    ctx.has_pred = true;
    const double prob = std::clamp(solved.profile.switch_prob[game.focal], 0.0, 1.0);
    cache_->solve.emplace(sig, prob);
    return prob;
  }

  // Bayes-update from the actions taken last round, then push beliefs one
  // stage forward through the estimated type transition conditioned on the
  // observed state pair (gated).
  void end_of_round(const std::vector<NodeState>& before, const Configuration& c,
                    const std::vector<std::pair<int, Action>>& observed) {
    if (!cfg_.track_beliefs) return;
    for (int v = 0; v < g_.n; ++v) {
      AgentCtx& ctx = agents_[v];
      if (!ctx.init || !ctx.has_pred) continue;
      for (auto [u, act] : observed) {
        const int slot = ctx.belief.slot_of(u);
        if (slot < 0) continue;
        const TypeDist& sw = ctx.pred[slot];
        TypeDist like;
        like[kTypeIn] = act == Action::Switch ? sw[kTypeIn] : 1.0 - sw[kTypeIn];
        like[kTypeOut] = act == Action::Switch ? sw[kTypeOut] : 1.0 - sw[kTypeOut];
        try {
          ctx.belief = belief_posterior(ctx.belief, u, like);
        } catch (const std::runtime_error&) {
          // belief contradiction: restart from the first-round approximation
          const BeliefState fresh = initial_type_belief(g_, ctx.loc, c);
          ctx.belief.mu[slot] = fresh.mu[slot];
        }
      }
      if (!ctx.tt_ready) {
        int out_count = 0;
        for (int w : ctx.loc.members)
          if (!c.is_in(w)) ++out_count;
        const int m = static_cast<int>(ctx.loc.members.size());
        const uint64_t key =
            derive_seed(0x77aa, static_cast<uint64_t>(m),
                        static_cast<uint64_t>(ceil_mean_degree(g_, ctx.loc.members)),
                        static_cast<uint64_t>(out_count * 4096 / std::max(1, m)));
        if (auto it = cache_->transitions.find(key); it != cache_->transitions.end()) {
          ctx.tt = it->second;
        } else {
          ctx.tt = type_transition_estimate(g_, ctx.loc, c, cfg_.tt_policy, cfg_.tt_samples, p_s_,
                                            cfg_.fixed_p, key);
          cache_->transitions.emplace(key, ctx.tt);
        }
        ctx.tt_ready = true;
      }
      for (size_t s = 0; s < ctx.belief.agents.size(); ++s) {
        const int u = ctx.belief.agents[s];
        const int st0 = before[u] == NodeState::IN ? 0 : 1;
        const int st1 = c.agents[u].state == NodeState::IN ? 0 : 1;
        double rows[2][2];
        ctx.tt.row(st0, st1, rows);
        ctx.belief = belief_predict(ctx.belief, u, rows);
      }
    }
  }

 private:
  struct AgentCtx {
    bool init = false;
    Locality loc;
    BeliefState belief;
    std::vector<TypeDist> pred;
    bool has_pred = false;
    TypeTransitionTable tt;
    bool tt_ready = false;
  };

  AgentCtx& ensure(int v, const Configuration& c) {
    AgentCtx& ctx = agents_[v];
    if (!ctx.init) {
      ctx.loc = locality(g_, v, 2);
      ctx.belief = initial_type_belief(g_, ctx.loc, c);
      ctx.init = true;
    }
    return ctx;
  }

  uint64_t signature(const Configuration& c, int v, const AgentCtx& ctx) const {
    uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<uint64_t>(v);
    auto feed = [&h](uint64_t x) { h = mix64(h ^ x); };
    feed(static_cast<uint64_t>(alg_.id));
    feed(std::bit_cast<uint64_t>(p_s_));
    feed(std::bit_cast<uint64_t>(cfg_.delta));
    feed(static_cast<uint64_t>(cfg_.horizon));
    feed(std::bit_cast<uint64_t>(gain_.theta));
    feed(std::bit_cast<uint64_t>(gain_.zeta));
    for (int m : ctx.loc.members) {
      feed(static_cast<uint64_t>(m));
      feed(static_cast<uint64_t>(c.agents[m].state));
      feed(static_cast<uint64_t>(c.agents[m].parent + 2));
      for (int p : c.agents[m].parents) feed(static_cast<uint64_t>(p + 2));
    }
    // beliefs enter bucketed so that immaterial drift still hits the cache
    for (const TypeDist& d : ctx.belief.mu)
      feed(static_cast<uint64_t>(std::lround(d[kTypeIn] * 1024.0)));
    return h;
  }

  const Graph& g_;
  const AlgorithmDescriptor& alg_;
  GameConfig cfg_;
  GainParams gain_;
  double p_s_;
  std::shared_ptr<Cache> cache_;
  std::vector<AgentCtx> agents_;
};

// ---------------------------------------------------------------------------
// Round engine
// ---------------------------------------------------------------------------

struct EngineOptions {
  SchedulerPolicy scheduler;
  GainParams gain;
  GameConfig game;
  DeviationModel deviation;
  double vpmis_pc = -1.0;  // < 0: use the scheduler's synchrony
  long round_limit = 2000;
  uint64_t seed = 0;
  std::ostream* rule_log = nullptr;
  std::shared_ptr<GameDriver::Cache> solve_cache;
};

struct RunResult {
  long rounds = 0;
  long moves = 0;
  long state_transitions = 0;
  bool converged = false;
  std::string final_digest;
  std::vector<double> profits;             // gain at termination
  std::vector<double> cumulative_profits;  // per-round gains summed over the run
  long deviations = 0;
  std::vector<double> availability_trace;
  int clusters = 0;
  std::vector<int> deviation_attempts;  // deviating agent per attempt
  std::vector<FaultEvent> faults;
  std::vector<int> movers;  // agents that executed at least one action
  Configuration final_config;
};

class Engine {
 public:
  Engine(const Graph& g, const AlgorithmDescriptor& alg, const EngineOptions& opt)
      : g_(g), alg_(alg), opt_(opt) {
    opt_.scheduler.validate();
    opt_.gain.validate();
    opt_.game.validate();
    opt_.deviation.validate();
    if (opt_.game.mode == GameConfig::Mode::Game &&
        (alg.id == AlgorithmId::vtMIS || alg.id == AlgorithmId::dtMIS)) {
      driver_ = std::make_unique<GameDriver>(g, alg, opt_.game, opt_.gain, synchrony(),
                                             opt_.solve_cache);
    }
    probs_.p = opt_.game.fixed_p;
    probs_.epsilon = opt_.game.epsilon;
    probs_.q_const = opt_.game.fixed_q;
    probs_.pc = opt_.vpmis_pc >= 0.0 ? opt_.vpmis_pc : synchrony();
    if (driver_) {
      probs_.game_prob = [this](const Graph&, const Configuration& c, int v, const Rule& r) {
        return driver_->probability(c, v, r);
      };
    }
  }

  double synchrony() const {
    switch (opt_.scheduler.kind) {
      case SchedulerKind::DistributedRandomized:
        return opt_.scheduler.p_s;
      case SchedulerKind::Central:
      case SchedulerKind::Unfair:
      case SchedulerKind::Synchronous:
        return 1.0;
    }
    return 1.0;
  }

  const ProbContext& prob_context() const { return probs_; }

  RunResult run(Configuration c) {
    RunResult res;
    res.cumulative_profits.assign(g_.n, 0.0);
    std::vector<char> moved(g_.n, 0);
    const int deflect_rule_index = static_cast<int>(alg_.rules.size()) + 1;
    const bool deflection_active =
        opt_.deviation.kind == DeviationKind::Deflection && alg_.id != AlgorithmId::dtMIS;
    const bool violation_active = opt_.deviation.kind == DeviationKind::Violation ||
                                  opt_.deviation.kind == DeviationKind::Deflection;

    for (;;) {
      // priority rule and positive-probability filter per agent
      std::vector<const Rule*> rule_of(g_.n, nullptr);
      std::vector<int> enabled;
      for (int v = 0; v < g_.n; ++v) {
        const Rule* r = first_enabled(alg_, g_, c, v);
        if (r && probs_.probability(g_, c, v, *r) > 0.0) {
          rule_of[v] = r;
          enabled.push_back(v);
        }
      }
      const bool rule_quiescent = enabled.empty();

      // deflection-capable agents join the schedulable set
      std::vector<char> deflect(g_.n, 0);
      if (deflection_active) {
        const bool legit = rule_quiescent && is_legitimate(alg_, g_, c);
        for (int v = 0; v < g_.n; ++v) {
          if (rule_of[v] || !c.is_in(v) || conflict(g_, c, v)) continue;
          if (!deflection_condition(g_, c, v)) continue;
          bool willing = true;
          if (opt_.deviation.policy == DeviationPolicy::UtilityDriven)
            willing = beneficial_exit(alg_, g_, c, v, legit);
          if (willing) {
            deflect[v] = 1;
            enabled.push_back(v);
          }
        }
        std::sort(enabled.begin(), enabled.end());
      }

      // perturbations are injected one round after convergence is detected
      if (enabled.empty() && opt_.deviation.kind == DeviationKind::Perturbation) {
        std::vector<int> willing;
        for (int v = 0; v < g_.n; ++v) {
          if (!c.is_in(v)) continue;
          bool want = true;
          if (opt_.deviation.policy == DeviationPolicy::UtilityDriven)
            want = beneficial_exit(alg_, g_, c, v, true);
          else if (opt_.deviation.policy == DeviationPolicy::Probabilistic)
            want = RngStream(opt_.seed, v, res.rounds, Draw::Deviation).bernoulli(opt_.deviation.w);
          if (want) willing.push_back(v);
        }
        if (!willing.empty() && res.rounds < opt_.round_limit) {
          ++res.rounds;
          RngStream pick(opt_.seed, 0, res.rounds, Draw::Fault);
          const int v = willing[pick.below(willing.size())];
          c.agents[v].state = NodeState::OUT;
          ++res.deviations;
          ++res.moves;
          ++res.state_transitions;
          moved[v] = 1;
          res.deviation_attempts.push_back(v);
          res.faults.push_back({v, "state", "IN", "OUT", res.rounds});
          for (int u = 0; u < g_.n; ++u) res.cumulative_profits[u] += gain(g_, c, u, opt_.gain);
          res.availability_trace.push_back(availability(g_, c));
          continue;
        }
      }

      if (enabled.empty()) {
        res.converged = true;
        break;
      }
      if (res.rounds >= opt_.round_limit) {
        res.converged = false;
        break;
      }
      ++res.rounds;

      AdversaryContext adv;
      adv.g = &g_;
      adv.entering = [&](int v) {
        return rule_of[v] && !c.is_in(v) && (rule_of[v]->touches & kVarState) &&
               rule_of[v]->apply(g_, c, v).state == NodeState::IN;
      };
      RngStream sched_rng(opt_.seed, 0, res.rounds, Draw::Scheduler);
      // The round engine uses the unconditioned Bernoulli model: a round in
      // which no enabled agent is selected still elapses. This is the model
      // behind the local-state transition probabilities, which give an empty
      // selection (1-p_s)^k mass.
      std::vector<int> selected;
      if (opt_.scheduler.kind == SchedulerKind::DistributedRandomized) {
        for (int v : enabled)
          if (sched_rng.bernoulli(opt_.scheduler.p_s)) selected.push_back(v);
      } else {
        selected = select(opt_.scheduler, enabled, res.rounds, sched_rng, &adv);
      }

      std::vector<std::pair<int, AgentState>> writes;
      std::vector<std::pair<int, Action>> observed;
      for (int v : selected) {
        if (rule_of[v]) {
          const Rule& r = *rule_of[v];
          const bool enters = !c.is_in(v) && (r.touches & kVarState) &&
                              r.apply(g_, c, v).state == NodeState::IN;
          if (violation_active && enters) {
            RngStream dev_rng(opt_.seed, v, res.rounds, Draw::Deviation);
            if (apply_violation(opt_.deviation, alg_, g_, c, v, r, dev_rng)) {
              ++res.deviations;
              res.deviation_attempts.push_back(v);
              observed.emplace_back(v, Action::Preserve);
              log_rule(res.rounds, v, r.index, false);
              continue;
            }
          }
          RngStream rule_rng(opt_.seed, v, res.rounds, Draw::Rule);
          const ExecResult ex = execute(alg_, g_, c, v, r.index, probs_, rule_rng);
          if (ex.executed) writes.emplace_back(v, ex.next);
          const bool switched = ex.executed && ex.next.state != c.agents[v].state;
          observed.emplace_back(v, switched ? Action::Switch : Action::Preserve);
          log_rule(res.rounds, v, r.index, ex.executed);
        } else if (deflect[v]) {
          bool fire = true;
          if (opt_.deviation.policy == DeviationPolicy::Probabilistic) {
            RngStream dev_rng(opt_.seed, v, res.rounds, Draw::Deviation);
            fire = dev_rng.bernoulli(opt_.deviation.w);
          }
          if (fire) {
            AgentState next = c.agents[v];
            next.state = NodeState::OUT;
            writes.emplace_back(v, next);
            ++res.deviations;
            res.deviation_attempts.push_back(v);
            observed.emplace_back(v, Action::Switch);
          }
          log_rule(res.rounds, v, deflect_rule_index, fire);
        }
      }

      // all writes commit simultaneously at round end
      std::vector<NodeState> before;
      if (driver_) {
        before.resize(g_.n);
        for (int u = 0; u < g_.n; ++u) before[u] = c.agents[u].state;
      }
      for (auto& [v, next] : writes) {
        if (next.state != c.agents[v].state) ++res.state_transitions;
        ++res.moves;
        moved[v] = 1;
        c.agents[v] = std::move(next);
      }
      for (int u = 0; u < g_.n; ++u) res.cumulative_profits[u] += gain(g_, c, u, opt_.gain);
      res.availability_trace.push_back(availability(g_, c));
      if (driver_) driver_->end_of_round(before, c, observed);
    }

    if (res.availability_trace.empty()) res.availability_trace.push_back(availability(g_, c));
    res.profits.resize(g_.n);
    for (int v = 0; v < g_.n; ++v) res.profits[v] = gain(g_, c, v, opt_.gain);
    if (res.rounds == 0)
      for (int v = 0; v < g_.n; ++v) res.cumulative_profits[v] = res.profits[v];
    res.clusters = cluster_count(c);
    res.final_digest = digest_hex(c, alg_.declared_vars);
    for (int v = 0; v < g_.n; ++v)
      if (moved[v]) res.movers.push_back(v);
    res.final_config = std::move(c);
    return res;
  }

 private:
  void log_rule(long round, int v, int rule, bool executed) {
    if (opt_.rule_log)
      (*opt_.rule_log) << "t=" << round << " v=" << v << " rule=R" << rule
                       << " executed=" << (executed ? 1 : 0) << "\n";
  }

  const Graph& g_;
  const AlgorithmDescriptor& alg_;
  EngineOptions opt_;
  ProbContext probs_;
  std::unique_ptr<GameDriver> driver_;
};

// Random initial configuration covering the declared variables.
inline Configuration random_configuration(const Graph& g, unsigned declared_vars, uint64_t seed) {
  Configuration c(g.n);
  RngStream rng(seed, 0, 0, Draw::Init);
  for (int v = 0; v < g.n; ++v) {
    c.agents[v].state = rng.bernoulli(0.5) ? NodeState::IN : NodeState::OUT;
    if (declared_vars & kVarParent) {
      const int k = static_cast<int>(rng.below(g.degree(v) + 1));
      c.agents[v].parent = k == 0 ? kNoParent : g.adj[v][k - 1];
    }
    if (declared_vars & kVarParents) {
      for (int w : g.adj[v])
        if (rng.bernoulli(0.5)) insert_parent(c.agents[v].parents, w);
    }
  }
  return c;
}

// Fraction of runs that converged within ten times the deviation-free
// baseline.
inline double reliability(const std::vector<RunResult>& results, double baseline_rounds) {
  if (results.empty()) return 0.0;
  int ok = 0;
  for (const RunResult& r : results)
    if (r.converged && static_cast<double>(r.rounds) <= 10.0 * baseline_rounds) ++ok;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

}  // namespace selfstab
