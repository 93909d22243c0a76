#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "selfstab/algorithms.hpp"
#include "selfstab/graph.hpp"
#include "selfstab/sim.hpp"

namespace selfstab {

using ordered_json = nlohmann::ordered_json;

struct GraphSpec {
  enum class Model { BA, ER, File };
  Model model = Model::BA;
  int n = 40;
  int m = 3;        // BA attachment count
  double p = 0.2;   // ER edge probability
  std::string path;
  bool fixed = false;  // one graph for all repetitions
};

enum class InitKind { Random, AllOut, AllIn };

struct FaultSpec {
  long trials = 0;  // > 0 switches to the 1-fault census
  int graphs = 10;
  int agent = -1;  // fixed fault site, or uniform over IN agents
};

struct VpmisPc {
  enum class Mode { Synchrony, InvDiameter, Value };
  Mode mode = Mode::Synchrony;
  double value = 0.7;
};

struct SweepSpec {
  enum class Axis { None, N, Synchrony, AvgDegree };
  Axis axis = Axis::None;
  std::vector<double> values;
};

struct ExperimentConfig {
  AlgorithmId algorithm = AlgorithmId::bMIS;
  GraphSpec graph;
  SchedulerPolicy scheduler;
  GainParams gain;
  GameConfig game;
  DeviationModel deviation;
  FaultSpec fault;
  InitKind init = InitKind::Random;
  VpmisPc vpmis;
  SweepSpec sweep;
  int repetitions = 100;
  long round_limit = 0;  // 0: defaults to 50 n
  uint64_t seed = 1;
  int workers = 1;
  bool log_rules = false;

  long effective_round_limit() const { return round_limit > 0 ? round_limit : 50L * graph.n; }

  double vpmis_pc_value() const {
    switch (vpmis.mode) {
      case VpmisPc::Mode::Synchrony:
        return -1.0;
      case VpmisPc::Mode::InvDiameter:
        return 1.0 / estimate_diameter(graph.n);
      case VpmisPc::Mode::Value:
        return vpmis.value;
    }
    return -1.0;
  }

  void validate() const {
    if (repetitions <= 0) throw std::invalid_argument("repetitions > 0 required");
    if (effective_round_limit() <= 0) throw std::invalid_argument("round_limit > 0 required");
    gain.validate();
    game.validate();
    scheduler.validate();
    deviation.validate();
  }
};

// One CSV row.
struct RunRecord {
  long run_id = 0;
  std::string algorithm;
  int n = 0;
  double avg_degree = 0.0;
  double synchrony = 1.0;
  uint64_t seed = 0;
  long rounds = 0;
  long moves = 0;
  long state_transitions = 0;
  bool converged = false;
  long deviations = 0;
  double jain = std::nan("");
  double availability_mean = 0.0;
  int clusters = 0;
  std::string final_digest;
};

inline constexpr const char* kCsvHeader =
    "run_id,algorithm,n,avg_degree,synchrony,seed,rounds,moves,state_transitions,converged,"
    "deviations,jain_index,availability_mean,cluster_count,final_digest";

inline std::string csv_row(const RunRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%s,%d,%.4f,%.4f,%llu,%ld,%ld,%ld,%d,%ld,%.6f,%.6f,%d,%s",
                r.run_id, r.algorithm.c_str(), r.n, r.avg_degree, r.synchrony,
                static_cast<unsigned long long>(r.seed), r.rounds, r.moves, r.state_transitions,
                r.converged ? 1 : 0, r.deviations, r.jain, r.availability_mean, r.clusters,
                r.final_digest.c_str());
  return buf;
}

struct ExperimentResult {
  std::vector<RunRecord> records;
  ordered_json aggregate;
  std::vector<FaultEvent> fault_log;

  std::string csv() const {
    std::ostringstream out;
    out << kCsvHeader << "\n";
    for (const RunRecord& r : records) out << csv_row(r) << "\n";
    return out.str();
  }

  std::string fault_csv() const {
    std::ostringstream out;
    out << "round,agent,variable,before,after\n";
    for (const FaultEvent& f : fault_log)
      out << f.round << "," << f.agent << "," << f.variable << "," << f.before << "," << f.after
          << "\n";
    return out.str();
  }
};

namespace detail {

inline Graph make_graph(const ExperimentConfig& cfg, int rep) {
  const uint64_t gseed =
      derive_seed(cfg.seed, cfg.graph.fixed ? 0 : static_cast<uint64_t>(rep), 0,
                  static_cast<uint64_t>(Draw::Graph));
  switch (cfg.graph.model) {
    case GraphSpec::Model::BA:
      return generate_ba(cfg.graph.n, cfg.graph.m, gseed);
    case GraphSpec::Model::ER:
      return generate_er(cfg.graph.n, cfg.graph.p, gseed);
    case GraphSpec::Model::File: {
      std::ifstream in(cfg.graph.path);
      if (!in) throw std::runtime_error("cannot open graph file: " + cfg.graph.path);
      return from_edge_list(in);
    }
  }
  throw std::logic_error("unreachable");
}

inline Configuration make_initial(const ExperimentConfig& cfg, const Graph& g, int rep) {
  const AlgorithmDescriptor& alg = descriptor(cfg.algorithm);
  switch (cfg.init) {
    case InitKind::AllOut:
      return Configuration(g.n);
    case InitKind::AllIn: {
      Configuration c(g.n);
      for (auto& a : c.agents) a.state = NodeState::IN;
      return c;
    }
    case InitKind::Random:
      return random_configuration(
          g, alg.declared_vars,
          derive_seed(cfg.seed, static_cast<uint64_t>(rep), 1, static_cast<uint64_t>(Draw::Init)));
  }
  throw std::logic_error("unreachable");
}

inline EngineOptions engine_options(const ExperimentConfig& cfg, int rep, long round_limit,
                                    std::ostream* log = nullptr,
                                    std::shared_ptr<GameDriver::Cache> cache = nullptr) {
  EngineOptions opt;
  opt.scheduler = cfg.scheduler;
  opt.gain = cfg.gain;
  opt.game = cfg.game;
  opt.deviation = cfg.deviation;
  opt.vpmis_pc = cfg.vpmis_pc_value();
  opt.round_limit = round_limit;
  opt.seed = derive_seed(cfg.seed, static_cast<uint64_t>(rep), 2, 0x9d);
  opt.rule_log = log;
  opt.solve_cache = std::move(cache);
  return opt;
}

inline RunRecord to_record(const ExperimentConfig& cfg, int rep, const Graph& g,
                           const RunResult& run) {
  RunRecord rec;
  rec.run_id = rep;
  rec.algorithm = descriptor(cfg.algorithm).name;
  rec.n = g.n;
  rec.avg_degree = g.average_degree();
  rec.synchrony =
      cfg.scheduler.kind == SchedulerKind::DistributedRandomized ? cfg.scheduler.p_s : 1.0;
  rec.seed = derive_seed(cfg.seed, static_cast<uint64_t>(rep), 2, 0x9d);
  rec.rounds = run.rounds;
  rec.moves = run.moves;
  rec.state_transitions = run.state_transitions;
  rec.converged = run.converged;
  rec.deviations = run.deviations;
  try {
    rec.jain = jain_index(run.cumulative_profits);
  } catch (const std::exception&) {
    rec.jain = std::nan("");
  }
  double acc = 0.0;
  for (double a : run.availability_trace) acc += a;
  rec.availability_mean =
      run.availability_trace.empty() ? 0.0 : acc / run.availability_trace.size();
  rec.clusters = run.clusters;
  rec.final_digest = run.final_digest;
  return rec;
}

struct Stats {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= xs.size();
  if (xs.size() > 1) {
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    var /= (xs.size() - 1);
    s.stderr_ = std::sqrt(var / xs.size());
  }
  return s;
}

template <typename Fn>
inline void parallel_for(int count, int workers, Fn&& fn) {
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int nthreads = std::min(workers, count);
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Converge / deviation experiment
// ---------------------------------------------------------------------------

// Runs the configured repetitions. With a deviation model active, a
// deviation-free baseline phase (same per-repetition seeds) is run first; the
// deviation phase gets a round budget of ten times the baseline mean and the
// aggregate carries reliability and per-attempt success statistics.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* rule_log = nullptr) {
  cfg.validate();
  const AlgorithmDescriptor& alg = descriptor(cfg.algorithm);
  const int reps = cfg.repetitions;
  const bool deviating = cfg.deviation.kind != DeviationKind::None;

  struct RepOutcome {
    Graph graph;
    RunResult run;
    RunResult baseline;
  };
  std::vector<RepOutcome> outcomes(reps);

  double baseline_rounds = static_cast<double>(cfg.effective_round_limit());
  if (deviating) {
    ExperimentConfig base = cfg;
    base.deviation.kind = DeviationKind::None;
    detail::parallel_for(reps, cfg.workers, [&](int rep) {
      Graph g = detail::make_graph(base, rep);
      Engine engine(g, alg, detail::engine_options(base, rep, base.effective_round_limit()));
      outcomes[rep].baseline = engine.run(detail::make_initial(base, g, rep));
      outcomes[rep].graph = std::move(g);
    });
    std::vector<double> rounds;
    for (const auto& o : outcomes)
      if (o.baseline.converged) rounds.push_back(static_cast<double>(o.baseline.rounds));
    if (!rounds.empty()) baseline_rounds = detail::stats_of(rounds).mean;
  }

  const long limit = deviating ? std::max<long>(1, static_cast<long>(std::ceil(10.0 * baseline_rounds)))
                               : cfg.effective_round_limit();
  detail::parallel_for(reps, cfg.workers, [&](int rep) {
    if (!deviating) outcomes[rep].graph = detail::make_graph(cfg, rep);
    const Graph& g = outcomes[rep].graph;
    std::ostream* log = rep == 0 && cfg.log_rules ? rule_log : nullptr;
    Engine engine(g, alg, detail::engine_options(cfg, rep, limit, log));
    outcomes[rep].run = engine.run(detail::make_initial(cfg, g, rep));
  });

  ExperimentResult result;
  std::vector<double> rounds, moves, transitions, clusters, jains, avails, degrees;
  std::set<std::string> distinct;
  long converged = 0, deviations = 0, attempts = 0, successes = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto& o = outcomes[rep];
    RunRecord rec = detail::to_record(cfg, rep, o.graph, o.run);
    if (o.run.converged) {
      ++converged;
      rounds.push_back(static_cast<double>(o.run.rounds));
      moves.push_back(static_cast<double>(o.run.moves));
      transitions.push_back(static_cast<double>(o.run.state_transitions));
      clusters.push_back(static_cast<double>(o.run.clusters));
      distinct.insert(o.run.final_digest);
    }
    if (!std::isnan(rec.jain)) jains.push_back(rec.jain);
    avails.push_back(rec.availability_mean);
    degrees.push_back(rec.avg_degree);
    deviations += o.run.deviations;
    attempts += static_cast<long>(o.run.deviation_attempts.size());
    if (deviating && o.run.converged && o.baseline.converged) {
      for (int agent : o.run.deviation_attempts) {
        if (!o.run.final_config.is_in(agent) && o.baseline.final_config.is_in(agent)) ++successes;
      }
    }
    for (const FaultEvent& f : o.run.faults) result.fault_log.push_back(f);
    result.records.push_back(std::move(rec));
  }

  ordered_json& j = result.aggregate;
  j["mode"] = deviating ? "deviation" : "converge";
  j["algorithm"] = alg.name;
  j["n"] = cfg.graph.n;
  j["avg_degree"] = detail::stats_of(degrees).mean;
  j["synchrony"] =
      cfg.scheduler.kind == SchedulerKind::DistributedRandomized ? cfg.scheduler.p_s : 1.0;
  j["seed"] = cfg.seed;
  j["repetitions"] = reps;
  j["round_limit"] = limit;
  j["convergence_rate"] = static_cast<double>(converged) / reps;
  const auto rs = detail::stats_of(rounds);
  const auto ms = detail::stats_of(moves);
  j["avg_rounds"] = rs.mean;
  j["stderr_rounds"] = rs.stderr_;
  j["avg_moves"] = ms.mean;
  j["stderr_moves"] = ms.stderr_;
  j["avg_state_transitions"] = detail::stats_of(transitions).mean;
  j["avg_clusters"] = detail::stats_of(clusters).mean;
  j["distinct_final_configurations"] = distinct.size();
  j["jain_mean"] = detail::stats_of(jains).mean;
  j["availability_mean"] = detail::stats_of(avails).mean;
  if (deviating) {
    std::vector<RunResult> runs;
    for (auto& o : outcomes) runs.push_back(o.run);
    j["baseline_rounds"] = baseline_rounds;
    j["reliability"] = reliability(runs, baseline_rounds);
    j["avg_deviations"] = static_cast<double>(deviations) / reps;
    j["deviation_attempts"] = attempts;
    j["deviation_success_rate"] =
        attempts > 0 ? static_cast<double>(successes) / static_cast<double>(attempts) : 0.0;
  }
  return result;
}

// ---------------------------------------------------------------------------
// 1-fault census
// ---------------------------------------------------------------------------

// Converges a handful of graphs, then injects IN-to-OUT 1-faults at random
// cluster-heads and measures the recovery.
inline ExperimentResult run_fault_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.fault.trials <= 0) throw std::invalid_argument("fault experiment: fault.trials > 0");
  const AlgorithmDescriptor& alg = descriptor(cfg.algorithm);
  const int graphs = cfg.graph.fixed ? 1 : std::max(1, cfg.fault.graphs);
  const long per_graph = (cfg.fault.trials + graphs - 1) / graphs;

  struct Trial {
    RunRecord rec;
    bool valid = false;
    bool success = false;
    bool restored = false;
    bool recovered = false;
    int depth = 0;
    FaultEvent event;
  };
  std::vector<std::vector<Trial>> all(graphs);

  detail::parallel_for(graphs, cfg.workers, [&](int gi) {
    Graph g = detail::make_graph(cfg, gi);
    auto cache = std::make_shared<GameDriver::Cache>();
    // the census needs any legitimate base configuration; warming up with
    // fixed-probability rules reaches one without solving games en route
    ExperimentConfig warm_cfg = cfg;
    warm_cfg.game.mode = GameConfig::Mode::Fixed;
    Engine warm(g, alg, detail::engine_options(warm_cfg, gi, cfg.effective_round_limit()));
    RunResult settled = warm.run(detail::make_initial(cfg, g, gi));
    if (!settled.converged || !is_legitimate(alg, g, settled.final_config)) return;
    std::vector<int> heads;
    for (int v = 0; v < g.n; ++v)
      if (settled.final_config.is_in(v)) heads.push_back(v);
    if (heads.empty()) return;
    const uint64_t base_digest = digest(settled.final_config, alg.declared_vars);

    all[gi].resize(per_graph);
    for (long t = 0; t < per_graph; ++t) {
      RngStream pick(cfg.seed, static_cast<uint64_t>(gi), static_cast<uint64_t>(t), Draw::Fault);
      const int site = cfg.fault.agent >= 0 ? cfg.fault.agent
                                            : heads[pick.below(heads.size())];
      auto [faulted, ev] = inject_perturbation(alg, g, settled.final_config, site);
      EngineOptions opt = detail::engine_options(cfg, gi, cfg.effective_round_limit(), nullptr, cache);
      opt.seed = derive_seed(cfg.seed, static_cast<uint64_t>(gi), static_cast<uint64_t>(t), 0xFA);
      Engine engine(g, alg, opt);
      RunResult run = engine.run(faulted);
      Trial& tr = all[gi][t];
      tr.valid = true;
      tr.rec = detail::to_record(cfg, gi, g, run);
      tr.recovered = run.converged;
      tr.success = run.converged && fault_success(ev, run.final_config);
      tr.restored = run.converged && digest(run.final_config, alg.declared_vars) == base_digest;
      tr.depth = contamination_depth(g, ev, run.movers);
      tr.event = ev;
    }
  });

  ExperimentResult result;
  std::vector<double> moves, rounds;
  long trials = 0, successes = 0, restored = 0, recovered = 0;
  int max_depth = 0;
  double depth_sum = 0.0;
  long run_id = 0;
  for (int gi = 0; gi < graphs; ++gi) {
    for (auto& tr : all[gi]) {
      if (!tr.valid) continue;
      ++trials;
      tr.rec.run_id = run_id++;
      moves.push_back(static_cast<double>(tr.rec.moves));
      rounds.push_back(static_cast<double>(tr.rec.rounds));
      if (tr.success) ++successes;
      if (tr.restored) ++restored;
      if (tr.recovered) ++recovered;
      max_depth = std::max(max_depth, tr.depth);
      depth_sum += tr.depth;
      tr.event.round = tr.rec.run_id;
      result.fault_log.push_back(tr.event);
      result.records.push_back(std::move(tr.rec));
    }
  }
  if (trials == 0) throw std::runtime_error("fault experiment: no graph converged to a legitimate configuration");

  ordered_json& j = result.aggregate;
  j["mode"] = "fault";
  j["algorithm"] = alg.name;
  j["n"] = cfg.graph.n;
  j["synchrony"] =
      cfg.scheduler.kind == SchedulerKind::DistributedRandomized ? cfg.scheduler.p_s : 1.0;
  j["seed"] = cfg.seed;
  j["graphs"] = graphs;
  j["trials"] = trials;
  j["avg_moves"] = detail::stats_of(moves).mean;
  j["avg_rounds"] = detail::stats_of(rounds).mean;
  j["success_rate"] = static_cast<double>(successes) / trials;
  j["restored_rate"] = static_cast<double>(restored) / trials;
  j["recovered_rate"] = static_cast<double>(recovered) / trials;
  j["max_contamination_depth"] = max_depth;
  j["avg_contamination_depth"] = depth_sum / trials;
  return result;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepResult {
  std::vector<ordered_json> aggregates;
  // plot-ready "x mean stderr" lines per metric
  std::string rounds_dat;
  std::string moves_dat;
  std::string jain_dat;
  std::string availability_dat;
};

inline ExperimentConfig apply_axis(ExperimentConfig cfg, SweepSpec::Axis axis, double value) {
  switch (axis) {
    case SweepSpec::Axis::N:
      cfg.graph.n = static_cast<int>(value);
      break;
    case SweepSpec::Axis::Synchrony:
      cfg.scheduler.p_s = value;
      break;
    case SweepSpec::Axis::AvgDegree:
      if (cfg.graph.model == GraphSpec::Model::BA)
        cfg.graph.m = std::max(1, static_cast<int>(std::lround(value / 2.0)));
      else
        cfg.graph.p = value / std::max(1, cfg.graph.n - 1);
      break;
    case SweepSpec::Axis::None:
      break;
  }
  return cfg;
}

inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep.axis == SweepSpec::Axis::None || cfg.sweep.values.empty())
    throw std::invalid_argument("sweep: empty axis");
  SweepResult out;
  std::ostringstream rounds, moves, jain, avail;
  for (double value : cfg.sweep.values) {
    ExperimentConfig point = apply_axis(cfg, cfg.sweep.axis, value);
    ExperimentResult res = cfg.fault.trials > 0 ? run_fault_experiment(point) : run_experiment(point);
    const ordered_json& j = res.aggregate;
    char line[160];
    auto emit = [&](std::ostringstream& os, const char* mean_key, const char* err_key) {
      const double m = j.contains(mean_key) ? j[mean_key].get<double>() : std::nan("");
      const double e = err_key && j.contains(err_key) ? j[err_key].get<double>() : 0.0;
      std::snprintf(line, sizeof line, "%.6g %.6f %.6f\n", value, m, e);
      os << line;
    };
    emit(rounds, "avg_rounds", "stderr_rounds");
    emit(moves, "avg_moves", "stderr_moves");
    emit(jain, "jain_mean", nullptr);
    emit(avail, "availability_mean", nullptr);
    ordered_json agg = j;
    agg["axis_value"] = value;
    out.aggregates.push_back(std::move(agg));
  }
  out.rounds_dat = rounds.str();
  out.moves_dat = moves.str();
  out.jain_dat = jain.str();
  out.availability_dat = avail.str();
  return out;
}

}  // namespace selfstab
