// Batch experiment runner and verification CLI for the self-stabilizing MIS
// simulator.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "selfstab/config.hpp"
#include "selfstab/experiment.hpp"
#include "selfstab/verify.hpp"

namespace fs = std::filesystem;
using namespace selfstab;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::string format = "csv";
  int workers = 0;
  long long seed = -1;
  bool seed_set = false;
};

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = parse_config_file(args.config_path);
  if (const char* env = std::getenv("SELFSTAB_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  if (args.seed_set) cfg.seed = static_cast<uint64_t>(args.seed);
  if (args.workers > 0) cfg.workers = args.workers;
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void print_summary(const ordered_json& j) {
  auto num = [&](const char* key) { return j.contains(key) ? j[key].get<double>() : 0.0; };
  std::printf("algorithm        %s\n", j["algorithm"].get<std::string>().c_str());
  std::printf("mode             %s\n", j["mode"].get<std::string>().c_str());
  std::printf("mean rounds      %.3f\n", num("avg_rounds"));
  std::printf("mean moves       %.3f\n", num("avg_moves"));
  if (j.contains("jain_mean")) std::printf("fairness (Jain)  %.5f\n", num("jain_mean"));
  if (j.contains("reliability")) std::printf("reliability      %.3f\n", num("reliability"));
  if (j.contains("success_rate")) std::printf("success rate     %.4f\n", num("success_rate"));
  if (j.contains("availability_mean")) std::printf("availability     %.4f\n", num("availability_mean"));
}

int cmd_run(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  fs::create_directories(args.out_dir);
  std::ofstream rule_log;
  if (cfg.log_rules) rule_log.open(fs::path(args.out_dir) / "rules.log", std::ios::binary);

  ExperimentResult res = cfg.fault.trials > 0
                             ? run_fault_experiment(cfg)
                             : run_experiment(cfg, rule_log.is_open() ? &rule_log : nullptr);

  const fs::path out(args.out_dir);
  if (args.format == "json") {
    ordered_json doc;
    doc["aggregate"] = res.aggregate;
    ordered_json rows = ordered_json::array();
    for (const RunRecord& r : res.records) {
      ordered_json row;
      row["run_id"] = r.run_id;
      row["rounds"] = r.rounds;
      row["moves"] = r.moves;
      row["state_transitions"] = r.state_transitions;
      row["converged"] = r.converged;
      row["deviations"] = r.deviations;
      row["jain_index"] = r.jain;
      row["availability_mean"] = r.availability_mean;
      row["cluster_count"] = r.clusters;
      row["final_digest"] = r.final_digest;
      rows.push_back(std::move(row));
    }
    doc["runs"] = std::move(rows);
    write_file(out / "results.json", doc.dump(2) + "\n");
  } else {
    write_file(out / "results.csv", res.csv());
  }
  write_file(out / "aggregate.json", res.aggregate.dump(2) + "\n");
  if (!res.fault_log.empty()) write_file(out / "faults.csv", res.fault_csv());
  print_summary(res.aggregate);
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  fs::create_directories(args.out_dir);
  SweepResult res = run_sweep(cfg);
  const fs::path out(args.out_dir);
  ordered_json doc = ordered_json::array();
  for (const auto& a : res.aggregates) doc.push_back(a);
  write_file(out / "sweep_aggregate.json", doc.dump(2) + "\n");
  write_file(out / "sweep_rounds.dat", res.rounds_dat);
  write_file(out / "sweep_moves.dat", res.moves_dat);
  write_file(out / "sweep_jain.dat", res.jain_dat);
  write_file(out / "sweep_availability.dat", res.availability_dat);
  std::printf("sweep: %zu axis points written to %s\n", res.aggregates.size(), args.out_dir.c_str());
  return 0;
}

int cmd_verify(const std::string& suite, int size_bound, const std::string& alg_name,
               const std::string& out_dir) {
  const AlgorithmDescriptor& alg = build(alg_name);
  fs::create_directories(out_dir);
  ordered_json report;
  report["suite"] = suite;
  report["algorithm"] = alg.name;
  report["size_bound"] = size_bound;
  ordered_json checks = ordered_json::array();
  bool all_pass = true;

  const int catalog_bound = std::min(size_bound, suite == "nash" ? 5 : 6);
  const std::vector<Graph> catalog = connected_graph_catalog(std::min(catalog_bound, 6));
  const GainParams params;

  int idx = 0;
  for (const Graph& g : catalog) {
    ordered_json entry;
    entry["instance"] = idx++;
    entry["n"] = g.n;
    entry["edges"] = g.edge_count();
    bool pass = true;
    if (suite == "legitimacy") {
      const LegitimateSet legit = enumerate_legitimate(alg, g);
      entry["count"] = legit.configs.size();
      pass = !legit.configs.empty();
      if (alg.id == AlgorithmId::dpMIS) {
        const auto ref = config_from_in_set(g, reference_unique_mis(g));
        pass = legit.configs.size() == 1 &&
               legit.digests.count(digest(ref, alg.declared_vars)) == 1;
      }
    } else if (suite == "nash") {
      long non_mis = 0, counterexamples = 0;
      for (uint32_t mask = 0; mask < (1u << g.n); ++mask) {
        Configuration c(g.n);
        for (int v = 0; v < g.n; ++v)
          if ((mask >> v) & 1u) c.agents[v].state = NodeState::IN;
        if (is_mis(g, c)) continue;
        ++non_mis;
        if (nash_check(alg, g, c, params, 8)) ++counterexamples;
      }
      entry["non_mis_configs"] = non_mis;
      entry["nash_counterexamples"] = counterexamples;
      pass = counterexamples == 0;
    } else if (suite == "containment") {
      if (g.n < 2) {
        entry["verdict"] = "skipped";
        checks.push_back(std::move(entry));
        continue;
      }
      const ContainmentReport rep = fault_containment_audit(alg, g);
      entry["max_depth"] = rep.max_depth;
      entry["restored_rate"] = rep.restored_rate;
      pass = rep.all_recovered;
      if (alg.id == AlgorithmId::pfMIS || alg.id == AlgorithmId::dtMIS)
        pass = pass && rep.max_depth == 0 && rep.restored_rate == 1.0;
    } else if (suite == "weakstab") {
      try {
        pass = weak_stabilization_check(alg, g);
        entry["reachable"] = pass;
      } catch (const std::invalid_argument&) {
        entry["verdict"] = "skipped";
        checks.push_back(std::move(entry));
        continue;
      }
    } else {
      throw std::invalid_argument("unknown suite '" + suite + "'");
    }
    entry["verdict"] = pass ? "pass" : "fail";
    all_pass &= pass;
    checks.push_back(std::move(entry));
  }
  report["checks"] = std::move(checks);
  report["pass"] = all_pass;
  write_file(fs::path(out_dir) / ("verify_" + suite + ".json"), report.dump(2) + "\n");
  std::printf("verify %s (%s): %s over %zu instances\n", suite.c_str(), alg.name.c_str(),
              all_pass ? "pass" : "FAIL", catalog.size());
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-stabilizing MIS clustering simulator"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string suite = "legitimacy";
  std::string alg_name = "bMIS";
  int size_bound = 5;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) sub->add_option("--config", args.config_path, "config file")->required();
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--workers", args.workers, "worker threads");
    sub->add_option("--format", args.format, "results format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option_function<long long>(
        "--seed", [&](long long s) { args.seed = s; args.seed_set = true; }, "seed override");
  };

  CLI::App* run = app.add_subcommand("run", "run a batch experiment");
  add_common(run, true);
  CLI::App* sweep = app.add_subcommand("sweep", "sweep one axis of an experiment");
  add_common(sweep, true);
  CLI::App* verify = app.add_subcommand("verify", "run brute-force oracles on the small-graph catalog");
  verify->add_option("--suite", suite, "legitimacy|nash|containment|weakstab")
      ->check(CLI::IsMember({"legitimacy", "nash", "containment", "weakstab"}));
  verify->add_option("--size", size_bound, "max catalog graph size");
  verify->add_option("--alg", alg_name, "algorithm name");
  verify->add_option("--out", args.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(args);
    if (sweep->parsed()) return cmd_sweep(args);
    if (verify->parsed()) return cmd_verify(suite, size_bound, alg_name, args.out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
