#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfstab/experiment.hpp"

namespace selfstab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline ConfigError config_error(const std::string& source, int line, const std::string& msg) {
  std::ostringstream out;
  out << source << ":" << line << ": " << msg;
  return ConfigError(out.str());
}

inline double parse_double(const std::string& source, int line, const std::string& key,
                           const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw config_error(source, line, "invalid number '" + value + "' (field: " + key + ")");
  }
}

inline long parse_long(const std::string& source, int line, const std::string& key,
                       const std::string& value) {
  try {
    size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw config_error(source, line, "invalid integer '" + value + "' (field: " + key + ")");
  }
}

inline bool parse_bool(const std::string& source, int line, const std::string& key,
                       const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw config_error(source, line, "invalid flag '" + value + "' (field: " + key + ")");
}

}  // namespace detail

// Flat key=value configuration with dotted keys; '#' starts a comment.
// Unknown keys and malformed values are reported with the source line.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw detail::config_error(source, lineno, "expected key=value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw detail::config_error(source, lineno, "empty key");

    auto num = [&] { return detail::parse_double(source, lineno, key, value); };
    auto integer = [&] { return detail::parse_long(source, lineno, key, value); };
    auto flag = [&] { return detail::parse_bool(source, lineno, key, value); };
    auto bad_value = [&](const std::string& what) {
      return detail::config_error(source, lineno, "unknown " + what + " '" + value +
                                                      "' (field: " + key + ")");
    };

    if (key == "algorithm") {
      try {
        cfg.algorithm = algorithm_from_name(value);
      } catch (const std::invalid_argument&) {
        throw bad_value("algorithm");
      }
    } else if (key == "graph.model") {
      if (value == "ba")
        cfg.graph.model = GraphSpec::Model::BA;
      else if (value == "er")
        cfg.graph.model = GraphSpec::Model::ER;
      else if (value == "file")
        cfg.graph.model = GraphSpec::Model::File;
      else
        throw bad_value("graph model");
    } else if (key == "graph.n") {
      cfg.graph.n = static_cast<int>(integer());
    } else if (key == "graph.m") {
      cfg.graph.m = static_cast<int>(integer());
    } else if (key == "graph.p") {
      cfg.graph.p = num();
    } else if (key == "graph.path") {
      cfg.graph.path = value;
    } else if (key == "graph.fixed") {
      cfg.graph.fixed = flag();
    } else if (key == "scheduler.kind") {
      if (value == "central")
        cfg.scheduler.kind = SchedulerKind::Central;
      else if (value == "synchronous")
        cfg.scheduler.kind = SchedulerKind::Synchronous;
      else if (value == "distributed")
        cfg.scheduler.kind = SchedulerKind::DistributedRandomized;
      else if (value == "unfair")
        cfg.scheduler.kind = SchedulerKind::Unfair;
      else
        throw bad_value("scheduler kind");
    } else if (key == "scheduler.p_s") {
      cfg.scheduler.p_s = num();
    } else if (key == "scheduler.adversary") {
      if (value == "max-id-first")
        cfg.scheduler.adversary = AdversaryKind::MaxIdFirst;
      else if (value == "min-progress")
        cfg.scheduler.adversary = AdversaryKind::MinProgress;
      else if (value == "worst-chain")
        cfg.scheduler.adversary = AdversaryKind::WorstChain;
      else
        throw bad_value("adversary");
    } else if (key == "gain.theta") {
      cfg.gain.theta = num();
    } else if (key == "gain.zeta") {
      cfg.gain.zeta = num();
    } else if (key == "game.mode") {
      if (value == "game")
        cfg.game.mode = GameConfig::Mode::Game;
      else if (value == "fixed")
        cfg.game.mode = GameConfig::Mode::Fixed;
      else
        throw bad_value("game mode");
    } else if (key == "game.delta") {
      cfg.game.delta = num();
    } else if (key == "game.horizon") {
      cfg.game.horizon = static_cast<int>(integer());
    } else if (key == "game.fixed_p") {
      cfg.game.fixed_p = num();
    } else if (key == "game.fixed_q") {
      cfg.game.fixed_q = num();
    } else if (key == "game.epsilon") {
      cfg.game.epsilon = num();
    } else if (key == "game.track_beliefs") {
      cfg.game.track_beliefs = flag();
    } else if (key == "game.mc_rollouts") {
      cfg.game.mc_rollouts = static_cast<int>(integer());
    } else if (key == "deviation.kind") {
      if (value == "none")
        cfg.deviation.kind = DeviationKind::None;
      else if (value == "violation")
        cfg.deviation.kind = DeviationKind::Violation;
      else if (value == "perturbation")
        cfg.deviation.kind = DeviationKind::Perturbation;
      else if (value == "deflection")
        cfg.deviation.kind = DeviationKind::Deflection;
      else
        throw bad_value("deviation kind");
    } else if (key == "deviation.policy") {
      if (value == "always")
        cfg.deviation.policy = DeviationPolicy::Always;
      else if (value == "prob")
        cfg.deviation.policy = DeviationPolicy::Probabilistic;
      else if (value == "utility")
        cfg.deviation.policy = DeviationPolicy::UtilityDriven;
      else
        throw bad_value("deviation policy");
    } else if (key == "deviation.w") {
      cfg.deviation.w = num();
    } else if (key == "fault.trials") {
      cfg.fault.trials = integer();
    } else if (key == "fault.graphs") {
      cfg.fault.graphs = static_cast<int>(integer());
    } else if (key == "fault.agent") {
      cfg.fault.agent = static_cast<int>(integer());
    } else if (key == "init.kind") {
      if (value == "random")
        cfg.init = InitKind::Random;
      else if (value == "all_out")
        cfg.init = InitKind::AllOut;
      else if (value == "all_in")
        cfg.init = InitKind::AllIn;
      else
        throw bad_value("init kind");
    } else if (key == "vpmis.pc") {
      if (value == "synchrony")
        cfg.vpmis.mode = VpmisPc::Mode::Synchrony;
      else if (value == "inv_diameter")
        cfg.vpmis.mode = VpmisPc::Mode::InvDiameter;
      else {
        cfg.vpmis.mode = VpmisPc::Mode::Value;
        cfg.vpmis.value = num();
      }
    } else if (key == "sweep.axis") {
      if (value == "n")
        cfg.sweep.axis = SweepSpec::Axis::N;
      else if (value == "synchrony")
        cfg.sweep.axis = SweepSpec::Axis::Synchrony;
      else if (value == "avg_degree")
        cfg.sweep.axis = SweepSpec::Axis::AvgDegree;
      else
        throw bad_value("sweep axis");
    } else if (key == "sweep.values") {
      cfg.sweep.values.clear();
      std::istringstream vs(value);
      std::string item;
      while (std::getline(vs, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) cfg.sweep.values.push_back(detail::parse_double(source, lineno, key, item));
      }
      if (cfg.sweep.values.empty())
        throw detail::config_error(source, lineno, "empty value list (field: " + key + ")");
    } else if (key == "repetitions") {
      cfg.repetitions = static_cast<int>(integer());
    } else if (key == "round_limit") {
      cfg.round_limit = integer();
    } else if (key == "seed") {
      cfg.seed = static_cast<uint64_t>(integer());
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(integer());
    } else if (key == "log.rules") {
      cfg.log_rules = flag();
    } else {
      throw detail::config_error(source, lineno, "unknown key '" + key + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config(in, path);
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  std::istringstream in(text);
  return parse_config(in, source);
}

}  // namespace selfstab
