#pragma once

// Experiment configuration: a sectioned key = value text file.
//
//   # comment
//   [experiment]
//   functions = sphere, rosenbrock
//   dims = 2, 5
//   budget_per_dim = 250
//   trials = 15
//   algorithms = mgso, random
//   master_seed = 1
//
//   [mgso]
//   population_size = 0      # 0 keeps the default max(10, 5 D)
//   restriction_r = 0        # 0 keeps the default 15 D
//
// Keys before the first section belong to [experiment].

#include "mgso/benchmarks.hpp"
#include "mgso/model_fit.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mgso::harness {

enum class Algorithm { Mgso, MgsoArd, Random, CmaEs };

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Mgso: return "mgso";
    case Algorithm::MgsoArd: return "mgso_ard";
    case Algorithm::Random: return "random";
    case Algorithm::CmaEs: return "cmaes";
  }
  return "unknown";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  if (s == "mgso") return Algorithm::Mgso;
  if (s == "mgso_ard") return Algorithm::MgsoArd;
  if (s == "random") return Algorithm::Random;
  if (s == "cmaes") return Algorithm::CmaEs;
  return std::nullopt;
}

/// Invalid configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string field, const std::string& msg)
      : std::runtime_error(format(line, field, msg)), line_(line), field_(std::move(field)) {}

  [[nodiscard]] int line() const noexcept { return line_; }
  [[nodiscard]] const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(int line, const std::string& field, const std::string& msg) {
    std::string s = "config";
    if (line > 0) s += " line " + std::to_string(line);
    if (!field.empty()) s += " field '" + field + "'";
    return s + ": " + msg;
  }

  int line_;
  std::string field_;
};

/// Instance ids used for the first 15 trials; further trials continue at 41.
inline std::vector<int> default_instances(int trials) {
  std::vector<int> ids{1, 2, 3, 4, 5, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40};
  for (int next = 41; static_cast<int>(ids.size()) < trials; ++next) ids.push_back(next);
  ids.resize(static_cast<std::size_t>(std::max(trials, 0)));
  return ids;
}

struct ExperimentConfig {
  std::vector<FunctionId> functions{FunctionId::Sphere, FunctionId::Rosenbrock,
                                    FunctionId::Rastrigin};
  std::vector<int> dims{2, 5};
  int budget_per_dim = 250;
  /// Absolute budget; overrides budget_per_dim when set.
  std::optional<int> budget;
  int trials = 15;
  std::vector<int> instances;
  std::vector<Algorithm> algorithms{Algorithm::Mgso, Algorithm::Random};
  std::uint64_t master_seed = 1;
  /// Worker threads; 0 uses the available cores.
  int parallelism = 0;

  int population_size = 0;
  int restriction_r = 0;
  int fit_restarts = 4;
  FitOptimizer fit_optimizer = FitOptimizer::Simplex;
  int stagnation_iterations = 5;
  int proposals_per_point = 2000;
  double ard_ratio_cap = 2.5;

  double cmaes_sigma0 = 2.0;

  [[nodiscard]] int budget_for(int dim) const { return budget ? *budget : budget_per_dim * dim; }

  [[nodiscard]] std::vector<int> instance_ids() const {
    return instances.empty() ? default_instances(trials) : instances;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, int line, const std::string& field) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(line, field, "expected a number, got '" + s + "'");
  }
  return value;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
  using detail::parse_number;
  ExperimentConfig cfg;
  std::string section = "experiment";
  std::set<std::string> seen;
  std::string raw;
  int line_no = 0;
  bool trials_set = false;

  const std::map<std::string, std::set<std::string>> known{
      {"experiment",
       {"functions", "dims", "budget_per_dim", "budget", "trials", "instances", "algorithms",
        "master_seed", "parallelism"}},
      {"mgso",
       {"population_size", "restriction_r", "fit_restarts", "fit_optimizer",
        "stagnation_iterations", "proposals_per_point", "ard_ratio_cap"}},
      {"cmaes", {"sigma0"}},
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "", "malformed section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known.contains(section)) throw ConfigError(line_no, section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "", "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (!known.at(section).contains(key)) {
      throw ConfigError(line_no, key, "unknown key in section [" + section + "]");
    }
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(line_no, key, "duplicate key");
    }
    if (value.empty()) throw ConfigError(line_no, key, "empty value");

    if (key == "functions") {
      cfg.functions.clear();
      for (const auto& s : detail::split_list(value)) {
        const auto f = parse_function(s);
        if (!f) throw ConfigError(line_no, key, "unknown function '" + s + "'");
        cfg.functions.push_back(*f);
      }
    } else if (key == "dims") {
      cfg.dims.clear();
      for (const auto& s : detail::split_list(value)) {
        const int d = parse_number<int>(s, line_no, key);
        if (d < 1) throw ConfigError(line_no, key, "dimensions must be positive");
        cfg.dims.push_back(d);
      }
    } else if (key == "algorithms") {
      cfg.algorithms.clear();
      for (const auto& s : detail::split_list(value)) {
        const auto a = parse_algorithm(s);
        if (!a) throw ConfigError(line_no, key, "unknown algorithm '" + s + "'");
        cfg.algorithms.push_back(*a);
      }
    } else if (key == "instances") {
      for (const auto& s : detail::split_list(value)) {
        cfg.instances.push_back(parse_number<int>(s, line_no, key));
      }
    } else if (key == "budget_per_dim") {
      cfg.budget_per_dim = parse_number<int>(value, line_no, key);
      if (cfg.budget_per_dim < 1) throw ConfigError(line_no, key, "must be positive");
    } else if (key == "budget") {
      cfg.budget = parse_number<int>(value, line_no, key);
      if (*cfg.budget < 1) throw ConfigError(line_no, key, "must be positive");
    } else if (key == "trials") {
      cfg.trials = parse_number<int>(value, line_no, key);
      trials_set = true;
      if (cfg.trials < 1) throw ConfigError(line_no, key, "must be positive");
    } else if (key == "master_seed") {
      cfg.master_seed = parse_number<std::uint64_t>(value, line_no, key);
    } else if (key == "parallelism") {
      cfg.parallelism = parse_number<int>(value, line_no, key);
      if (cfg.parallelism < 0) throw ConfigError(line_no, key, "must be non-negative");
    } else if (key == "population_size") {
      cfg.population_size = parse_number<int>(value, line_no, key);
      if (cfg.population_size < 0 || cfg.population_size == 1) {
        throw ConfigError(line_no, key, "must be 0 (default) or at least 2");
      }
    } else if (key == "restriction_r") {
      cfg.restriction_r = parse_number<int>(value, line_no, key);
      if (cfg.restriction_r < 0) throw ConfigError(line_no, key, "must be non-negative");
    } else if (key == "fit_restarts") {
      cfg.fit_restarts = parse_number<int>(value, line_no, key);
      if (cfg.fit_restarts < 1) throw ConfigError(line_no, key, "must be positive");
    } else if (key == "fit_optimizer") {
      if (value == "simplex") {
        cfg.fit_optimizer = FitOptimizer::Simplex;
      } else if (value == "cmaes") {
        cfg.fit_optimizer = FitOptimizer::BasicCmaEs;
      } else {
        throw ConfigError(line_no, key, "expected 'simplex' or 'cmaes'");
      }
    } else if (key == "stagnation_iterations") {
      cfg.stagnation_iterations = parse_number<int>(value, line_no, key);
      if (cfg.stagnation_iterations < 1) throw ConfigError(line_no, key, "must be positive");
    } else if (key == "proposals_per_point") {
      cfg.proposals_per_point = parse_number<int>(value, line_no, key);
      if (cfg.proposals_per_point < 1) throw ConfigError(line_no, key, "must be positive");
    } else if (key == "ard_ratio_cap") {
      cfg.ard_ratio_cap = parse_number<double>(value, line_no, key);
      if (!(cfg.ard_ratio_cap >= 1.0)) throw ConfigError(line_no, key, "must be >= 1");
    } else if (key == "sigma0") {
      cfg.cmaes_sigma0 = parse_number<double>(value, line_no, key);
      if (!(cfg.cmaes_sigma0 > 0.0)) throw ConfigError(line_no, key, "must be positive");
    }
  }

  if (cfg.functions.empty()) throw ConfigError(0, "functions", "no functions selected");
  if (cfg.dims.empty()) throw ConfigError(0, "dims", "no dimensions selected");
  if (cfg.algorithms.empty()) throw ConfigError(0, "algorithms", "no algorithms selected");
  if (!cfg.instances.empty()) {
    if (trials_set && static_cast<int>(cfg.instances.size()) != cfg.trials) {
      throw ConfigError(0, "instances", "number of instances does not match trials");
    }
    cfg.trials = static_cast<int>(cfg.instances.size());
  }
  for (int d : cfg.dims) {
    const int pop = cfg.population_size > 0 ? cfg.population_size : std::max(10, 5 * d);
    const bool has_mgso = std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(), [](Algorithm a) {
      return a == Algorithm::Mgso || a == Algorithm::MgsoArd;
    });
    if (has_mgso && cfg.budget_for(d) < pop) {
      throw ConfigError(0, cfg.budget ? "budget" : "budget_per_dim",
                        "budget " + std::to_string(cfg.budget_for(d)) +
                            " is below the MGSO population size " + std::to_string(pop) +
                            " for D = " + std::to_string(d));
    }
    if (cfg.restriction_r > 0 && cfg.restriction_r < d + 1) {
      throw ConfigError(0, "restriction_r", "must be at least D + 1");
    }
  }
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot open '" + path + "'");
  return parse_config(in);
}

}  // namespace mgso::harness
