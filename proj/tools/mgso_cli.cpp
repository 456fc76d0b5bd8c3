// mgso_cli: experiment runner, quartile aggregation, plots and PoI maps.
//
//   mgso_cli run --config exp.ini --out runs.csv
//   mgso_cli aggregate --in runs.csv --checkpoints 10,20,50,100 --out quartiles.csv
//   mgso_cli plot --in quartiles.csv --out fig.svg
//   mgso_cli poi-map --function rastrigin --training 40 --grid 50 --out rastrigin_poi
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include "mgso/harness/config.hpp"
#include "mgso/harness/experiment.hpp"
#include "mgso/harness/plot.hpp"
#include "mgso/harness/poi_map.hpp"
#include "mgso/harness/quantiles.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

using namespace mgso;
using namespace mgso::harness;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const std::string& config_path, const std::string& out_path, int parallelism, bool quiet) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  if (parallelism > 0) cfg.parallelism = parallelism;
  std::ofstream out = open_out(out_path);
  try {
    const ExperimentSummary s = run_experiment(cfg, out, quiet ? nullptr : &std::cerr);
    if (!quiet) std::cerr << "wrote " << s.rows << " rows from " << s.cells << " runs to " << out_path << '\n';
  } catch (const ExperimentFailure& e) {
    std::cerr << "error: " << e.what() << " (partial results kept in " << out_path << ")\n";
    return kRuntimeFailure;
  }
  return 0;
}

int cmd_aggregate(const std::string& in_path, const std::string& checkpoints, const std::string& out_path) {
  std::vector<int> cps;
  try {
    if (!checkpoints.empty()) cps = parse_checkpoints(checkpoints);
  } catch (const AggregationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  std::istringstream in(slurp(in_path));
  const auto runs = read_runs(in);
  if (cps.empty()) {
    int last = 0;
    for (const auto& r : runs) last = std::max(last, r.eval_index.empty() ? 0 : r.eval_index.back());
    cps = default_checkpoints(last);
  }
  const auto rows = aggregate_quartiles(runs, cps, &std::cerr);
  std::ofstream out = open_out(out_path);
  write_quartiles(out, rows);
  return 0;
}

int cmd_plot(const std::string& in_path, const std::string& out_path) {
  const std::string text = slurp(in_path);
  std::istringstream in(text);
  std::vector<QuartileRow> rows;
  // Raw convergence CSVs are aggregated on the default checkpoints first.
  if (text.compare(0, kCsvHeader.size(), kCsvHeader) == 0) {
    const auto runs = read_runs(in);
    int last = 0;
    for (const auto& r : runs) last = std::max(last, r.eval_index.empty() ? 0 : r.eval_index.back());
    rows = aggregate_quartiles(runs, default_checkpoints(last), &std::cerr);
  } else {
    rows = read_quartiles(in);
  }
  if (rows.empty()) {
    std::cerr << "error: nothing to plot in " << in_path << '\n';
    return kRuntimeFailure;
  }
  std::ofstream out = open_out(out_path);
  emit_plot(rows, out);
  if (!out) throw std::runtime_error("write to '" + out_path + "' failed");
  return 0;
}

int cmd_poi_map(const std::string& function, const PoiMapOptions& opt, const std::string& prefix) {
  const auto f = parse_function(function);
  if (!f) {
    std::cerr << "error: unknown function '" << function << "'\n";
    return kUsageError;
  }
  const PoiMap map = compute_poi_map(*f, opt);
  std::ofstream csv = open_out(prefix + ".csv");
  write_poi_csv(csv, map);
  std::ofstream svg = open_out(prefix + ".svg");
  write_poi_svg(svg, map);
  if (!csv || !svg) throw std::runtime_error("write to '" + prefix + "' failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model guided sampling optimization: experiments and reports"};
  app.require_subcommand(1);

  std::string config_path, run_out;
  int parallelism = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run an experiment and write per-evaluation rows");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--out", run_out, "Output CSV")->required();
  run->add_option("--parallelism", parallelism, "Worker threads (default: config, then cores)")
      ->check(CLI::NonNegativeNumber);
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string agg_in, agg_out, checkpoints;
  auto* agg = app.add_subcommand("aggregate", "Quartiles of f_delta across trials");
  agg->add_option("--in", agg_in, "Convergence CSV")->required();
  agg->add_option("--checkpoints", checkpoints,
                  "Comma separated evaluation counts (default 10,20,50,... up to the budget)");
  agg->add_option("--out", agg_out, "Output CSV")->required();

  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plot", "SVG convergence plot");
  plot->add_option("--in", plot_in, "Quartile CSV (or a convergence CSV)")->required();
  plot->add_option("--out", plot_out, "Output SVG")->required();

  std::string function, prefix;
  PoiMapOptions poi_opt;
  auto* pm = app.add_subcommand("poi-map", "PoI landscape of a GP fitted to a 2D benchmark");
  pm->add_option("--function", function, "sphere, rosenbrock or rastrigin")->required();
  pm->add_option("--training", poi_opt.n_training, "Number of random training points")
      ->check(CLI::Range(2, 1000));
  pm->add_option("--grid", poi_opt.grid, "Grid points per axis")->check(CLI::Range(2, 2000));
  pm->add_option("--seed", poi_opt.seed, "Sampling seed");
  pm->add_option("--instance", poi_opt.instance, "Benchmark instance id");
  pm->add_option("--out", prefix, "Output prefix for .csv and .svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*run) return cmd_run(config_path, run_out, parallelism, quiet);
    if (*agg) return cmd_aggregate(agg_in, checkpoints, agg_out);
    if (*plot) return cmd_plot(plot_in, plot_out);
    if (*pm) return cmd_poi_map(function, poi_opt, prefix);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
