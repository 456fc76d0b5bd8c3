#include "mgso/harness/config.hpp"
#include "mgso/harness/experiment.hpp"
#include "mgso/harness/plot.hpp"
#include "mgso/harness/poi_map.hpp"
#include "mgso/harness/quantiles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using namespace mgso::harness;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mgso_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MGSO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// ---- config ---------------------------------------------------------------

TEST(Config, ParsesSectionsAndDefaults) {
  const auto cfg = parse_config_string(
      "# comment\n"
      "functions = sphere, rastrigin\n"
      "dims = 2\n"
      "budget = 120\n"
      "trials = 3\n"
      "algorithms = mgso, cmaes\n"
      "master_seed = 77\n"
      "[mgso]\n"
      "population_size = 12\n"
      "restriction_r = 20  # trailing comment\n"
      "fit_optimizer = cmaes\n"
      "[cmaes]\n"
      "sigma0 = 1.5\n");
  EXPECT_EQ(cfg.functions.size(), 2u);
  EXPECT_EQ(cfg.budget_for(2), 120);
  EXPECT_EQ(cfg.instance_ids(), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(cfg.master_seed, 77u);
  EXPECT_EQ(cfg.population_size, 12);
  EXPECT_EQ(cfg.restriction_r, 20);
  EXPECT_EQ(cfg.fit_optimizer, mgso::FitOptimizer::BasicCmaEs);
  EXPECT_EQ(cfg.cmaes_sigma0, 1.5);
  EXPECT_EQ(default_instances(15),
            (std::vector<int>{1, 2, 3, 4, 5, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40}));
  EXPECT_EQ(default_instances(17).back(), 42);
}

void expect_config_error(const std::string& text, int line, const std::string& field) {
  try {
    parse_config_string(text);
    ADD_FAILURE() << "no error for:\n" << text;
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
    EXPECT_EQ(e.field(), field) << e.what();
  }
}

TEST(Config, ErrorsCarryLineAndField) {
  expect_config_error("dims = 2\nbogus = 1\n", 2, "bogus");
  expect_config_error("functions = sphere, ackley\n", 1, "functions");
  expect_config_error("dims = 2\ndims = 3\n", 2, "dims");
  expect_config_error("\n\ntrials = many\n", 3, "trials");
  expect_config_error("trials = 0\n", 1, "trials");
  expect_config_error("[nope]\n", 1, "nope");
  expect_config_error("[mgso]\nfunctions = sphere\n", 2, "functions");
  expect_config_error("algorithms = mgso, simplex\n", 1, "algorithms");
  expect_config_error("just words\n", 1, "");
  expect_config_error("dims = 2\nbudget = 5\n", 0, "budget");
}

// ---- quartiles ------------------------------------------------------------

TEST(Quartiles, Fixtures) {
  auto q = quartiles({1, 2, 3, 4, 5});
  EXPECT_EQ(q.q1, 2.0);
  EXPECT_EQ(q.median, 3.0);
  EXPECT_EQ(q.q3, 4.0);
  q = quartiles({4, 1, 3, 2});
  EXPECT_EQ(q.q1, 1.75);
  EXPECT_EQ(q.median, 2.5);
  EXPECT_EQ(q.q3, 3.25);
  q = quartiles({7.5});
  EXPECT_EQ(q.q1, 7.5);
  EXPECT_EQ(q.median, 7.5);
  EXPECT_EQ(q.q3, 7.5);
}

TEST(Quartiles, OrderedOnRandomSamples) {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> g(0, 3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(1 + t % 17);
    for (double& x : v) x = g(rng);
    const auto q = quartiles(v);
    EXPECT_LE(q.q1, q.median);
    EXPECT_LE(q.median, q.q3);
  }
}

std::string fixture_csv() {
  // Two runs with different lengths; the shorter one is carried forward.
  return std::string(kCsvHeader) + "\n" +
         "a-1,mgso,sphere,2,1,9,1,5,4\n"
         "a-1,mgso,sphere,2,1,9,2,3,2\n"
         "a-1,mgso,sphere,2,1,9,3,2,1\n"
         "a-2,mgso,sphere,2,2,8,1,9,8\n"
         "a-2,mgso,sphere,2,2,8,2,7,6\n";
}

TEST(Aggregate, CarriesForwardAndOmitsEmpty) {
  std::istringstream in(fixture_csv());
  const auto runs = read_runs(in);
  ASSERT_EQ(runs.size(), 2u);
  std::ostringstream warn;
  const auto rows = aggregate_quartiles(runs, {3, 2}, &warn);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].eval_index, 2);
  EXPECT_EQ(rows[0].median, 4.0);
  EXPECT_EQ(rows[1].eval_index, 3);
  EXPECT_EQ(rows[1].n_trials, 2);
  EXPECT_EQ(rows[1].q1, 2.25);
  EXPECT_EQ(rows[1].median, 3.5);
  EXPECT_EQ(rows[1].q3, 4.75);
  EXPECT_TRUE(warn.str().empty());

  // A run starting after a checkpoint contributes nothing there.
  std::istringstream late(std::string(kCsvHeader) + "\nb,random,sphere,2,1,1,5,1,1\n");
  const auto none = aggregate_quartiles(read_runs(late), {1}, &warn);
  EXPECT_TRUE(none.empty());
  EXPECT_NE(warn.str().find("omitted"), std::string::npos);
}

TEST(Aggregate, AuditRejectsViolations) {
  const std::string h = std::string(kCsvHeader) + "\n";
  std::istringstream up(h + "r,mgso,sphere,2,1,1,1,1,1\nr,mgso,sphere,2,1,1,2,2,2\n");
  EXPECT_THROW(read_runs(up), AggregationError);
  std::istringstream idx(h + "r,mgso,sphere,2,1,1,2,1,1\nr,mgso,sphere,2,1,1,2,1,1\n");
  EXPECT_THROW(read_runs(idx), AggregationError);
  std::istringstream hdr("run,algorithm\n");
  EXPECT_THROW(read_runs(hdr), AggregationError);
  std::istringstream num(h + "r,mgso,sphere,2,1,1,1,abc,1\n");
  EXPECT_THROW(read_runs(num), AggregationError);
}

TEST(Aggregate, Idempotent) {
  std::istringstream a(fixture_csv()), b(fixture_csv());
  std::ostringstream oa, ob;
  write_quartiles(oa, aggregate_quartiles(read_runs(a), {1, 2, 3}));
  write_quartiles(ob, aggregate_quartiles(read_runs(b), {1, 2, 3}));
  EXPECT_EQ(oa.str(), ob.str());
  std::istringstream back(oa.str());
  const auto rows = read_quartiles(back);
  EXPECT_EQ(rows.size(), 3u);
}

TEST(Aggregate, DefaultCheckpoints) {
  EXPECT_EQ(default_checkpoints(500), (std::vector<int>{10, 20, 50, 100, 200, 500}));
  EXPECT_EQ(default_checkpoints(300), (std::vector<int>{10, 20, 50, 100, 200, 300}));
  EXPECT_EQ(default_checkpoints(5), (std::vector<int>{5}));
  EXPECT_EQ(parse_checkpoints("10, 20,50"), (std::vector<int>{10, 20, 50}));
  EXPECT_THROW(parse_checkpoints("10,x"), AggregationError);
  EXPECT_THROW(parse_checkpoints("0"), AggregationError);
}

// ---- experiment -----------------------------------------------------------

TEST(Experiment, RowAccountingAndSchema) {
  auto cfg = parse_config_string("functions = sphere\ndims = 2\nbudget = 50\ntrials = 2\nalgorithms = mgso\n");
  std::ostringstream out;
  const auto s = run_experiment(cfg, out);
  EXPECT_EQ(s.cells, 2u);
  EXPECT_EQ(s.rows, 100u);
  const std::string text = out.str();
  EXPECT_EQ(count_lines(text), 101);
  EXPECT_EQ(text.substr(0, text.find('\n')), kCsvHeader);
  std::istringstream in(text);
  const auto runs = read_runs(in);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].run_id, "mgso-sphere-d2-i1");
  EXPECT_EQ(runs[0].eval_index.front(), 1);
  EXPECT_EQ(runs[0].eval_index.back(), 50);
}

TEST(Experiment, ByteIdenticalAcrossRunsAndParallelism) {
  auto cfg = parse_config_string(
      "functions = rosenbrock\ndims = 2\nbudget = 40\ntrials = 3\nalgorithms = mgso, random, cmaes\n");
  cfg.parallelism = 1;
  std::ostringstream a, b, c;
  run_experiment(cfg, a);
  run_experiment(cfg, b);
  cfg.parallelism = 3;
  run_experiment(cfg, c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(), c.str());
  EXPECT_EQ(count_lines(a.str()), 1 + 3 * 3 * 40);
}

TEST(Experiment, CellSegmentReproducibleInIsolation) {
  auto full = parse_config_string("functions = sphere\ndims = 2\nbudget = 30\ntrials = 3\nalgorithms = random\n");
  auto single = parse_config_string(
      "functions = sphere\ndims = 2\nbudget = 30\ninstances = 31\nalgorithms = random\n");
  full.instances = {1, 2, 31};
  full.trials = 3;
  std::ostringstream a, b;
  run_experiment(full, a);
  run_experiment(single, b);
  const std::string seg = b.str().substr(b.str().find('\n') + 1);
  EXPECT_NE(a.str().find(seg), std::string::npos);
}

TEST(Experiment, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, -2.5e-17}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

// ---- plot -----------------------------------------------------------------

std::vector<QuartileRow> plot_fixture() {
  return {
      {"mgso", "sphere", 2, 10, 3, 1.0, 2.0, 4.0},
      {"mgso", "sphere", 2, 100, 3, 1e-4, 1e-3, 1e-2},
      {"mgso", "sphere", 2, 500, 3, 1e-9, 1e-8, 1e-6},
      {"random", "sphere", 2, 10, 3, 2.0, 3.0, 5.0},
      {"random", "sphere", 2, 100, 3, 0.1, 0.3, 0.5},
      {"random", "sphere", 2, 500, 3, 0.01, 0.04, 0.09},
      {"mgso", "rastrigin", 2, 10, 3, 5.0, 8.0, 12.0},
      {"mgso", "rastrigin", 2, 500, 3, 0.0, 1e-8, 0.99},
  };
}

TEST(Plot, GoldenFile) {
  std::ostringstream svg;
  emit_plot(plot_fixture(), svg);
  const fs::path golden = fs::path(MGSO_TEST_DATA_DIR) / "plot_golden.svg";
  if (std::getenv("MGSO_UPDATE_GOLDEN")) write_file(golden, svg.str());
  EXPECT_EQ(svg.str(), read_file(golden));
}

TEST(Plot, WellFormedAndOrdered) {
  std::ostringstream svg;
  emit_plot({plot_fixture()[0]}, svg);
  const std::string s = svg.str();
  EXPECT_EQ(s.rfind("<?xml", 0), 0u);
  EXPECT_NE(s.find("<svg"), std::string::npos);
  EXPECT_EQ(s.substr(s.size() - 7), "</svg>\n");
  EXPECT_EQ(count_lines(s) > 5, true);
  auto bad = plot_fixture();
  std::swap(bad[0].q1, bad[0].q3);
  std::ostringstream sink;
  EXPECT_THROW(emit_plot(bad, sink), std::invalid_argument);
  EXPECT_THROW(emit_plot({}, sink), std::invalid_argument);
}

// ---- poi map --------------------------------------------------------------

TEST(PoiMap, GridRangeAndOrdering) {
  PoiMapOptions opt;
  const PoiMap m = compute_poi_map(mgso::FunctionId::Rastrigin, opt);
  ASSERT_EQ(m.values.size(), 2500u);
  for (double p : m.values) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  Eigen::Index lo = 0, hi = 0;
  m.training.values.minCoeff(&lo);
  m.training.values.maxCoeff(&hi);
  const double p_lo = mgso::poi(m.posterior, m.training.points.row(lo).transpose(), m.threshold);
  const double p_hi = mgso::poi(m.posterior, m.training.points.row(hi).transpose(), m.threshold);
  EXPECT_GE(p_lo, p_hi);

  std::ostringstream csv;
  write_poi_csv(csv, m);
  EXPECT_EQ(count_lines(csv.str()), 2501);
}

TEST(PoiMap, Deterministic) {
  PoiMapOptions opt;
  opt.grid = 20;
  const PoiMap a = compute_poi_map(mgso::FunctionId::Sphere, opt);
  const PoiMap b = compute_poi_map(mgso::FunctionId::Sphere, opt);
  EXPECT_EQ(a.values, b.values);
}

// ---- command line ---------------------------------------------------------

TEST(Cli, EndToEnd) {
  const fs::path d = scratch_dir("cli");
  write_file(d / "exp.ini",
             "functions = sphere\ndims = 2\nbudget = 30\ntrials = 2\nalgorithms = random, mgso\n");
  ASSERT_EQ(run_cli("run --config " + (d / "exp.ini").string() + " --out " + (d / "runs.csv").string()), 0);
  EXPECT_EQ(count_lines(read_file(d / "runs.csv")), 1 + 4 * 30);
  ASSERT_EQ(run_cli("aggregate --in " + (d / "runs.csv").string() + " --checkpoints 10,30 --out " +
                    (d / "q.csv").string()),
            0);
  EXPECT_EQ(count_lines(read_file(d / "q.csv")), 1 + 2 * 2);
  ASSERT_EQ(run_cli("plot --in " + (d / "q.csv").string() + " --out " + (d / "fig.svg").string()), 0);
  EXPECT_GT(fs::file_size(d / "fig.svg"), 0u);
  ASSERT_EQ(run_cli("poi-map --function rastrigin --training 40 --grid 50 --out " + (d / "pm").string()), 0);
  EXPECT_EQ(count_lines(read_file(d / "pm.csv")), 2501);
  EXPECT_TRUE(fs::exists(d / "pm.svg"));
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch_dir("cli_codes");
  write_file(d / "bad.ini", "functions = sphere\nwhat = 1\n");
  EXPECT_EQ(run_cli("run --config " + (d / "bad.ini").string() + " --out " + (d / "x.csv").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (d / "missing.ini").string() + " --out " + (d / "x.csv").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("poi-map --function ackley --out " + (d / "pm").string()), 2);
  EXPECT_EQ(run_cli("aggregate --in " + (d / "missing.csv").string() + " --out " + (d / "q.csv").string()), 1);
  write_file(d / "ok.ini", "functions = sphere\ndims = 2\nbudget = 20\ntrials = 1\nalgorithms = random\n");
  EXPECT_EQ(run_cli("run --config " + (d / "ok.ini").string() + " --out /nonexistent/dir/x.csv"), 1);
  write_file(d / "broken.csv", std::string(kCsvHeader) + "\nr,mgso,sphere,2,1,1,1,1,1\nr,mgso,sphere,2,1,1,2,5,5\n");
  EXPECT_EQ(run_cli("aggregate --in " + (d / "broken.csv").string() + " --out " + (d / "q.csv").string()), 1);
}

}  // namespace
