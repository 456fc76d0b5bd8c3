// End-to-end acceptance checks. Prints one line per criterion and exits
// non-zero if any criterion fails.

#include "mgso/benchmarks.hpp"
#include "mgso/harness/experiment.hpp"
#include "mgso/harness/quantiles.hpp"
#include "mgso/mgso.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using Clock = std::chrono::steady_clock;
using Eigen::VectorXd;

enum class Verdict { Pass, Fail, Review };

struct Outcome {
  int criterion;
  Verdict verdict;
  std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int criterion, Verdict v, const std::string& detail) {
  const char* tag = v == Verdict::Pass ? "PASS" : v == Verdict::Fail ? "FAIL" : "REVIEW";
  std::cout << tag << " criterion " << criterion << ": " << detail << std::endl;
  g_outcomes.push_back({criterion, v, detail});
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double median(std::vector<double> v) { return mgso::harness::quartiles(std::move(v)).median; }

// ---- GP helpers -------------------------------------------------------------

mgso::Dataset random_dataset(int n, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 2.0);
  mgso::Dataset data;
  data.points.resize(n, dim);
  data.values.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) data.points(i, d) = u(rng);
    data.values[i] = 3.0 + g(rng);
  }
  return data;
}

oracle::GpOracle make_oracle(const mgso::Dataset& data, const mgso::GpHyperParams& hp) {
  oracle::GpOracle o;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    oracle::Vector row;
    for (Eigen::Index d = 0; d < data.dim(); ++d) row.push_back(data.points(i, d));
    o.x.push_back(std::move(row));
    o.y.push_back(data.values[i]);
  }
  o.theta = hp.signal_variance;
  const auto& w = hp.length_scales.inverse_squared();
  o.inv_sq.assign(w.data(), w.data() + w.size());
  o.noise = hp.noise;
  return o;
}

void oracle_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> nd(1, 20), dd(1, 5);
  std::uniform_real_distribution<double> ell(0.3, 1.5), theta(0.5, 3.0), noise(1e-3, 1e-1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int instances = 60;
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const int n = nd(rng), dim = dd(rng);
    const auto data = random_dataset(n, dim, rng);
    mgso::GpHyperParams hp;
    hp.signal_variance = theta(rng);
    hp.noise = noise(rng);
    if (k % 2) {
      VectorXd l(dim);
      for (int d = 0; d < dim; ++d) l[d] = ell(rng);
      hp.length_scales = mgso::LengthScales::ard(l);
    } else {
      hp.length_scales = mgso::LengthScales::iso(ell(rng));
    }
    const auto post = mgso::build_posterior(data, hp);
    const auto o = make_oracle(data, hp);
    worst = std::max(worst, std::abs(mgso::neg_log_likelihood(data, hp) - o.nll()));
    for (int q = 0; q < 5; ++q) {
      VectorXd x(dim);
      for (int d = 0; d < dim; ++d) x[d] = u(rng);
      const auto p = post.predict(x);
      const auto [m, v] = o.predict(oracle::Vector(x.data(), x.data() + x.size()));
      worst = std::max({worst, std::abs(p.mean - m), std::abs(p.variance - v)});
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-8 && secs < 10.0;
  report(1, ok ? Verdict::Pass : Verdict::Fail,
         std::to_string(instances) + " instances, max abs error " + num(worst) + ", " + num(secs) + " s");
}

// Points at least `gap` apart. Closer pairs with unrelated values make the
// noise-free kernel matrix singular to working precision.
mgso::Dataset separated_dataset(int n, int dim, double gap, std::mt19937_64& rng) {
  for (;;) {
    const auto data = random_dataset(n, dim, rng);
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      for (int j = 0; j < i && ok; ++j) ok = (data.points.row(i) - data.points.row(j)).norm() >= gap;
    }
    if (ok) return data;
  }
}

void interpolation() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto data = separated_dataset(8 + k % 5, 1 + k % 3, 0.05, rng);
    mgso::GpHyperParams hp;
    hp.signal_variance = 2.0;
    hp.noise = 0.0;
    hp.length_scales = mgso::LengthScales::iso(0.3);
    const auto post = mgso::build_posterior(data, hp);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      worst = std::max(worst, std::abs(post.predict(data.points.row(i).transpose()).mean - data.values[i]));
    }
  }
  report(2, worst <= 1e-6 ? Verdict::Pass : Verdict::Fail, "20 datasets, max error " + num(worst));
}

void sampler_fidelity() {
  const auto t0 = Clock::now();
  const auto post = fixture::fixed_posterior_1d();
  const double t = mgso::choose_thresholds(post.dataset()).primary;
  auto density = [&](double x) { return mgso::poi(post, VectorXd::Constant(1, x), t); };
  int passed = 0;
  std::string stats;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto s = fixture::draw_poi_samples(post, 10000, 10, seed);
    const double stat = oracle::chi_square(s, density, -1.0, 1.0, 20);
    if (stat < oracle::kChiSquare19At01) ++passed;
    stats += (stats.empty() ? "" : " ") + num(stat);
  }
  const double secs = seconds_since(t0);
  report(3, passed >= 4 && secs < 30.0 ? Verdict::Pass : Verdict::Fail,
         std::to_string(passed) + "/5 seeds below " + num(oracle::kChiSquare19At01) + " (" + stats + "), " +
             num(secs) + " s");
}

// ---- optimization runs ---------------------------------------------------

const std::vector<int> kInstances = mgso::harness::default_instances(15);
int g_audited = 0;
std::vector<std::string> g_violations;

double run_and_audit(const std::string& label, const mgso::Objective& f, const mgso::BoxBounds& bounds,
                     mgso::MgsoConfig cfg, double f_opt) {
  const auto res = mgso::run_mgso(f, bounds, cfg);
  const auto audit = mgso::audit_run(res.state, bounds, cfg.budget, true);
  ++g_audited;
  for (const auto& v : audit.violations) g_violations.push_back(label + ": " + v);
  return std::max(res.best_y - f_opt, 0.0);
}

std::uint64_t seed_for(mgso::FunctionId f, int id) {
  return mgso::harness::trial_seed(1, f, 2, id);
}

std::vector<double> mgso_trials(mgso::FunctionId fid, int budget, mgso::SamplerKind sampler) {
  std::vector<double> out;
  for (int id : kInstances) {
    const auto inst = mgso::BenchmarkInstance::make(fid, 2, id);
    mgso::MgsoConfig cfg;
    cfg.budget = budget;
    cfg.seed = seed_for(fid, id);
    cfg.sampler = sampler;
    const std::string label = std::string(mgso::function_name(fid)) + " i" + std::to_string(id);
    out.push_back(run_and_audit(label, [&](const VectorXd& x) { return inst.evaluate(x); }, inst.bounds(),
                                cfg, inst.f_opt()));
  }
  return out;
}

std::vector<double> random_trials(mgso::FunctionId fid, int budget) {
  std::vector<double> out;
  for (int id : kInstances) {
    const auto inst = mgso::BenchmarkInstance::make(fid, 2, id);
    std::mt19937_64 rng(seed_for(fid, id));
    const auto r = mgso::random_search([&](const VectorXd& x) { return inst.evaluate(x); }, inst.bounds(),
                                       budget, rng);
    out.push_back(inst.f_delta(r.best_value));
  }
  return out;
}

void escape_property() {
  const auto t0 = Clock::now();
  const auto sampled = mgso_trials(mgso::FunctionId::Rastrigin, 500, mgso::SamplerKind::PoiSampling);
  const auto greedy = mgso_trials(mgso::FunctionId::Rastrigin, 500, mgso::SamplerKind::GreedyPoi);
  const double ms = median(sampled), mg = median(greedy);
  // Every non-global Rastrigin basin is at least ~0.99 above the optimum.
  auto stuck = [](const std::vector<double>& v) {
    return std::to_string(std::count_if(v.begin(), v.end(), [](double d) { return d > 0.5; }));
  };
  const std::string detail = "median f_delta sampling " + num(ms) + " vs greedy " + num(mg) +
                             ", runs in a local basin " + stuck(sampled) + "/15 vs " + stuck(greedy) + "/15, " +
                             num(seconds_since(t0)) + " s";
  if (ms * 5.0 <= mg) {
    report(4, Verdict::Pass, detail);
  } else if (ms < mg) {
    report(4, Verdict::Review, detail + " (ordering holds, 5x margin missed)");
  } else {
    report(4, Verdict::Fail, detail);
  }
}

void desk_scale() {
  const auto t0 = Clock::now();
  const double sphere = median(mgso_trials(mgso::FunctionId::Sphere, 500, mgso::SamplerKind::PoiSampling));
  const double rosen = median(mgso_trials(mgso::FunctionId::Rosenbrock, 500, mgso::SamplerKind::PoiSampling));
  const double rs_sphere = median(random_trials(mgso::FunctionId::Sphere, 500));
  const double rs_rosen = median(random_trials(mgso::FunctionId::Rosenbrock, 500));
  const double secs = seconds_since(t0);
  const bool ok = sphere < 1e-2 && rosen < 1.0 && sphere * 10.0 <= rs_sphere && rosen * 10.0 <= rs_rosen &&
                  secs < 1800.0;
  report(5, ok ? Verdict::Pass : Verdict::Fail,
         "sphere " + num(sphere) + " (random " + num(rs_sphere) + "), rosenbrock " + num(rosen) + " (random " +
             num(rs_rosen) + "), " + num(secs) + " s");
}

void ard_effect() {
  const auto t0 = Clock::now();
  const auto bounds = mgso::BoxBounds::cube(2, -5.0, 5.0);
  auto f = [](const VectorXd& x) { return x[0] * x[0] + 100.0 * x[1] * x[1]; };
  std::vector<double> iso, ard;
  for (int id : kInstances) {
    mgso::MgsoConfig cfg;
    cfg.budget = 300;
    cfg.seed = mgso::hash_combine(0x717561640ULL, static_cast<std::uint64_t>(id));
    const std::string label = "quadratic i" + std::to_string(id);
    iso.push_back(run_and_audit(label + " iso", f, bounds, cfg, 0.0));
    cfg.fit.ard = true;
    ard.push_back(run_and_audit(label + " ard", f, bounds, cfg, 0.0));
  }
  const double mi = median(iso), ma = median(ard);
  report(6, ma <= mi ? Verdict::Pass : Verdict::Fail,
         "median f_delta ard " + num(ma) + " vs iso " + num(mi) + ", " + num(seconds_since(t0)) + " s");
}

void audit_summary() {
  std::string detail = std::to_string(g_audited) + " runs audited, " + std::to_string(g_violations.size()) +
                       " violations";
  if (!g_violations.empty()) detail += " (first: " + g_violations.front() + ")";
  report(7, g_violations.empty() && g_audited > 0 ? Verdict::Pass : Verdict::Fail, detail);
}

// ---- harness ----------------------------------------------------------------

mgso::harness::RunTrace single_value_run(int k, double v) {
  mgso::harness::RunTrace r;
  r.run_id = "fixture-" + std::to_string(k);
  r.algorithm = "fixture";
  r.function = "sphere";
  r.dim = 1;
  r.eval_index = {1};
  r.f_best = {v};
  r.f_delta = {v};
  return r;
}

void quartile_fixtures() {
  auto check = [](const std::vector<double>& values, double q1, double med, double q3) {
    std::vector<mgso::harness::RunTrace> runs;
    for (std::size_t k = 0; k < values.size(); ++k) runs.push_back(single_value_run(static_cast<int>(k), values[k]));
    const auto rows = mgso::harness::aggregate_quartiles(runs, {1});
    return rows.size() == 1 && rows[0].q1 == q1 && rows[0].median == med && rows[0].q3 == q3 &&
           rows[0].n_trials == static_cast<int>(values.size());
  };
  const bool five = check({3, 1, 5, 2, 4}, 2.0, 3.0, 4.0);
  const bool four = check({4, 2, 1, 3}, 1.75, 2.5, 3.25);
  report(8, five && four ? Verdict::Pass : Verdict::Fail,
         std::string("{1..5} ") + (five ? "exact" : "wrong") + ", {1..4} " + (four ? "exact" : "wrong"));
}

void determinism() {
  using namespace mgso::harness;
  auto full = parse_config_string(
      "functions = rastrigin, rosenbrock\ndims = 2\nbudget = 60\ninstances = 1, 31\n"
      "algorithms = mgso, mgso_ard, random, cmaes\n");
  full.parallelism = 2;
  std::ostringstream a;
  run_experiment(full, a);
  int matched = 0, cells = 0;
  for (const auto& cell : enumerate_cells(full)) {
    ++cells;
    ExperimentConfig one = full;
    one.algorithms = {cell.algorithm};
    one.functions = {cell.function};
    one.instances = {cell.instance};
    one.trials = 1;
    one.parallelism = 1;
    std::ostringstream b;
    run_experiment(one, b);
    const std::string seg = b.str().substr(b.str().find('\n') + 1);
    if (!seg.empty() && a.str().find(seg) != std::string::npos) ++matched;
  }
  report(9, matched == cells ? Verdict::Pass : Verdict::Fail,
         std::to_string(matched) + "/" + std::to_string(cells) + " cells byte-identical when rerun alone");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  oracle_suite();
  interpolation();
  sampler_fidelity();
  escape_property();
  desk_scale();
  ard_effect();
  audit_summary();
  quartile_fixtures();
  determinism();
  std::sort(g_outcomes.begin(), g_outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.criterion < b.criterion; });
  int failed = 0;
  for (const auto& o : g_outcomes) failed += o.verdict == Verdict::Fail;
  std::cout << "total " << num(seconds_since(t0)) << " s, " << failed << " failed" << std::endl;
  return failed == 0 ? 0 : 1;
}
