#pragma once

// Runs every (algorithm, function, D, instance) cell of an experiment and
// writes one CSV row per objective evaluation.

#include "mgso/benchmarks.hpp"
#include "mgso/harness/config.hpp"
#include "mgso/mgso.hpp"
#include "mgso/optimizers.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace mgso::harness {

inline constexpr std::string_view kCsvHeader =
    "run_id,algorithm,function,dim,instance,seed,eval_index,f_best,f_delta";

struct ConvergenceRecord {
  std::string run_id;
  Algorithm algorithm = Algorithm::Mgso;
  FunctionId function = FunctionId::Sphere;
  int dim = 0;
  int instance = 0;
  std::uint64_t seed = 0;
  int eval_index = 0;
  double f_best = 0.0;
  double f_delta = 0.0;
};

/// Shortest decimal form would vary by platform; %.17g round-trips doubles.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_record(std::ostream& out, const ConvergenceRecord& r) {
  out << r.run_id << ',' << algorithm_name(r.algorithm) << ',' << function_name(r.function) << ','
      << r.dim << ',' << r.instance << ',' << r.seed << ',' << r.eval_index << ','
      << format_double(r.f_best) << ',' << format_double(r.f_delta) << '\n';
}

struct Cell {
  Algorithm algorithm;
  FunctionId function;
  int dim;
  int instance;
};

inline std::uint64_t trial_seed(std::uint64_t master_seed, FunctionId f, int dim, int instance) {
  std::uint64_t s = hash_combine(master_seed, static_cast<std::uint64_t>(f));
  s = hash_combine(s, static_cast<std::uint64_t>(dim));
  return hash_combine(s, static_cast<std::uint64_t>(instance));
}

inline std::string run_id(const Cell& c) {
  return std::string(algorithm_name(c.algorithm)) + "-" + std::string(function_name(c.function)) +
         "-d" + std::to_string(c.dim) + "-i" + std::to_string(c.instance);
}

/// Cells in output order: algorithms, then functions, dims and instances.
inline std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (Algorithm a : cfg.algorithms) {
    for (FunctionId f : cfg.functions) {
      for (int d : cfg.dims) {
        for (int id : cfg.instance_ids()) cells.push_back({a, f, d, id});
      }
    }
  }
  return cells;
}

inline MgsoConfig mgso_config_for(const ExperimentConfig& cfg, const Cell& cell, std::uint64_t seed) {
  MgsoConfig m;
  m.population_size = cfg.population_size;
  m.restriction_r = cfg.restriction_r;
  m.budget = cfg.budget_for(cell.dim);
  m.seed = seed;
  m.stagnation_iterations = cfg.stagnation_iterations;
  m.sampling.proposals_per_point = cfg.proposals_per_point;
  m.fit.n_restarts = cfg.fit_restarts;
  m.fit.optimizer = cfg.fit_optimizer;
  m.fit.ard_ratio_cap = cfg.ard_ratio_cap;
  m.fit.ard = cell.algorithm == Algorithm::MgsoArd;
  return m;
}

/// Executes one cell; the records are ordered by evaluation index.
inline std::vector<ConvergenceRecord> run_cell(const ExperimentConfig& cfg, const Cell& cell) {
  const BenchmarkInstance inst = BenchmarkInstance::make(cell.function, cell.dim, cell.instance);
  const std::uint64_t seed = trial_seed(cfg.master_seed, cell.function, cell.dim, cell.instance);
  const int budget = cfg.budget_for(cell.dim);
  const std::string id = run_id(cell);

  std::vector<ConvergenceRecord> out;
  out.reserve(static_cast<std::size_t>(budget));
  auto push = [&](int idx, double best) {
    out.push_back({id, cell.algorithm, cell.function, cell.dim, cell.instance, seed, idx, best,
                   inst.f_delta(best)});
  };

  if (cell.algorithm == Algorithm::Mgso || cell.algorithm == Algorithm::MgsoArd) {
    const auto res = run_mgso([&](const Eigen::VectorXd& x) { return inst.evaluate(x); },
                              inst.bounds(), mgso_config_for(cfg, cell, seed));
    for (const auto& c : res.convergence) push(c.eval_index, c.f_best);
    return out;
  }

  double best = std::numeric_limits<double>::infinity();
  int count = 0;
  auto tracked = [&](const Eigen::VectorXd& x) {
    const double y = inst.evaluate(x);
    best = std::min(best, y);
    push(++count, best);
    return y;
  };
  std::mt19937_64 rng(seed);
  if (cell.algorithm == Algorithm::Random) {
    (void)random_search(tracked, inst.bounds(), budget, rng);
  } else {
    const Eigen::VectorXd x0 = mgso::detail::uniform_in_box(inst.bounds(), rng);
    CmaEsOptions opts;
    opts.max_evals = budget;
    opts.tol_x = 0.0;
    // Restart from a fresh point whenever the strategy stops early.
    while (count < budget) {
      opts.max_evals = budget - count;
      const Eigen::VectorXd start = count == 0 ? x0 : mgso::detail::uniform_in_box(inst.bounds(), rng);
      const auto res = basic_cma_es(tracked, start, cfg.cmaes_sigma0, inst.bounds(), opts, rng);
      if (res.n_evals == 0) break;
    }
  }
  return out;
}

/// Raised when a cell fails mid-run; rows of completed cells have already
/// been written and flushed.
class ExperimentFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentSummary {
  std::size_t cells = 0;
  std::size_t rows = 0;
};

/// Runs all cells on a worker pool and writes their rows in cell order, so
/// the output does not depend on the degree of parallelism.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg, std::ostream& out,
                                        std::ostream* progress = nullptr) {
  const std::vector<Cell> cells = enumerate_cells(cfg);
  unsigned workers = cfg.parallelism > 0 ? static_cast<unsigned>(cfg.parallelism)
                                         : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(cells.size(), 1)));

  std::vector<std::optional<std::vector<ConvergenceRecord>>> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::vector<bool> done(cells.size(), false);
  std::vector<bool> failed(cells.size(), false);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  unsigned active = workers;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size() || abort.load()) {
        {
          std::lock_guard lock(mu);
          --active;
        }
        cv.notify_all();
        return;
      }
      std::optional<std::vector<ConvergenceRecord>> rows;
      std::string err;
      try {
        rows = run_cell(cfg, cells[i]);
      } catch (const std::exception& e) {
        err = e.what();
        abort.store(true);
      }
      {
        std::lock_guard lock(mu);
        failed[i] = !rows.has_value();
        results[i] = std::move(rows);
        errors[i] = std::move(err);
        done[i] = true;
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);

  ExperimentSummary summary;
  out << kCsvHeader << '\n';
  std::string failure;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return done[i] || active == 0; });
    if (!results[i]) {
      // Either this cell failed or the pool stopped because another one did.
      for (std::size_t j = 0; j < cells.size(); ++j) {
        if (done[j] && failed[j]) {
          failure = run_id(cells[j]) + ": " + errors[j];
          break;
        }
      }
      if (failure.empty()) failure = run_id(cells[i]) + ": not run";
      break;
    }
    const auto rows = std::move(*results[i]);
    results[i].reset();
    lock.unlock();
    for (const auto& r : rows) write_record(out, r);
    out.flush();
    summary.rows += rows.size();
    ++summary.cells;
    if (progress) *progress << "[" << (i + 1) << "/" << cells.size() << "] " << run_id(cells[i]) << '\n';
  }
  abort.store(true);
  for (auto& t : pool) t.join();
  out.flush();
  if (!failure.empty()) throw ExperimentFailure("cell " + failure);
  return summary;
}

}  // namespace mgso::harness
