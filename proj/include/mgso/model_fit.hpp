#pragma once

// Maximum-likelihood fitting of GP hyper-parameters.
//
// The search runs over natural-log parameters
//   [log l (1 or D components), log theta, log sigma]
// clipped to per-parameter boxes. Each restart minimizes the negative log
// likelihood with either the simplex or CMA-ES; the best restart wins, ties
// broken by restart index.

#include "mgso/gp_core.hpp"
#include "mgso/optimizers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace mgso {

class FitFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FitOptimizer { Simplex, BasicCmaEs };

struct LogBounds {
  double low = 0.0;
  double high = 0.0;
};

struct FitConfig {
  int n_restarts = 4;
  /// Each ARD length scale stays within [median / cap, median * cap].
  double ard_ratio_cap = 2.5;
  FitOptimizer optimizer = FitOptimizer::Simplex;
  bool ard = false;
  /// Unset bounds fall back to data-dependent defaults.
  std::optional<LogBounds> log_length_bounds;
  std::optional<LogBounds> log_signal_bounds;
  std::optional<LogBounds> log_noise_bounds;
  /// Objective evaluations per restart; 0 selects 40 * (parameters + 1).
  int evals_per_restart = 0;

  void validate() const {
    if (n_restarts < 1) throw UsageError("n_restarts must be positive");
    if (!(ard_ratio_cap >= 1.0)) throw UsageError("ard_ratio_cap must be >= 1");
    for (const auto& b : {log_length_bounds, log_signal_bounds, log_noise_bounds}) {
      if (b && !(b->low < b->high)) throw UsageError("log bounds require low < high");
    }
    if (evals_per_restart < 0) throw UsageError("evals_per_restart must be non-negative");
  }
};

struct FitResult {
  GpHyperParams params;
  double nll = std::numeric_limits<double>::infinity();
  int best_restart = -1;
  int evaluations = 0;
};

/// Clamps each length scale into [m / ratio, m * ratio] where m is the median
/// component (the lower middle element for even sizes, so the median is
/// always one of the components and is left unchanged).
inline Eigen::VectorXd ard_project(const Eigen::VectorXd& lengths, double ratio = 2.5) {
  if (lengths.size() == 0) return lengths;
  if (!(lengths.array() > 0.0).all()) throw UsageError("ard_project: lengths must be positive");
  if (!(ratio >= 1.0)) throw UsageError("ard_project: ratio must be >= 1");
  std::vector<double> sorted(lengths.data(), lengths.data() + lengths.size());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double median = *mid;
  return lengths.cwiseMax(median / ratio).cwiseMin(median * ratio);
}

namespace detail {

inline double population_variance(const Eigen::VectorXd& y) {
  const double m = y.mean();
  return (y.array() - m).square().mean();
}

struct FitProblem {
  const Dataset& data;
  const FitConfig& cfg;
  Eigen::Index n_lengths;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  FitProblem(const Dataset& d, const FitConfig& c) : data(d), cfg(c) {
    n_lengths = c.ard ? d.dim() : 1;
    double var = population_variance(d.values);
    if (!(var > 0.0) || !std::isfinite(var)) var = 1.0;
    const LogBounds lb = c.log_length_bounds.value_or(LogBounds{std::log(0.01), std::log(10.0)});
    const LogBounds sb =
        c.log_signal_bounds.value_or(LogBounds{std::log(1e-6 * var), std::log(10.0 * var)});
    LogBounds nb = c.log_noise_bounds.value_or(LogBounds{std::log(1e-8), std::log(var)});
    if (!(nb.low < nb.high)) nb.high = nb.low + 1.0;
    lower.resize(n_lengths + 2);
    upper.resize(n_lengths + 2);
    lower.head(n_lengths).setConstant(lb.low);
    upper.head(n_lengths).setConstant(lb.high);
    lower[n_lengths] = sb.low;
    upper[n_lengths] = sb.high;
    lower[n_lengths + 1] = nb.low;
    upper[n_lengths + 1] = nb.high;
  }

  [[nodiscard]] Eigen::Index size() const { return lower.size(); }

  [[nodiscard]] Eigen::VectorXd clip(const Eigen::VectorXd& p) const {
    return p.cwiseMax(lower).cwiseMin(upper);
  }

  [[nodiscard]] GpHyperParams decode(const Eigen::VectorXd& p) const {
    GpHyperParams hp;
    const Eigen::VectorXd lengths = p.head(n_lengths).array().exp().matrix();
    hp.length_scales = cfg.ard ? LengthScales::ard(ard_project(lengths, cfg.ard_ratio_cap))
                               : LengthScales::iso(lengths[0]);
    hp.signal_variance = std::exp(p[n_lengths]);
    hp.noise = std::exp(p[n_lengths + 1]);
    return hp;
  }

  [[nodiscard]] Eigen::VectorXd encode(const GpHyperParams& hp) const {
    Eigen::VectorXd p(size());
    const Eigen::VectorXd lengths = hp.length_scales.lengths();
    for (Eigen::Index i = 0; i < n_lengths; ++i) {
      p[i] = std::log(lengths.size() == 1 ? lengths[0] : lengths[std::min(i, lengths.size() - 1)]);
    }
    p[n_lengths] = std::log(hp.signal_variance);
    p[n_lengths + 1] = std::log(std::max(hp.noise, 1e-300));
    return clip(p);
  }

  /// NLL at the projected, clipped parameters; +inf when C_N is not PD.
  [[nodiscard]] double objective(const Eigen::VectorXd& p) const {
    try {
      return neg_log_likelihood(data, decode(clip(p)));
    } catch (const NotPositiveDefinite&) {
      return std::numeric_limits<double>::infinity();
    }
  }
};

}  // namespace detail

/// Scale-aware starting point: l = 0.5, theta = var(y), sigma = 1e-2 theta.
inline GpHyperParams heuristic_hyperparams(const Dataset& data, bool ard) {
  double var = detail::population_variance(data.values);
  if (!(var > 0.0) || !std::isfinite(var)) var = 1.0;
  GpHyperParams hp;
  hp.signal_variance = var;
  hp.noise = 1e-2 * var;
  hp.length_scales = ard ? LengthScales::ard(Eigen::VectorXd::Constant(data.dim(), 0.5))
                         : LengthScales::iso(0.5);
  return hp;
}

/// Multi-start maximum-likelihood fit. The first restart starts from
/// `warm_start` when given, else from the heuristic init; the remaining ones
/// from uniform points in the log boxes. Throws FitFailed when no restart
/// reaches a finite likelihood.
template <typename Rng>
FitResult fit_hyperparams(const Dataset& data, const FitConfig& cfg, Rng& rng,
                          const std::optional<GpHyperParams>& warm_start = std::nullopt) {
  data.validate();
  cfg.validate();
  const detail::FitProblem problem(data, cfg);
  const Eigen::Index np = problem.size();
  const int budget = cfg.evals_per_restart > 0 ? cfg.evals_per_restart
                                               : 40 * static_cast<int>(np + 1);

  // Draw every start up front so results do not depend on evaluation order.
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(problem.encode(warm_start ? *warm_start : heuristic_hyperparams(data, cfg.ard)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 1; r < cfg.n_restarts; ++r) {
    Eigen::VectorXd p(np);
    for (Eigen::Index i = 0; i < np; ++i) {
      p[i] = problem.lower[i] + unit(rng) * (problem.upper[i] - problem.lower[i]);
    }
    starts.push_back(p);
  }
  std::vector<std::uint64_t> cma_seeds;
  for (int r = 0; r < cfg.n_restarts; ++r) cma_seeds.push_back(rng());

  FitResult best;
  auto consider = [&](const Eigen::VectorXd& p, double value, int restart) {
    if (std::isfinite(value) && value < best.nll) {
      best.nll = value;
      best.params = problem.decode(problem.clip(p));
      best.best_restart = restart;
    }
  };

  // The heuristic point always competes, so the fit is never worse than it.
  {
    const Eigen::VectorXd h = problem.encode(heuristic_hyperparams(data, cfg.ard));
    consider(h, problem.objective(h), -1);
    ++best.evaluations;
  }

  auto objective = [&](const Eigen::VectorXd& p) { return problem.objective(p); };
  const BoxBounds box(problem.lower, problem.upper);
  for (int r = 0; r < cfg.n_restarts; ++r) {
    const Eigen::VectorXd& x0 = starts[static_cast<std::size_t>(r)];
    const double f0 = objective(x0);
    ++best.evaluations;
    consider(x0, f0, r);
    OptResult res;
    if (cfg.optimizer == FitOptimizer::Simplex) {
      if (!std::isfinite(f0)) continue;
      NelderMeadOptions opts;
      opts.max_evals = budget;
      opts.tol_x = 1e-4;
      opts.tol_f = 1e-6;
      opts.initial_step = 0.5;
      res = nelder_mead(objective, x0, box, opts);
    } else {
      std::mt19937_64 cma_rng(cma_seeds[static_cast<std::size_t>(r)]);
      CmaEsOptions opts;
      opts.max_evals = budget;
      opts.tol_x = 1e-4;
      const double sigma0 = 0.25 * (problem.upper - problem.lower).mean();
      res = basic_cma_es(objective, x0, sigma0, box, opts, cma_rng);
    }
    best.evaluations += res.n_evals;
    consider(res.best_point, res.best_value, r);
  }
  if (!std::isfinite(best.nll)) {
    throw FitFailed("no restart produced a finite negative log-likelihood");
  }
  return best;
}

/// Builds the posterior for fitted hyper-parameters. On Cholesky failure the
/// noise is raised to max(sigma, 1e-10 * theta * 2^a), a = 0..6, before
/// giving up with NotPositiveDefinite.
inline GpPosterior build_posterior_with_jitter(const Dataset& data, const GpHyperParams& hp) {
  try {
    return GpPosterior(data, hp, hp.noise);
  } catch (const NotPositiveDefinite&) {
  }
  for (int a = 0; a <= 6; ++a) {
    const double noise = std::max(hp.noise, 1e-10 * hp.signal_variance * std::ldexp(1.0, a));
    try {
      return GpPosterior(data, hp, noise);
    } catch (const NotPositiveDefinite&) {
      if (a == 6) throw;
    }
  }
  throw InternalConsistencyError("unreachable");
}

}  // namespace mgso
