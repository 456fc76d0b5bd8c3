#pragma once

// Model guided sampling optimization.
//
// Each iteration fits a GP to the archive points inside the current box
// (scaled to [-1, 1]^D), samples a population from the model's probability of
// improvement, injects the minimum of the model mean, evaluates the population
// and, when sampling runs dry or progress stalls, shrinks the box around the
// best point.

#include "mgso/gp_core.hpp"
#include "mgso/model_fit.hpp"
#include "mgso/optimizers.hpp"
#include "mgso/poi.hpp"
#include "mgso/scaling.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mgso {

using Objective = std::function<double(const Eigen::VectorXd&)>;

enum class SamplerKind { PoiSampling, GreedyPoi };

struct MgsoConfig {
  /// 0 selects max(10, 5 D).
  int population_size = 0;
  /// 0 selects 15 D.
  int restriction_r = 0;
  int budget = 0;
  /// Stop once best - f_opt <= target_fdelta; needs f_opt.
  std::optional<double> target_fdelta;
  std::optional<double> f_opt;
  std::uint64_t seed = 0;
  FitConfig fit;
  SamplerKind sampler = SamplerKind::PoiSampling;
  SamplerOptions sampling;
  int stagnation_iterations = 5;
  double improvement_tol = 1e-10;
  /// Total enlargement of the restriction box per axis (half on each end).
  double restriction_enlargement = 0.10;
  /// Candidate boxes containing [-h, h]^D are not applied.
  double restriction_skip_half_width = 0.8;
  int model_min_evals_per_dim = 200;
  double model_min_tol_x = 1e-6;

  [[nodiscard]] int population(Eigen::Index dim) const {
    return population_size > 0 ? population_size : std::max(10, 5 * static_cast<int>(dim));
  }
  [[nodiscard]] int restriction_count(Eigen::Index dim) const {
    return restriction_r > 0 ? restriction_r : 15 * static_cast<int>(dim);
  }

  void validate(Eigen::Index dim) const {
    if (population(dim) < 2) throw UsageError("population size must be at least 2");
    if (restriction_count(dim) < dim + 1) throw UsageError("restriction_r must be at least D + 1");
    if (budget < population(dim)) throw UsageError("budget must be at least the population size");
    if (target_fdelta && !f_opt) throw UsageError("target_fdelta requires f_opt");
    if (stagnation_iterations < 1) throw UsageError("stagnation_iterations must be positive");
    fit.validate();
  }
};

struct ConvergencePoint {
  int eval_index = 0;
  double f_best = 0.0;
};

struct RestrictionEvent {
  int iteration = 0;
  int eval_count = 0;
  BoxBounds box;
  Eigen::VectorXd best_x;
};

struct MgsoState {
  BoxBounds bounds;
  std::vector<Eigen::VectorXd> archive_x;
  std::vector<double> archive_y;
  ScalingTransform transform;
  Eigen::VectorXd best_x;
  double best_y = std::numeric_limits<double>::infinity();
  int eval_count = 0;
  int iteration = 0;
  std::vector<ConvergencePoint> convergence;
  std::vector<RestrictionEvent> restrictions;

  std::optional<GpHyperParams> hyper_params;
  int stagnant_iterations = 0;
  bool last_batch_exhausted = false;
  /// Minimum of the model mean found in the last step, scaled space.
  std::optional<Eigen::VectorXd> last_model_minimum;

  int fit_failures = 0;
  int degraded_iterations = 0;
  long psd_rejections = 0;

  MgsoState() = default;
  explicit MgsoState(BoxBounds b) : bounds(b), transform(std::move(b)) {}

  void record(const Eigen::VectorXd& x, double y) {
    archive_x.push_back(x);
    archive_y.push_back(y);
    ++eval_count;
    if (y < best_y || eval_count == 1) {
      best_y = y;
      best_x = x;
    }
    convergence.push_back({eval_count, best_y});
  }
};

/// Raised when the objective throws; carries the archive up to the failure.
class ObjectiveFailure : public std::runtime_error {
 public:
  ObjectiveFailure(const std::string& what, MgsoState state)
      : std::runtime_error(what), state_(std::move(state)) {}
  [[nodiscard]] const MgsoState& state() const noexcept { return state_; }

 private:
  MgsoState state_;
};

template <typename Rng>
std::vector<Eigen::VectorXd> initial_sample(const BoxBounds& bounds, int n, Rng& rng) {
  bounds.validate();
  if (n < 1) throw UsageError("initial_sample: N must be at least 1");
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pts.push_back(detail::uniform_in_box(bounds, rng));
  return pts;
}

/// Archive points inside the current box, mapped to [-1, 1]^D.
inline Dataset training_set(const MgsoState& state) {
  const BoxBounds& box = state.transform.box();
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < state.archive_x.size(); ++i) {
    if (box.contains(state.archive_x[i])) inside.push_back(i);
  }
  Dataset data;
  data.points.resize(static_cast<Eigen::Index>(inside.size()), state.bounds.dim());
  data.values.resize(static_cast<Eigen::Index>(inside.size()));
  for (std::size_t k = 0; k < inside.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    data.points.row(row) =
        state.transform.forward(state.archive_x[inside[k]]).cwiseMax(-1.0).cwiseMin(1.0).transpose();
    data.values[row] = state.archive_y[inside[k]];
  }
  return data;
}

/// Candidate box around the best point in original coordinates: bounding box
/// of the r archive points nearest to it (scaled-space Euclidean distance),
/// enlarged and clipped to the current box. Empty when the candidate still
/// covers the skip region or degenerates to zero width.
inline std::optional<BoxBounds> restriction_box(const MgsoState& state, const MgsoConfig& cfg) {
  const Eigen::Index dim = state.bounds.dim();
  const auto r = static_cast<std::size_t>(cfg.restriction_count(dim));
  if (state.archive_x.size() < r || state.archive_x.empty()) return std::nullopt;

  const ScalingTransform& tr = state.transform;
  const Eigen::VectorXd center = tr.forward(state.best_x);
  std::vector<Eigen::VectorXd> scaled;
  std::vector<double> dist;
  scaled.reserve(state.archive_x.size());
  for (const auto& x : state.archive_x) {
    scaled.push_back(tr.forward(x));
    dist.push_back((scaled.back() - center).squaredNorm());
  }
  std::vector<std::size_t> order(scaled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

  Eigen::VectorXd lo = center;
  Eigen::VectorXd hi = center;
  for (std::size_t k = 0; k < r; ++k) {
    lo = lo.cwiseMin(scaled[order[k]]);
    hi = hi.cwiseMax(scaled[order[k]]);
  }
  const Eigen::VectorXd pad = 0.5 * cfg.restriction_enlargement * (hi - lo);
  lo = (lo - pad).cwiseMax(-1.0);
  hi = (hi + pad).cwiseMin(1.0);

  const double h = cfg.restriction_skip_half_width;
  if ((lo.array() <= -h).all() && (hi.array() >= h).all()) return std::nullopt;

  const BoxBounds& cur = tr.box();
  Eigen::VectorXd l = tr.to_original(lo);
  Eigen::VectorXd u = tr.to_original(hi);
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (lo[d] <= -1.0) l[d] = cur.lower[d];
    if (hi[d] >= 1.0) u[d] = cur.upper[d];
    l[d] = std::min(l[d], state.best_x[d]);
    u[d] = std::max(u[d], state.best_x[d]);
  }
  // Boxes narrower than this lose too much precision in the scaled space.
  const Eigen::VectorXd min_width = 1e-9 * state.bounds.width();
  if (!((u - l).array() > min_width.array()).all()) return std::nullopt;
  return BoxBounds(std::move(l), std::move(u));
}

/// Applies a restriction when the last batch ran dry or the best value has
/// stalled for cfg.stagnation_iterations steps. Returns true if the box
/// changed.
inline bool restrict_input_space(MgsoState& state, const MgsoConfig& cfg) {
  const bool triggered =
      state.last_batch_exhausted || state.stagnant_iterations >= cfg.stagnation_iterations;
  if (!triggered) return false;
  auto box = restriction_box(state, cfg);
  if (!box) return false;
  state.restrictions.push_back({state.iteration, state.eval_count, *box, state.best_x});
  state.transform = ScalingTransform(std::move(*box));
  state.stagnant_iterations = 0;
  return true;
}

namespace detail {

struct ObjectiveThrew {
  std::string what;
};

template <typename Rng>
std::vector<Eigen::VectorXd> propose_population(MgsoState& state, const MgsoConfig& cfg, Rng& rng) {
  const Eigen::Index dim = state.bounds.dim();
  const int n = cfg.population(dim);
  const Dataset data = training_set(state);

  std::optional<GpHyperParams> hp;
  try {
    hp = fit_hyperparams(data, cfg.fit, rng, state.hyper_params).params;
  } catch (const FitFailed&) {
    ++state.fit_failures;
    hp = state.hyper_params;
  }
  std::optional<GpPosterior> posterior;
  if (hp) {
    try {
      posterior.emplace(build_posterior_with_jitter(data, *hp));
      state.hyper_params = hp;
    } catch (const NotPositiveDefinite&) {
      ++state.fit_failures;
    }
  }

  state.last_model_minimum.reset();
  if (!posterior) {
    // Degraded mode: no usable model this iteration.
    ++state.degraded_iterations;
    state.last_batch_exhausted = false;
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < n; ++i) pts.push_back(uniform_in_cube(dim, rng));
    return pts;
  }

  const ThresholdSet thresholds = choose_thresholds(data);
  SampleBatch batch = cfg.sampler == SamplerKind::PoiSampling
                          ? sample_poi(*posterior, thresholds, n, rng, cfg.sampling)
                          : greedy_poi(*posterior, thresholds, n, rng, cfg.sampling);
  state.psd_rejections += batch.n_psd_rejections;
  state.last_batch_exhausted = batch.exhausted;
  std::vector<Eigen::VectorXd> pts = std::move(batch.points);

  // Minimum of the model mean, started from the best point.
  const Eigen::VectorXd start = state.transform.forward(state.best_x).cwiseMax(-1.0).cwiseMin(1.0);
  NelderMeadOptions nm;
  nm.max_evals = cfg.model_min_evals_per_dim * static_cast<int>(dim);
  nm.tol_x = cfg.model_min_tol_x;
  nm.tol_f = 0.0;
  const OptResult model_min = nelder_mead(
      [&](const Eigen::VectorXd& z) { return posterior->predict_mean(z); }, start,
      BoxBounds::cube(dim, -1.0, 1.0), nm);
  const Eigen::VectorXd& zmin = model_min.best_point;
  state.last_model_minimum = zmin;

  // Replace the nearest sampled point, or append when the batch is short.
  // The PSD check applies to sampled points only.
  if (static_cast<int>(pts.size()) >= n) {
    std::size_t nearest = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = (pts[i] - zmin).squaredNorm();
      if (d < best_d) {
        best_d = d;
        nearest = i;
      }
    }
    pts[nearest] = zmin;
  } else {
    pts.push_back(zmin);
  }
  return pts;
}

}  // namespace detail

/// One fit-sample-evaluate cycle. The batch is truncated to the remaining
/// budget.
template <typename Rng>
void mgso_step(MgsoState& state, const Objective& objective, const MgsoConfig& cfg, Rng& rng) {
  if (state.archive_x.empty()) throw UsageError("mgso_step: empty archive");
  if (state.eval_count >= cfg.budget) throw UsageError("mgso_step: budget exhausted");

  const std::vector<Eigen::VectorXd> scaled = detail::propose_population(state, cfg, rng);
  const double before = state.best_y;
  const std::size_t remaining = static_cast<std::size_t>(cfg.budget - state.eval_count);
  const std::size_t count = std::min(scaled.size(), remaining);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd x = state.transform.to_original(scaled[i]);
    state.record(x, objective(x));
  }
  if (before - state.best_y > cfg.improvement_tol) {
    state.stagnant_iterations = 0;
  } else {
    ++state.stagnant_iterations;
  }
  ++state.iteration;
  restrict_input_space(state, cfg);
}

struct MgsoResult {
  Eigen::VectorXd best_x;
  double best_y = std::numeric_limits<double>::infinity();
  std::vector<ConvergencePoint> convergence;
  MgsoState state;
};

inline MgsoResult run_mgso(const Objective& objective, const BoxBounds& bounds, const MgsoConfig& cfg) {
  bounds.validate();
  cfg.validate(bounds.dim());
  std::mt19937_64 rng(cfg.seed);
  MgsoState state(bounds);

  auto reached = [&] {
    return cfg.target_fdelta && state.best_y - *cfg.f_opt <= *cfg.target_fdelta;
  };
  // Only exceptions from the objective itself become ObjectiveFailure.
  const Objective guarded = [&objective](const Eigen::VectorXd& x) {
    try {
      return objective(x);
    } catch (const std::exception& e) {
      throw detail::ObjectiveThrew{e.what()};
    }
  };
  try {
    for (const auto& x : initial_sample(bounds, cfg.population(bounds.dim()), rng)) {
      state.record(x, guarded(x));
      if (reached()) break;
    }
    while (state.eval_count < cfg.budget && !reached()) mgso_step(state, guarded, cfg, rng);
  } catch (const detail::ObjectiveThrew& e) {
    throw ObjectiveFailure("objective evaluation failed: " + e.what, state);
  }
  MgsoResult res;
  res.best_x = state.best_x;
  res.best_y = state.best_y;
  res.convergence = state.convergence;
  res.state = std::move(state);
  return res;
}

struct AuditReport {
  std::vector<std::string> violations;
  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

/// Checks the run invariants: non-increasing best-so-far, exact evaluation
/// accounting, evaluated points within the original bounds, and restriction
/// boxes nested inside the bounds and containing the best point of their time.
/// With `expect_full_budget` the run must have used exactly `budget` evals.
inline AuditReport audit_run(const MgsoState& s, const BoxBounds& bounds, int budget,
                             bool expect_full_budget) {
  AuditReport rep;
  auto fail = [&](std::string m) { rep.violations.push_back(std::move(m)); };
  if (s.convergence.size() != s.archive_x.size() || s.archive_x.size() != s.archive_y.size() ||
      static_cast<int>(s.archive_x.size()) != s.eval_count) {
    fail("evaluation accounting mismatch");
  }
  if (s.eval_count > budget) fail("budget exceeded");
  if (expect_full_budget && s.eval_count != budget) fail("budget not used exactly");
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.convergence.size(); ++i) {
    const auto& c = s.convergence[i];
    if (c.eval_index != static_cast<int>(i) + 1) fail("eval index out of sequence");
    if (i > 0 && c.f_best > s.convergence[i - 1].f_best) fail("best-so-far increased");
    if (i < s.archive_y.size()) running = std::min(running, s.archive_y[i]);
    if (c.f_best != running) fail("best-so-far does not match archive minimum");
  }
  for (const auto& x : s.archive_x) {
    if (!bounds.contains(x)) fail("evaluated point outside original bounds");
  }
  const BoxBounds* outer = &bounds;
  for (const auto& ev : s.restrictions) {
    if (!ev.box.contains(ev.best_x)) fail("restriction box excludes best point");
    if (!((ev.box.lower.array() >= outer->lower.array()).all() &&
          (ev.box.upper.array() <= outer->upper.array()).all())) {
      fail("restriction box not nested in the previous box");
    }
    outer = &ev.box;
  }
  if (!s.restrictions.empty() && !s.restrictions.back().box.contains(s.best_x)) {
    fail("final restriction box excludes final best point");
  }
  return rep;
}

}  // namespace mgso
