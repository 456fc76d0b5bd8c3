#pragma once

// Probability of improvement and the population samplers built on it.

#include "mgso/gp_core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace mgso {

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Phi((T - mean) / sd); a step function at T when the variance is zero.
inline double poi(const Prediction& p, double threshold) {
  if (p.variance <= 0.0) return p.mean <= threshold ? 1.0 : 0.0;
  return standard_normal_cdf((threshold - p.mean) / std::sqrt(p.variance));
}

template <typename Derived>
double poi(const GpPosterior& posterior, const Eigen::MatrixBase<Derived>& x, double threshold) {
  return poi(posterior.predict(x), threshold);
}

/// Targets for the sampler, from least to most ambitious.
struct ThresholdSet {
  double primary = 0.0;
  double second = 0.0;
  double third = 0.0;

  [[nodiscard]] std::array<double, 3> values() const { return {primary, second, third}; }
};

/// T1 = y_min, T2 = y_min - 0.05 R, T3 = y_min - 0.2 R with R the value range
/// (or max(|y_min|, 1) when all values coincide).
inline ThresholdSet choose_thresholds(const Eigen::VectorXd& values) {
  if (values.size() == 0) throw UsageError("choose_thresholds: no values");
  const double lo = values.minCoeff();
  double range = values.maxCoeff() - lo;
  if (range == 0.0) range = std::max(std::abs(lo), 1.0);
  return {lo, lo - 0.05 * range, lo - 0.2 * range};
}

inline ThresholdSet choose_thresholds(const Dataset& data) { return choose_thresholds(data.values); }

struct SampleBatch {
  std::vector<Eigen::VectorXd> points;
  double threshold_used = 0.0;
  /// Totals over every threshold that was tried.
  long n_proposals = 0;
  long n_psd_rejections = 0;
  bool exhausted = false;
};

struct SamplerOptions {
  /// Proposal cap per threshold is proposals_per_point * N.
  int proposals_per_point = 2000;
  double psd_epsilon = kDefaultPsdEpsilon;
};

namespace detail {

template <typename Rng>
Eigen::VectorXd uniform_in_cube(Eigen::Index dim, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd x(dim);
  for (Eigen::Index d = 0; d < dim; ++d) x[d] = u(rng);
  return x;
}

template <typename Rng>
SampleBatch rejection_sample(const GpPosterior& posterior, double threshold, int n, Rng& rng,
                             const SamplerOptions& opts) {
  SampleBatch batch;
  batch.threshold_used = threshold;
  PsdGuard guard(posterior, opts.psd_epsilon);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long cap = static_cast<long>(opts.proposals_per_point) * n;
  while (batch.n_proposals < cap && static_cast<int>(batch.points.size()) < n) {
    ++batch.n_proposals;
    Eigen::VectorXd x = uniform_in_cube(posterior.dim(), rng);
    const double u = unit(rng);
    if (u >= poi(posterior, x, threshold)) continue;
    if (!guard.try_append(x)) {
      ++batch.n_psd_rejections;
      continue;
    }
    batch.points.push_back(std::move(x));
  }
  batch.exhausted = static_cast<int>(batch.points.size()) < n;
  return batch;
}

}  // namespace detail

/// Rejection sampling of the PoI pseudo-density over [-1, 1]^D with a uniform
/// proposal and unit envelope. Accepted points must keep the covariance of the
/// training set plus earlier accepted points positive definite. T1 is tried
/// first; if it cannot fill N points, T2 and T3 are tried as well and the
/// largest batch is returned (ties go to the less ambitious threshold).
template <typename Rng>
SampleBatch sample_poi(const GpPosterior& posterior, const ThresholdSet& thresholds, int n,
                       Rng& rng, const SamplerOptions& opts = {}) {
  if (n < 1) throw UsageError("sample_poi: N must be at least 1");
  SampleBatch best = detail::rejection_sample(posterior, thresholds.primary, n, rng, opts);
  if (!best.exhausted) return best;
  long proposals = best.n_proposals;
  long rejections = best.n_psd_rejections;
  for (double t : {thresholds.second, thresholds.third}) {
    SampleBatch b = detail::rejection_sample(posterior, t, n, rng, opts);
    proposals += b.n_proposals;
    rejections += b.n_psd_rejections;
    if (b.points.size() > best.points.size()) best = std::move(b);
  }
  best.n_proposals = proposals;
  best.n_psd_rejections = rejections;
  return best;
}

/// Greedy counterpart of sample_poi: draws the same number of uniform
/// proposals for T1 and keeps the N with the highest PoI that pass the PSD
/// check, instead of sampling. Used as an ablation baseline.
template <typename Rng>
SampleBatch greedy_poi(const GpPosterior& posterior, const ThresholdSet& thresholds, int n,
                       Rng& rng, const SamplerOptions& opts = {}) {
  if (n < 1) throw UsageError("greedy_poi: N must be at least 1");
  const long count = static_cast<long>(opts.proposals_per_point) * n;
  std::vector<Eigen::VectorXd> proposals;
  std::vector<double> scores;
  proposals.reserve(static_cast<std::size_t>(count));
  scores.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    proposals.push_back(detail::uniform_in_cube(posterior.dim(), rng));
    scores.push_back(poi(posterior, proposals.back(), thresholds.primary));
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  SampleBatch batch;
  batch.threshold_used = thresholds.primary;
  batch.n_proposals = count;
  PsdGuard guard(posterior, opts.psd_epsilon);
  for (std::size_t i : order) {
    if (static_cast<int>(batch.points.size()) >= n) break;
    if (!(scores[i] > 0.0)) break;
    if (!guard.try_append(proposals[i])) {
      ++batch.n_psd_rejections;
      continue;
    }
    batch.points.push_back(proposals[i]);
  }
  batch.exhausted = static_cast<int>(batch.points.size()) < n;
  return batch;
}

}  // namespace mgso
