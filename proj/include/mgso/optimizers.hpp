#pragma once

// Derivative-free optimizers: bounded Nelder-Mead simplex, a basic
// (mu/mu_w, lambda) CMA-ES and uniform random search. All of them minimize.

#include "mgso/gp_core.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mgso {

struct BoxBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  BoxBounds() = default;
  BoxBounds(Eigen::VectorXd l, Eigen::VectorXd u) : lower(std::move(l)), upper(std::move(u)) {
    validate();
  }

  static BoxBounds cube(Eigen::Index dim, double lo, double hi) {
    return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) {
      throw UsageError("bounds must be non-empty and of matching dimension");
    }
    if (!lower.allFinite() || !upper.allFinite() || !(lower.array() < upper.array()).all()) {
      throw UsageError("bounds require finite lower < upper in every coordinate");
    }
  }

  template <typename Derived>
  [[nodiscard]] bool contains(const Eigen::MatrixBase<Derived>& x) const {
    return x.size() == dim() && (x.array() >= lower.array()).all() &&
           (x.array() <= upper.array()).all();
  }

  template <typename Derived>
  [[nodiscard]] Eigen::VectorXd project(const Eigen::MatrixBase<Derived>& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }

  [[nodiscard]] Eigen::VectorXd width() const { return upper - lower; }
};

struct OptResult {
  Eigen::VectorXd best_point;
  double best_value = std::numeric_limits<double>::infinity();
  int n_evals = 0;
  bool converged = false;
};

namespace detail {

inline double finite_or_inf(double v) {
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

template <typename Rng>
Eigen::VectorXd uniform_in_box(const BoxBounds& box, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd x(box.dim());
  for (Eigen::Index d = 0; d < box.dim(); ++d) {
    x[d] = box.lower[d] + unit(rng) * (box.upper[d] - box.lower[d]);
  }
  // Guard against round-up at the upper edge.
  return box.project(x);
}

}  // namespace detail

struct NelderMeadOptions {
  int max_evals = 1000;
  double tol_x = 1e-8;
  double tol_f = 1e-10;
  /// Edge length of the initial simplex, per coordinate.
  double initial_step = 0.1;
};

/// Nelder-Mead with reflection 1, expansion 2, contraction 0.5, shrink 0.5.
/// Proposed vertices are projected onto `bounds` when given.
template <typename F>
OptResult nelder_mead(F&& objective, const Eigen::VectorXd& x0,
                      const std::optional<BoxBounds>& bounds = std::nullopt,
                      const NelderMeadOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  if (n == 0) throw UsageError("nelder_mead: empty starting point");
  if (bounds) {
    bounds->validate();
    if (bounds->dim() != n) throw UsageError("nelder_mead: bounds dimension mismatch");
    if (!bounds->contains(x0)) throw UsageError("nelder_mead: x0 outside bounds");
  }
  if (opts.max_evals < 1) throw UsageError("nelder_mead: eval budget must be positive");

  OptResult result;
  auto clip = [&](Eigen::VectorXd x) { return bounds ? bounds->project(x) : x; };
  auto eval = [&](const Eigen::VectorXd& x) {
    const double v = detail::finite_or_inf(objective(x));
    ++result.n_evals;
    if (v < result.best_value || result.n_evals == 1) {
      result.best_value = v;
      result.best_point = x;
    }
    return v;
  };

  const double f0 = objective(x0);
  ++result.n_evals;
  if (!std::isfinite(f0)) throw UsageError("nelder_mead: objective is not finite at x0");
  result.best_value = f0;
  result.best_point = x0;

  std::vector<Eigen::VectorXd> simplex{x0};
  std::vector<double> values{f0};
  for (Eigen::Index i = 0; i < n && result.n_evals < opts.max_evals; ++i) {
    Eigen::VectorXd v = x0;
    v[i] += opts.initial_step;
    if (bounds && v[i] > bounds->upper[i]) v[i] = x0[i] - opts.initial_step;
    v = clip(v);
    if (v[i] == x0[i]) v[i] = bounds ? 0.5 * (bounds->lower[i] + bounds->upper[i]) : x0[i] + 1.0;
    simplex.push_back(v);
    values.push_back(eval(v));
  }
  if (static_cast<Eigen::Index>(simplex.size()) < n + 1) return result;

  std::vector<std::size_t> order(n + 1);
  while (result.n_evals < opts.max_evals) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    {
      std::vector<Eigen::VectorXd> s;
      std::vector<double> f;
      for (auto i : order) {
        s.push_back(simplex[i]);
        f.push_back(values[i]);
      }
      simplex = std::move(s);
      values = std::move(f);
    }

    double diameter = 0.0;
    for (Eigen::Index i = 1; i <= n; ++i) {
      diameter = std::max(diameter, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
    }
    const double spread = values[n] - values[0];
    if (diameter < opts.tol_x && (std::isfinite(spread) && spread < opts.tol_f)) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = clip(centroid + (centroid - simplex[n]));
    const double fr = eval(xr);
    if (fr < values[0]) {
      if (result.n_evals >= opts.max_evals) {
        simplex[n] = xr;
        values[n] = fr;
        break;
      }
      const Eigen::VectorXd xe = clip(centroid + 2.0 * (centroid - simplex[n]));
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[n] = xe;
        values[n] = fe;
      } else {
        simplex[n] = xr;
        values[n] = fr;
      }
      continue;
    }
    if (fr < values[n - 1]) {
      simplex[n] = xr;
      values[n] = fr;
      continue;
    }
    if (result.n_evals >= opts.max_evals) break;
    // Outside contraction when the reflection beat the worst vertex.
    const bool outside = fr < values[n];
    const Eigen::VectorXd xc = outside ? clip(centroid + 0.5 * (xr - centroid))
                                       : clip(centroid + 0.5 * (simplex[n] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : values[n])) {
      simplex[n] = xc;
      values[n] = fc;
      continue;
    }
    for (Eigen::Index i = 1; i <= n && result.n_evals < opts.max_evals; ++i) {
      simplex[i] = clip(simplex[0] + 0.5 * (simplex[i] - simplex[0]));
      values[i] = eval(simplex[i]);
    }
  }
  return result;
}

struct CmaEsOptions {
  int max_evals = 1000;
  /// Offspring per generation; 0 selects 4 + floor(3 ln D).
  int lambda = 0;
  /// Stop once sigma * sqrt(max diag C) drops below this.
  double tol_x = 1e-12;
  /// Stop once a value at or below this is found.
  double stop_value = -std::numeric_limits<double>::infinity();
};

/// Basic weighted-recombination CMA-ES with cumulative step-size adaptation
/// and rank-one plus rank-mu covariance updates. Infeasible offspring are
/// resampled up to 10 times and then projected onto the box.
template <typename F, typename Rng>
OptResult basic_cma_es(F&& objective, const Eigen::VectorXd& x0, double sigma0,
                       const std::optional<BoxBounds>& bounds, const CmaEsOptions& opts, Rng& rng) {
  const Eigen::Index n = x0.size();
  if (n == 0) throw UsageError("basic_cma_es: empty starting point");
  if (!(sigma0 > 0.0)) throw UsageError("basic_cma_es: sigma0 must be positive");
  if (opts.max_evals < 1) throw UsageError("basic_cma_es: eval budget must be positive");
  if (bounds) {
    bounds->validate();
    if (bounds->dim() != n) throw UsageError("basic_cma_es: bounds dimension mismatch");
  }

  const double nd = static_cast<double>(n);
  const int lambda = opts.lambda > 0 ? opts.lambda : 4 + static_cast<int>(std::floor(3.0 * std::log(nd)));
  const int mu = lambda / 2;
  Eigen::VectorXd weights(mu);
  for (int i = 0; i < mu; ++i) weights[i] = std::log(mu + 0.5) - std::log(i + 1.0);
  weights /= weights.sum();
  const double mueff = 1.0 / weights.squaredNorm();

  const double cc = (4.0 + mueff / nd) / (nd + 4.0 + 2.0 * mueff / nd);
  const double cs = (mueff + 2.0) / (nd + mueff + 5.0);
  const double c1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff);
  const double cmu =
      std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nd + 2.0) * (nd + 2.0) + mueff));
  const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (nd + 1.0)) - 1.0) + cs;
  const double chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  Eigen::VectorXd mean = bounds ? bounds->project(x0) : x0;
  double sigma = sigma0;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd scales = Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd inv_sqrt = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd ps = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd pc = Eigen::VectorXd::Zero(n);

  std::normal_distribution<double> normal(0.0, 1.0);
  OptResult result;
  int generation = 0;

  while (result.n_evals < opts.max_evals) {
    std::vector<Eigen::VectorXd> offspring;
    std::vector<double> fitness;
    for (int k = 0; k < lambda && result.n_evals < opts.max_evals; ++k) {
      Eigen::VectorXd x;
      for (int attempt = 0; attempt < 10; ++attempt) {
        Eigen::VectorXd z(n);
        for (Eigen::Index d = 0; d < n; ++d) z[d] = normal(rng);
        x = mean + sigma * (basis * scales.asDiagonal() * z);
        if (!bounds || bounds->contains(x)) break;
      }
      if (bounds) x = bounds->project(x);
      const double f = detail::finite_or_inf(objective(x));
      ++result.n_evals;
      if (f < result.best_value || result.n_evals == 1) {
        result.best_value = f;
        result.best_point = x;
      }
      offspring.push_back(std::move(x));
      fitness.push_back(f);
    }
    if (result.best_value <= opts.stop_value) {
      result.converged = true;
      break;
    }
    // A truncated final generation does not update the distribution.
    if (static_cast<int>(offspring.size()) < lambda) break;

    std::vector<int> order(lambda);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fitness[a] < fitness[b]; });

    const Eigen::VectorXd old_mean = mean;
    mean.setZero();
    for (int i = 0; i < mu; ++i) mean += weights[i] * offspring[order[i]];
    const Eigen::VectorXd step = (mean - old_mean) / sigma;

    ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * (inv_sqrt * step);
    ++generation;
    const double ps_norm = ps.norm();
    const bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * generation)) / chi_n <
                      1.4 + 2.0 / (nd + 1.0);
    pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * step;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < mu; ++i) {
      const Eigen::VectorXd y = (offspring[order[i]] - old_mean) / sigma;
      rank_mu += weights[i] * y * y.transpose();
    }
    cov = (1.0 - c1 - cmu) * cov +
          c1 * (pc * pc.transpose() + (hsig ? 0.0 : cc * (2.0 - cc)) * cov) + cmu * rank_mu;
    cov = 0.5 * (cov + cov.transpose());

    sigma *= std::exp((cs / damps) * (ps_norm / chi_n - 1.0));
    if (!std::isfinite(sigma) || sigma > 1e300) break;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) break;
    basis = eig.eigenvectors();
    scales = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
    inv_sqrt = basis * scales.cwiseInverse().asDiagonal() * basis.transpose();

    if (sigma * scales.maxCoeff() < opts.tol_x) {
      result.converged = true;
      break;
    }
  }
  return result;
}

/// Uniform sampling in `bounds`; exactly `budget` evaluations.
template <typename F, typename Rng>
OptResult random_search(F&& objective, const BoxBounds& bounds, int budget, Rng& rng) {
  bounds.validate();
  if (budget < 1) throw UsageError("random_search: budget must be at least 1");
  OptResult result;
  for (int i = 0; i < budget; ++i) {
    Eigen::VectorXd x = detail::uniform_in_box(bounds, rng);
    const double f = detail::finite_or_inf(objective(x));
    ++result.n_evals;
    if (f < result.best_value || i == 0) {
      result.best_value = f;
      result.best_point = std::move(x);
    }
  }
  result.converged = true;
  return result;
}

}  // namespace mgso
