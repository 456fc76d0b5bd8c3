#pragma once

// Exact Gaussian-process regression with squared-exponential kernels.
//
// All points live in the internal scaled space [-1, 1]^D. Length scales are
// stored as inverse squared scales so that the isotropic and the ARD kernel
// share one evaluation path:
//
//   k(x, x') = theta * exp(-0.5 * sum_d lambda_d (x_d - x'_d)^2)
//
// with lambda_d = 1 / l^2 (isotropic) or lambda_d = 1 / l_d^2 (ARD).

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace mgso {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a covariance matrix fails Cholesky factorization. Carries the
/// zero-based index of the first pivot that is non-positive or negligible.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(Eigen::Index pivot)
      : std::runtime_error("covariance matrix is not positive definite (pivot " +
                           std::to_string(pivot) + ")"),
        pivot_(pivot) {}

  [[nodiscard]] Eigen::Index pivot() const noexcept { return pivot_; }

 private:
  Eigen::Index pivot_;
};

class InternalConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LengthScales {
 public:
  enum class Kind { Iso, Ard };

  static LengthScales iso(double length) {
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw UsageError("length scale must be positive and finite");
    }
    return LengthScales(Kind::Iso, Eigen::VectorXd::Constant(1, 1.0 / (length * length)));
  }

  static LengthScales ard(const Eigen::VectorXd& lengths) {
    if (lengths.size() == 0) throw UsageError("ARD length scales must be non-empty");
    for (double l : lengths) {
      if (!(l > 0.0) || !std::isfinite(l)) {
        throw UsageError("length scales must be positive and finite");
      }
    }
    return LengthScales(Kind::Ard, lengths.array().square().inverse().matrix());
  }

  static LengthScales ard_inverse_squared(Eigen::VectorXd inv_sq) {
    if (inv_sq.size() == 0) throw UsageError("ARD length scales must be non-empty");
    for (double v : inv_sq) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw UsageError("inverse squared scales must be positive and finite");
      }
    }
    return LengthScales(Kind::Ard, std::move(inv_sq));
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] bool is_ard() const noexcept { return kind_ == Kind::Ard; }

  /// 1 / l^2 per stored component (size 1 for the isotropic kernel).
  [[nodiscard]] const Eigen::VectorXd& inverse_squared() const noexcept { return inv_sq_; }

  /// Length scales l (size 1 for the isotropic kernel).
  [[nodiscard]] Eigen::VectorXd lengths() const {
    return inv_sq_.array().sqrt().inverse().matrix();
  }

  /// Throws UsageError unless these scales can be applied to points of `dim`.
  void check_dimension(Eigen::Index dim) const {
    if (kind_ == Kind::Ard && inv_sq_.size() != dim) {
      throw UsageError("ARD length-scale dimension " + std::to_string(inv_sq_.size()) +
                       " does not match point dimension " + std::to_string(dim));
    }
  }

  /// Weighted squared distance sum_d lambda_d (a_d - b_d)^2. Dimensions are
  /// assumed to be checked by the caller.
  template <typename A, typename B>
  [[nodiscard]] double scaled_sq_dist(const Eigen::MatrixBase<A>& a,
                                      const Eigen::MatrixBase<B>& b) const {
    if (kind_ == Kind::Iso) return inv_sq_[0] * (a - b).squaredNorm();
    // Linear indexing so row and column vectors mix freely.
    double s = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      const double t = a(d) - b(d);
      s += inv_sq_[d] * t * t;
    }
    return s;
  }

 private:
  LengthScales(Kind kind, Eigen::VectorXd inv_sq) : kind_(kind), inv_sq_(std::move(inv_sq)) {}

  Kind kind_;
  Eigen::VectorXd inv_sq_;
};

struct GpHyperParams {
  double signal_variance = 1.0;
  LengthScales length_scales = LengthScales::iso(1.0);
  double noise = 0.0;

  void validate() const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
      throw UsageError("signal variance must be positive and finite");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
      throw UsageError("noise must be non-negative and finite");
    }
  }

  /// Prior variance of a new observation, theta + sigma.
  [[nodiscard]] double prior_variance() const noexcept { return signal_variance + noise; }
};

/// Training data in scaled space: one point per row of `points`.
struct Dataset {
  Eigen::MatrixXd points;
  Eigen::VectorXd values;

  [[nodiscard]] Eigen::Index size() const noexcept { return points.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return points.cols(); }

  void validate() const {
    if (points.rows() != values.size()) {
      throw UsageError("dataset has " + std::to_string(points.rows()) + " points but " +
                       std::to_string(values.size()) + " values");
    }
    if (points.rows() == 0) throw UsageError("dataset is empty");
    if (!values.allFinite()) throw UsageError("dataset values must be finite");
    constexpr double slack = 1e-12;
    if (!points.allFinite() || points.minCoeff() < -1.0 - slack ||
        points.maxCoeff() > 1.0 + slack) {
      throw UsageError("dataset points must lie in [-1, 1]^D");
    }
  }
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

enum class Centering { SampleMean, None };

template <typename A, typename B>
double kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2,
              const GpHyperParams& hp) {
  if (x.size() != x2.size()) {
    throw UsageError("kernel arguments have different dimensions");
  }
  hp.length_scales.check_dimension(x.size());
  return hp.signal_variance * std::exp(-0.5 * hp.length_scales.scaled_sq_dist(x, x2));
}

namespace detail {

/// C_N = K_N + noise * I, lower triangle and diagonal filled.
inline Eigen::MatrixXd covariance_matrix(const Eigen::MatrixXd& points, const GpHyperParams& hp,
                                         double noise) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd c(n, n);
  const double theta = hp.signal_variance;
  for (Eigen::Index j = 0; j < n; ++j) {
    c(j, j) = theta + noise;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v =
          theta * std::exp(-0.5 * hp.length_scales.scaled_sq_dist(points.row(i), points.row(j)));
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

/// Smallest admissible squared Cholesky pivot relative to the largest diagonal
/// entry. Below this the factor is numerically singular.
inline constexpr double kMinRelativePivot = 1e-12;

/// Index of the first pivot at which an unblocked Cholesky of `a` breaks down.
inline Eigen::Index failing_pivot(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  const double floor = n > 0 ? kMinRelativePivot * a.diagonal().maxCoeff() : 0.0;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > floor) || !std::isfinite(d)) return j;
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return n > 0 ? n - 1 : 0;
}

/// Cholesky factor of `c`, or throws NotPositiveDefinite.
inline Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& c) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  Eigen::MatrixXd l;
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    l = llt.matrixL();
    const auto diag = l.diagonal();
    ok = diag.allFinite() && diag.minCoeff() > 0.0 &&
         diag.array().square().minCoeff() > kMinRelativePivot * c.diagonal().maxCoeff();
  }
  if (!ok) throw NotPositiveDefinite(failing_pivot(c));
  return l;
}

inline double centering_offset(const Eigen::VectorXd& y, Centering centering) {
  return centering == Centering::SampleMean ? y.mean() : 0.0;
}

}  // namespace detail

/// Fitted GP model. Immutable after construction.
class GpPosterior {
 public:
  /// Builds C_N = K_N + noise * I with an explicit noise level. The noise may
  /// differ from hp.noise when a jitter was applied.
  GpPosterior(Dataset dataset, GpHyperParams hp, double effective_noise,
              Centering centering = Centering::SampleMean)
      : dataset_(std::move(dataset)), hp_(std::move(hp)), noise_(effective_noise) {
    dataset_.validate();
    hp_.validate();
    hp_.length_scales.check_dimension(dataset_.dim());
    if (!(noise_ >= 0.0) || !std::isfinite(noise_)) throw UsageError("invalid noise level");
    y_mean_ = detail::centering_offset(dataset_.values, centering);
    chol_ = detail::cholesky_or_throw(detail::covariance_matrix(dataset_.points, hp_, noise_));
    const Eigen::VectorXd centered = dataset_.values.array() - y_mean_;
    alpha_ = chol_.triangularView<Eigen::Lower>().solve(centered);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
  }

  [[nodiscard]] const Dataset& dataset() const noexcept { return dataset_; }
  [[nodiscard]] const GpHyperParams& hyper_params() const noexcept { return hp_; }
  [[nodiscard]] const Eigen::MatrixXd& cholesky() const noexcept { return chol_; }
  [[nodiscard]] const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
  [[nodiscard]] double y_mean() const noexcept { return y_mean_; }
  [[nodiscard]] double noise() const noexcept { return noise_; }
  [[nodiscard]] double prior_variance() const noexcept { return hp_.signal_variance + noise_; }
  [[nodiscard]] Eigen::Index dim() const noexcept { return dataset_.dim(); }

  template <typename Derived>
  [[nodiscard]] Eigen::VectorXd cross_covariance(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != dim()) throw UsageError("query dimension does not match the model");
    const Eigen::Index n = dataset_.size();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      k[i] = hp_.signal_variance *
             std::exp(-0.5 * hp_.length_scales.scaled_sq_dist(dataset_.points.row(i).transpose(), x));
    }
    return k;
  }

  template <typename Derived>
  [[nodiscard]] double predict_mean(const Eigen::MatrixBase<Derived>& x) const {
    return cross_covariance(x).dot(alpha_) + y_mean_;
  }

  template <typename Derived>
  [[nodiscard]] Prediction predict(const Eigen::MatrixBase<Derived>& x) const {
    const Eigen::VectorXd k = cross_covariance(x);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
    const double kappa = prior_variance();
    double var = kappa - v.squaredNorm();
    if (var < 0.0) {
      // Round-off scales with the prior variance, so the slack does too.
      if (var < -1e-9 * std::max(1.0, kappa)) {
        throw InternalConsistencyError("predictive variance " + std::to_string(var) +
                                       " is negative beyond round-off");
      }
      var = 0.0;
    }
    return {k.dot(alpha_) + y_mean_, var};
  }

 private:
  Dataset dataset_;
  GpHyperParams hp_;
  double noise_;
  double y_mean_ = 0.0;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
};

inline GpPosterior build_posterior(Dataset dataset, GpHyperParams hp,
                                   Centering centering = Centering::SampleMean) {
  const double noise = hp.noise;
  return GpPosterior(std::move(dataset), std::move(hp), noise, centering);
}

template <typename Derived>
Prediction predict(const GpPosterior& posterior, const Eigen::MatrixBase<Derived>& x) {
  return posterior.predict(x);
}

/// 0.5 y^T C^-1 y + 0.5 log det C + N/2 log(2 pi), from the Cholesky factor.
/// Throws NotPositiveDefinite when C_N cannot be factorized.
inline double neg_log_likelihood(const Dataset& dataset, const GpHyperParams& hp,
                                 Centering centering = Centering::SampleMean) {
  dataset.validate();
  hp.validate();
  hp.length_scales.check_dimension(dataset.dim());
  const Eigen::MatrixXd l =
      detail::cholesky_or_throw(detail::covariance_matrix(dataset.points, hp, hp.noise));
  const Eigen::VectorXd y =
      dataset.values.array() - detail::centering_offset(dataset.values, centering);
  const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().solve(y);
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double n = static_cast<double>(dataset.size());
  return 0.5 * w.squaredNorm() + 0.5 * log_det + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

/// Incrementally grown Cholesky factor of a training covariance, used to
/// reject candidates that would make the next covariance close to indefinite.
/// The admission test is the pivot of the rank-one extension:
///   pivot(x) = kappa - |L^-1 k(x)|^2 > epsilon * kappa.
class PsdGuard {
 public:
  PsdGuard(const GpPosterior& posterior, double epsilon)
      : hp_(posterior.hyper_params()),
        kappa_(posterior.prior_variance()),
        epsilon_(epsilon),
        n_(posterior.dataset().size()) {
    const Eigen::Index cap = n_ + 16;
    points_.resize(cap, posterior.dim());
    points_.topRows(n_) = posterior.dataset().points;
    chol_ = Eigen::MatrixXd::Zero(cap, cap);
    chol_.topLeftCorner(n_, n_) = posterior.cholesky();
  }

  [[nodiscard]] Eigen::Index size() const noexcept { return n_; }

  template <typename Derived>
  [[nodiscard]] double pivot(const Eigen::MatrixBase<Derived>& x) const {
    return kappa_ - solve_cross(x).squaredNorm();
  }

  template <typename Derived>
  [[nodiscard]] bool admits(const Eigen::MatrixBase<Derived>& x) const {
    return pivot(x) > epsilon_ * kappa_;
  }

  /// Appends `x` to the factored set. Returns false (and leaves the guard
  /// unchanged) when `x` is not admissible.
  template <typename Derived>
  bool try_append(const Eigen::MatrixBase<Derived>& x) {
    const Eigen::VectorXd v = solve_cross(x);
    const double p = kappa_ - v.squaredNorm();
    if (!(p > epsilon_ * kappa_)) return false;
    if (n_ == chol_.rows()) grow();
    points_.row(n_) = x.transpose();
    chol_.row(n_).head(n_) = v.transpose();
    chol_(n_, n_) = std::sqrt(p);
    ++n_;
    return true;
  }

 private:
  template <typename Derived>
  Eigen::VectorXd solve_cross(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != points_.cols()) throw UsageError("query dimension does not match the model");
    Eigen::VectorXd k(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      k[i] = hp_.signal_variance *
             std::exp(-0.5 * hp_.length_scales.scaled_sq_dist(points_.row(i).transpose(), x));
    }
    if (n_ > 0) chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(k);
    return k;
  }

  void grow() {
    const Eigen::Index cap = 2 * chol_.rows() + 1;
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(cap, cap);
    chol.topLeftCorner(n_, n_) = chol_.topLeftCorner(n_, n_);
    chol_ = std::move(chol);
    points_.conservativeResize(cap, Eigen::NoChange);
  }

  GpHyperParams hp_;
  double kappa_;
  double epsilon_;
  Eigen::Index n_;
  Eigen::MatrixXd points_;
  Eigen::MatrixXd chol_;
};

inline constexpr double kDefaultPsdEpsilon = 1e-8;

/// True iff appending `x` to the training set keeps the covariance safely
/// positive definite. Does not modify the posterior.
template <typename Derived>
bool psd_check_augmented(const GpPosterior& posterior, const Eigen::MatrixBase<Derived>& x,
                         double epsilon = kDefaultPsdEpsilon) {
  return PsdGuard(posterior, epsilon).admits(x);
}

}  // namespace mgso
