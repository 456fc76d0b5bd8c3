#pragma once

// Sphere, Rosenbrock and Rastrigin test functions with a simplified instance
// model: every instance shifts the optimum to x_opt in [-4, 4]^D and offsets
// the optimal value by f_opt in [-100, 100]. Search box is [-5, 5]^D.

#include "mgso/gp_core.hpp"
#include "mgso/optimizers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace mgso {

enum class FunctionId { Sphere, Rosenbrock, Rastrigin };

inline std::string_view function_name(FunctionId f) {
  switch (f) {
    case FunctionId::Sphere: return "sphere";
    case FunctionId::Rosenbrock: return "rosenbrock";
    case FunctionId::Rastrigin: return "rastrigin";
  }
  return "unknown";
}

inline std::optional<FunctionId> parse_function(std::string_view name) {
  if (name == "sphere") return FunctionId::Sphere;
  if (name == "rosenbrock") return FunctionId::Rosenbrock;
  if (name == "rastrigin") return FunctionId::Rastrigin;
  return std::nullopt;
}

/// splitmix64 finalizer; used to derive independent seeds from ids.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value));
}

/// Unshifted base function with its optimum at z = 0 (Rosenbrock: z = 1).
template <typename Derived>
double base_function(FunctionId f, const Eigen::MatrixBase<Derived>& z) {
  switch (f) {
    case FunctionId::Sphere:
      return z.squaredNorm();
    case FunctionId::Rosenbrock: {
      double s = 0.0;
      for (Eigen::Index i = 0; i + 1 < z.size(); ++i) {
        const double a = z[i + 1] - z[i] * z[i];
        const double b = 1.0 - z[i];
        s += 100.0 * a * a + b * b;
      }
      return s;
    }
    case FunctionId::Rastrigin: {
      double s = 10.0 * static_cast<double>(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        s += z[i] * z[i] - 10.0 * std::cos(2.0 * std::numbers::pi * z[i]);
      }
      return s;
    }
  }
  return 0.0;
}

class BenchmarkInstance {
 public:
  BenchmarkInstance(FunctionId f, Eigen::VectorXd shift, double f_opt, int instance_id = 0)
      : function_(f), shift_(std::move(shift)), f_opt_(f_opt), instance_id_(instance_id) {
    if (shift_.size() == 0) throw UsageError("benchmark dimension must be positive");
  }

  /// Deterministic instance for (function, D, instance id).
  static BenchmarkInstance make(FunctionId f, int dim, int instance_id) {
    if (dim < 1) throw UsageError("benchmark dimension must be positive");
    std::uint64_t seed = hash_combine(0x6d67736fULL, static_cast<std::uint64_t>(f));
    seed = hash_combine(seed, static_cast<std::uint64_t>(dim));
    seed = hash_combine(seed, static_cast<std::uint64_t>(instance_id));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> shift(-4.0, 4.0);
    std::uniform_real_distribution<double> offset(-100.0, 100.0);
    Eigen::VectorXd s(dim);
    for (int d = 0; d < dim; ++d) s[d] = shift(rng);
    const double fo = offset(rng);
    return BenchmarkInstance(f, std::move(s), fo, instance_id);
  }

  /// Unshifted instance with zero offset.
  static BenchmarkInstance plain(FunctionId f, int dim) {
    return BenchmarkInstance(f, Eigen::VectorXd::Zero(dim), 0.0, 0);
  }

  [[nodiscard]] FunctionId function() const noexcept { return function_; }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(shift_.size()); }
  [[nodiscard]] int instance_id() const noexcept { return instance_id_; }
  [[nodiscard]] const Eigen::VectorXd& shift() const noexcept { return shift_; }
  [[nodiscard]] double f_opt() const noexcept { return f_opt_; }
  [[nodiscard]] BoxBounds bounds() const { return BoxBounds::cube(dim(), -5.0, 5.0); }
  /// The global minimizer in original coordinates.
  [[nodiscard]] Eigen::VectorXd optimum() const { return shift_; }

  template <typename Derived>
  [[nodiscard]] double evaluate(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != shift_.size()) throw UsageError("benchmark input has the wrong dimension");
    Eigen::VectorXd z = x - shift_;
    if (function_ == FunctionId::Rosenbrock) z.array() += 1.0;
    return f_opt_ + base_function(function_, z);
  }

  [[nodiscard]] double f_delta(double y) const noexcept { return y - f_opt_; }

 private:
  FunctionId function_;
  Eigen::VectorXd shift_;
  double f_opt_;
  int instance_id_;
};

template <typename Derived>
double evaluate(const BenchmarkInstance& inst, const Eigen::MatrixBase<Derived>& x) {
  return inst.evaluate(x);
}

inline double f_delta(const BenchmarkInstance& inst, double y) { return inst.f_delta(y); }

}  // namespace mgso
