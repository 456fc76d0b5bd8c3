#pragma once

#include "mgso/optimizers.hpp"

#include <Eigen/Core>

namespace mgso {

/// Affine map between a box [l, u] in original units and [-1, 1]^D.
class ScalingTransform {
 public:
  ScalingTransform() = default;
  explicit ScalingTransform(BoxBounds box) : box_(std::move(box)) {
    box_.validate();
    half_width_ = 0.5 * (box_.upper - box_.lower);
  }

  [[nodiscard]] const BoxBounds& box() const noexcept { return box_; }
  [[nodiscard]] Eigen::Index dim() const noexcept { return box_.dim(); }

  /// 2 (x - l) / (u - l) - 1
  template <typename Derived>
  [[nodiscard]] Eigen::VectorXd forward(const Eigen::MatrixBase<Derived>& x) const {
    return ((x - box_.lower).array() / half_width_.array() - 1.0).matrix();
  }

  template <typename Derived>
  [[nodiscard]] Eigen::VectorXd inverse(const Eigen::MatrixBase<Derived>& z) const {
    return box_.lower + ((z.array() + 1.0) * half_width_.array()).matrix();
  }

  /// Inverse map clamped into the box, so that round-off can never leave it.
  template <typename Derived>
  [[nodiscard]] Eigen::VectorXd to_original(const Eigen::MatrixBase<Derived>& z) const {
    return box_.project(inverse(z));
  }

 private:
  BoxBounds box_;
  Eigen::VectorXd half_width_;
};

}  // namespace mgso
