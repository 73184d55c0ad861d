#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace parereg::eval {

struct GradcheckResult {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  /// False when some ±ε probe changed the active-set signature; the point
  /// should be resampled and the error ignored.
  bool stable = true;
};

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using SignatureFn = std::function<std::uint64_t(const Eigen::VectorXd&)>;

/// Central differences against the analytic gradient at `x`.
/// Relative error per coordinate: |a − n| / max(|a|, |n|, floor).
GradcheckResult gradcheck(const ScalarFn& f, const GradientFn& gradient, const Eigen::VectorXd& x,
                          double eps = 1e-6, double floor = 1e-3,
                          const SignatureFn& signature = {});

}  // namespace parereg::eval
