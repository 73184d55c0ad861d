#include "parereg/eval/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "parereg/error.hpp"

namespace parereg::eval {

GradcheckResult gradcheck(const ScalarFn& f, const GradientFn& gradient, const Eigen::VectorXd& x,
                          double eps, double floor, const SignatureFn& signature) {
  if (!(eps > 0.0) || !(floor > 0.0)) throw InputError("gradcheck: eps and floor must be positive");
  const Eigen::VectorXd analytic = gradient(x);
  if (analytic.size() != x.size()) throw InputError("gradcheck: gradient size mismatch");
  const std::uint64_t base = signature ? signature(x) : 0;

  GradcheckResult out;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + eps;
    const double up = f(probe);
    const bool up_same = !signature || signature(probe) == base;
    probe(i) = x(i) - eps;
    const double down = f(probe);
    const bool down_same = !signature || signature(probe) == base;
    probe(i) = x(i);
    if (!up_same || !down_same) {
      out.stable = false;
      continue;
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic(i);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (out.worst_index < 0 || rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace parereg::eval
