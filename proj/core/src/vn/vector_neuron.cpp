#include "parereg/vn/vector_neuron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "parereg/error.hpp"

namespace parereg::vn {

template <typename S>
VectorFeature<S> vn_linear(const VnLinear<S>& layer, const VectorFeature<S>& f) {
  if (layer.in_channels() != f.rows()) {
    throw InputError("vn_linear: layer expects " + std::to_string(layer.in_channels()) +
                     " channels, got " + std::to_string(f.rows()));
  }
  return layer.w * f;
}

template <typename S>
VectorFeature<S> vn_concat(const VectorFeature<S>& f1, const VectorFeature<S>& f2) {
  VectorFeature<S> out(f1.rows() + f2.rows(), 3);
  out.topRows(f1.rows()) = f1;
  out.bottomRows(f2.rows()) = f2;
  return out;
}

template <typename S>
VectorFeature<S> vn_relu(const VnNonlinearity<S>& layer, const VectorFeature<S>& f) {
  if (layer.u.cols() != f.rows()) {
    throw InputError("vn_relu: direction predictor width does not match channels");
  }
  const Eigen::Matrix<S, 1, 3> raw = layer.u * f;
  const S n = raw.norm();
  if (!(n > S(0))) return f;
  const Eigen::Matrix<S, 1, 3> d = raw / n;
  // A channel parallel to d projects to rounding noise whose direction is
  // arbitrary; a following l2_normalize would blow it up to unit length, so
  // such residuals are snapped to exact zero.
  const S snap = S(1000) * std::numeric_limits<S>::epsilon();
  VectorFeature<S> out = f;
  for (Eigen::Index c = 0; c < f.rows(); ++c) {
    const S dot = f.row(c).dot(d);
    if (dot < S(0)) {
      out.row(c) -= dot * d;
      if (out.row(c).norm() <= snap * f.row(c).norm()) out.row(c).setZero();
    }
  }
  return out;
}

template <typename S>
VectorFeature<S> l2_normalize(const VectorFeature<S>& f) {
  VectorFeature<S> out = f;
  for (Eigen::Index c = 0; c < f.rows(); ++c) {
    const S n = f.row(c).norm();
    if (n > S(0)) out.row(c) /= n;
  }
  return out;
}

template <typename S>
InvariantFeature<S> vn_magnitudes(const VectorFeature<S>& f) {
  return f.rowwise().norm();
}

template <typename S>
VectorFeature<S> vn_block(const VnBlock<S>& block, const VectorFeature<S>& f) {
  return vn_relu(block.activation, l2_normalize<S>(vn_linear(block.linear, f)));
}

template <typename S>
VectorFeature<S> vn_frame(const VnInvariantHead<S>& head, const VectorFeature<S>& f) {
  VectorFeature<S> h = vn_relu(head.activations[0], vn_linear(head.layers[0], f));
  h = vn_relu(head.activations[1], vn_linear(head.layers[1], h));
  h = vn_linear(head.layers[2], h);
  if (h.rows() != 3) throw InputError("invariant head must end in 3 channels");
  return h;
}

template <typename S>
InvariantFeature<S> vn_invariant(const VnInvariantHead<S>& head, const VectorFeature<S>& f) {
  const VectorFeature<S> frame = vn_frame(head, f);
  const VectorFeature<S> inner = f * frame.transpose();
  InvariantFeature<S> out(3 * f.rows());
  for (Eigen::Index c = 0; c < f.rows(); ++c) {
    for (Eigen::Index a = 0; a < 3; ++a) out(3 * c + a) = inner(c, a);
  }
  return out;
}

template <typename S>
VectorFeature<S> vn_mean_pool(std::span<const VectorFeature<S>> set) {
  if (set.empty()) throw InputError("vn_mean_pool: empty set");
  VectorFeature<S> sum = set.front();
  for (std::size_t i = 1; i < set.size(); ++i) {
    if (set[i].rows() != sum.rows()) throw InputError("vn_mean_pool: channel counts differ");
    sum += set[i];
  }
  return sum / static_cast<S>(set.size());
}

Matrix<double> uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix<double> m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

VnLinear<double> init_linear(Eigen::Index out, Eigen::Index in, Rng& rng) {
  return {uniform_matrix(out, in, std::sqrt(3.0 / static_cast<double>(std::max<Eigen::Index>(1, in))),
                         rng)};
}

VnNonlinearity<double> init_nonlinearity(Eigen::Index channels, Rng& rng) {
  return {uniform_matrix(1, channels,
                         std::sqrt(3.0 / static_cast<double>(std::max<Eigen::Index>(1, channels))),
                         rng)};
}

VnBlock<double> init_block(Eigen::Index out, Eigen::Index in, Rng& rng) {
  VnBlock<double> b;
  b.linear = init_linear(out, in, rng);
  b.activation = init_nonlinearity(out, rng);
  return b;
}

VnInvariantHead<double> init_invariant_head(Eigen::Index channels, Rng& rng) {
  const Eigen::Index hidden = std::max<Eigen::Index>(3, channels / 2);
  VnInvariantHead<double> h;
  h.layers[0] = init_linear(hidden, channels, rng);
  h.activations[0] = init_nonlinearity(hidden, rng);
  h.layers[1] = init_linear(hidden, hidden, rng);
  h.activations[1] = init_nonlinearity(hidden, rng);
  h.layers[2] = init_linear(3, hidden, rng);
  return h;
}

#define PAREREG_VN_INSTANTIATE(S)                                                          \
  template VectorFeature<S> vn_linear(const VnLinear<S>&, const VectorFeature<S>&);        \
  template VectorFeature<S> vn_concat(const VectorFeature<S>&, const VectorFeature<S>&);   \
  template VectorFeature<S> vn_relu(const VnNonlinearity<S>&, const VectorFeature<S>&);    \
  template VectorFeature<S> l2_normalize(const VectorFeature<S>&);                         \
  template InvariantFeature<S> vn_magnitudes(const VectorFeature<S>&);                     \
  template VectorFeature<S> vn_block(const VnBlock<S>&, const VectorFeature<S>&);          \
  template VectorFeature<S> vn_frame(const VnInvariantHead<S>&, const VectorFeature<S>&);  \
  template InvariantFeature<S> vn_invariant(const VnInvariantHead<S>&,                     \
                                            const VectorFeature<S>&);                      \
  template VectorFeature<S> vn_mean_pool(std::span<const VectorFeature<S>>);

PAREREG_VN_INSTANTIATE(float)
PAREREG_VN_INSTANTIATE(double)

#undef PAREREG_VN_INSTANTIATE

}  // namespace parereg::vn
