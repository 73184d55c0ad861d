#pragma once

// Vector-neuron layers. A feature is a C×3 matrix whose rows are 3-vectors;
// rotating the underlying cloud by R maps a feature F to F·Rᵀ. Every layer
// here either commutes with that action (equivariant) or is unchanged by it
// (invariant).

#include <array>
#include <span>

#include <Eigen/Core>

#include "parereg/random.hpp"

namespace parereg::vn {

template <typename S>
using VectorFeature = Eigen::Matrix<S, Eigen::Dynamic, 3, Eigen::RowMajor>;

template <typename S>
using InvariantFeature = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Channel mixing F ↦ W·F with W of shape C′×C.
template <typename S>
struct VnLinear {
  Matrix<S> w;

  [[nodiscard]] Eigen::Index in_channels() const { return w.cols(); }
  [[nodiscard]] Eigen::Index out_channels() const { return w.rows(); }

  template <typename T>
  VnLinear<T> cast() const {
    return {w.template cast<T>()};
  }
};

/// Half-space VN-ReLU with one learned direction d = normalize(u·F) shared
/// by all channels of the layer.
template <typename S>
struct VnNonlinearity {
  RowVector<S> u;

  template <typename T>
  VnNonlinearity<T> cast() const {
    return {u.template cast<T>()};
  }
};

/// VN-Linear → L2-normalization → VN-ReLU.
template <typename S>
struct VnBlock {
  VnLinear<S> linear;
  VnNonlinearity<S> activation;

  [[nodiscard]] Eigen::Index in_channels() const { return linear.in_channels(); }
  [[nodiscard]] Eigen::Index out_channels() const { return linear.out_channels(); }

  template <typename T>
  VnBlock<T> cast() const {
    return {linear.template cast<T>(), activation.template cast<T>()};
  }
};

/// Produces an equivariant 3×3 frame T from a C-channel feature:
/// linear → VN-ReLU → linear → VN-ReLU → linear(→3).
template <typename S>
struct VnInvariantHead {
  std::array<VnLinear<S>, 3> layers;
  std::array<VnNonlinearity<S>, 2> activations;

  [[nodiscard]] Eigen::Index in_channels() const { return layers[0].in_channels(); }

  template <typename T>
  VnInvariantHead<T> cast() const {
    return {{layers[0].template cast<T>(), layers[1].template cast<T>(),
             layers[2].template cast<T>()},
            {activations[0].template cast<T>(), activations[1].template cast<T>()}};
  }
};

/// Throws InputError if the layer does not accept f's channel count.
template <typename S>
VectorFeature<S> vn_linear(const VnLinear<S>& layer, const VectorFeature<S>& f);

/// f1 channels followed by f2 channels.
template <typename S>
VectorFeature<S> vn_concat(const VectorFeature<S>& f1, const VectorFeature<S>& f2);

/// Channels with ⟨f_c, d⟩ < 0 lose their component along d. A zero direction
/// leaves the feature untouched.
template <typename S>
VectorFeature<S> vn_relu(const VnNonlinearity<S>& layer, const VectorFeature<S>& f);

/// Every nonzero channel scaled to unit length.
template <typename S>
VectorFeature<S> l2_normalize(const VectorFeature<S>& f);

/// Per-channel Euclidean norms (rotation-invariant).
template <typename S>
InvariantFeature<S> vn_magnitudes(const VectorFeature<S>& f);

template <typename S>
VectorFeature<S> vn_block(const VnBlock<S>& block, const VectorFeature<S>& f);

/// The equivariant frame T(F) ∈ R^{3×3}.
template <typename S>
VectorFeature<S> vn_frame(const VnInvariantHead<S>& head, const VectorFeature<S>& f);

/// Row-major flatten of F·T(F)ᵀ, length 3C.
template <typename S>
InvariantFeature<S> vn_invariant(const VnInvariantHead<S>& head, const VectorFeature<S>& f);

/// Channel-wise mean. Throws InputError on an empty set or mismatched shapes.
template <typename S>
VectorFeature<S> vn_mean_pool(std::span<const VectorFeature<S>> set);

// Random initialisation, uniform in [-bound, bound].
Matrix<double> uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
VnLinear<double> init_linear(Eigen::Index out, Eigen::Index in, Rng& rng);
VnNonlinearity<double> init_nonlinearity(Eigen::Index channels, Rng& rng);
VnBlock<double> init_block(Eigen::Index out, Eigen::Index in, Rng& rng);
VnInvariantHead<double> init_invariant_head(Eigen::Index channels, Rng& rng);

}  // namespace parereg::vn
