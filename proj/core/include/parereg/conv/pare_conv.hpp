#pragma once

#include <optional>
#include <span>
#include <vector>

#include "parereg/geom/neighbors.hpp"
#include "parereg/geom/point_cloud.hpp"
#include "parereg/vn/vector_neuron.hpp"

namespace parereg::conv {

using geom::Vec3;
using vn::Matrix;
using vn::VectorFeature;

template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// node: Φ_j = F_j.  edge: Φ_j = [F_j − F_i ; F_j] (2C channels).
enum class ConvMode { node, edge };

/// Scalar fully-connected layer y = W·x + b.
template <typename S>
struct Dense {
  Matrix<S> w;
  Vector<S> b;

  template <typename T>
  Dense<T> cast() const {
    return {w.template cast<T>(), b.template cast<T>()};
  }
};

/// Mini-network mapping neighbour spatial statistics to K correlation
/// scores: VN-MLP → per-channel magnitudes → MLP → softmax.
template <typename S>
struct CorrelationNet {
  std::vector<vn::VnLinear<S>> vn_layers;
  std::vector<vn::VnNonlinearity<S>> vn_activations;
  std::vector<Dense<S>> mlp;  ///< ReLU between layers, none after the last

  [[nodiscard]] Eigen::Index kernel_count() const { return mlp.back().w.rows(); }

  template <typename T>
  CorrelationNet<T> cast() const;
};

/// K shadow-kernel weight matrices, each C′×C (node) or C′×2C (edge).
template <typename S>
struct KernelBank {
  std::vector<Matrix<S>> weights;
  ConvMode mode = ConvMode::edge;

  [[nodiscard]] Eigen::Index kernel_count() const {
    return static_cast<Eigen::Index>(weights.size());
  }
  [[nodiscard]] Eigen::Index out_channels() const { return weights.front().rows(); }
  [[nodiscard]] Eigen::Index in_channels() const {
    return mode == ConvMode::edge ? weights.front().cols() / 2 : weights.front().cols();
  }

  template <typename T>
  KernelBank<T> cast() const {
    KernelBank<T> out{{}, mode};
    for (const auto& w : weights) out.weights.push_back(w.template cast<T>());
    return out;
  }
};

template <typename S>
struct PareConv {
  KernelBank<S> bank;
  CorrelationNet<S> correlation;

  template <typename T>
  PareConv<T> cast() const {
    return {bank.template cast<T>(), correlation.template cast<T>()};
  }
};

/// Per-neighbour 3×3 statistics with rows [p_ij, mean_j p_ij, p_ij × mean_j p_ij],
/// p_ij = p_j − p_i. Throws InputError without neighbours.
template <typename S>
std::vector<VectorFeature<S>> spatial_stats(const Vec3& center, std::span<const Vec3> neighbors);

/// softmax(MLP(‖VN-MLP(stats)‖)) — positive entries summing to one.
template <typename S>
Vector<S> correlation_scores(const CorrelationNet<S>& net, const VectorFeature<S>& stats);

/// Σ_k W_k Σ_j γ_jk Φ_j for precomputed scores (rows of `scores` are neighbours).
template <typename S>
VectorFeature<S> aggregate(const KernelBank<S>& bank, const Matrix<S>& scores,
                           std::span<const VectorFeature<S>> phis);

/// Feature attached to a query point: its own feature when it coincides with
/// the first support neighbour, otherwise the mean over the neighbourhood.
/// A nearest-neighbour pick would not do for strided queries: a cluster
/// centroid is often equidistant from two support points, and which one wins
/// then depends on rounding and so on the frame.
template <typename S>
VectorFeature<S> center_feature(std::span<const geom::Neighbor> row,
                                std::span<const VectorFeature<S>> support_features);

/// PARE-Conv at one query point. `row` indexes `support`/`support_features`;
/// in edge mode F_i is center_feature().
template <typename S>
VectorFeature<S> pare_conv(const PareConv<S>& conv, const Vec3& center,
                           const geom::PointCloud& support, std::span<const geom::Neighbor> row,
                           std::span<const VectorFeature<S>> support_features);

/// Bottleneck residual block: PARE-Conv (C → C′/2) → VN-ReLU → VN-block
/// (C′/2 → C′) → + shortcut. The shortcut carries center_feature(),
/// through a VN-Linear iff C ≠ C′.
template <typename S>
struct ResBlock {
  PareConv<S> conv;
  vn::VnNonlinearity<S> conv_activation;
  vn::VnBlock<S> expand;
  std::optional<vn::VnLinear<S>> shortcut;

  [[nodiscard]] Eigen::Index in_channels() const { return conv.bank.in_channels(); }
  [[nodiscard]] Eigen::Index out_channels() const { return expand.out_channels(); }

  template <typename T>
  ResBlock<T> cast() const {
    ResBlock<T> out{conv.template cast<T>(), conv_activation.template cast<T>(),
                    expand.template cast<T>(), std::nullopt};
    if (shortcut) out.shortcut = shortcut->template cast<T>();
    return out;
  }
};

/// Block output for every query, given queries' neighbour rows into `support`.
template <typename S>
std::vector<VectorFeature<S>> pare_resblock(const ResBlock<S>& block, const geom::PointCloud& queries,
                                            const geom::PointCloud& support,
                                            const geom::NeighborGraph& graph,
                                            std::span<const VectorFeature<S>> support_features);

/// Residual block evaluated at sparse centres over a k-NN support in the
/// dense cloud. Throws InputError("empty neighborhood") on an empty support.
template <typename S>
std::vector<VectorFeature<S>> strided_block(const ResBlock<S>& block,
                                            const geom::PointCloud& sparse_centers,
                                            const geom::PointCloud& dense_cloud,
                                            std::span<const VectorFeature<S>> dense_features,
                                            std::size_t k);

/// Each dense point takes its nearest sparse point's feature, concatenates
/// its skip feature and fuses through `fusion`.
template <typename S>
std::vector<VectorFeature<S>> nearest_upsample(std::span<const VectorFeature<S>> sparse_features,
                                               const geom::PointCloud& sparse_cloud,
                                               const geom::PointCloud& dense_cloud,
                                               std::span<const VectorFeature<S>> skip_features,
                                               const vn::VnBlock<S>& fusion);

// Initialisation. Kernel weights are uniform in ±(3/(C·K))^{1/2}; with
// `neutral_correlation` the last MLP layer is zero so every γ starts uniform.
// `length_scale` is the typical neighbourhood size in metres: the first
// correlation layer is divided by it (and by its square for the cross-product
// row) so the scores vary across a neighbourhood from the start. Without it,
// γ is nearly constant over j and the F_j − F_i half of an edge convolution
// cancels to a small remainder that single precision cannot resolve.
CorrelationNet<double> init_correlation(Eigen::Index hidden, Eigen::Index kernels,
                                        bool neutral_correlation, Rng& rng,
                                        double length_scale = 1.0);
KernelBank<double> init_bank(Eigen::Index out, Eigen::Index in, Eigen::Index kernels,
                             ConvMode mode, Rng& rng);
ResBlock<double> init_resblock(Eigen::Index in, Eigen::Index out, Eigen::Index kernels,
                               Eigen::Index correlation_hidden, ConvMode mode,
                               bool neutral_correlation, Rng& rng, double length_scale = 1.0);

template <typename S>
template <typename T>
CorrelationNet<T> CorrelationNet<S>::cast() const {
  CorrelationNet<T> out;
  for (const auto& l : vn_layers) out.vn_layers.push_back(l.template cast<T>());
  for (const auto& a : vn_activations) out.vn_activations.push_back(a.template cast<T>());
  for (const auto& d : mlp) out.mlp.push_back(d.template cast<T>());
  return out;
}

}  // namespace parereg::conv
