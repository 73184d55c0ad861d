#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "parereg/conv/pare_conv.hpp"
#include "parereg/geom/neighbors.hpp"

namespace parereg::conv {

/// How the pyramid levels are produced from their parent level.
enum class PyramidSampler {
  radius,  ///< geom::radius_downsample — commutes with rigid motions
  voxel,   ///< geom::voxel_downsample — axis-aligned grid, frame dependent
};

/// Network layout. Encoder widths and the correlation-network width are not
/// published values; they are defaults.
struct BackboneConfig {
  double voxel = 0.025;  ///< first-level cell size (m)
  double ratio = 2.0;    ///< cell growth per level
  std::size_t k = 35;    ///< neighbours per convolution
  Eigen::Index kernels = 4;
  ConvMode mode = ConvMode::edge;
  std::array<Eigen::Index, 3> stage_widths{32, 64, 128};
  Eigen::Index point_channels = 85;  ///< d̃/3: 85 → 255-wide point descriptors
  Eigen::Index correlation_hidden = 16;
  std::size_t blocks_per_stage = 3;
  PyramidSampler sampler = PyramidSampler::radius;

  static BackboneConfig indoor();
  static BackboneConfig outdoor();

  /// Invariant descriptor widths 3d̂ and 3d̃.
  [[nodiscard]] Eigen::Index superpoint_descriptor_width() const { return 3 * stage_widths[2]; }
  [[nodiscard]] Eigen::Index point_descriptor_width() const { return 3 * point_channels; }
};

template <typename S>
struct BackboneParams {
  BackboneConfig config;
  std::array<std::vector<ResBlock<S>>, 3> stages;  ///< first block of each is strided
  vn::VnBlock<S> fuse_mid;    ///< level-3 ⊕ level-2 skip → stage_widths[1]
  vn::VnBlock<S> fuse_point;  ///< level-2 ⊕ level-1 skip → point_channels
  vn::VnInvariantHead<S> superpoint_head;
  vn::VnInvariantHead<S> point_head;

  template <typename T>
  BackboneParams<T> cast() const;
};

/// Input cloud plus three successively coarser levels; levels[1] is P̃ and
/// levels[3] the superpoints P̂.
using Pyramid = std::array<geom::PointCloud, 4>;

template <typename S>
struct FeaturePyramid {
  Pyramid levels;
  std::vector<VectorFeature<S>> superpoint_features;  ///< F̂ on levels[3]
  std::vector<VectorFeature<S>> point_features;       ///< F̃ on levels[1]
  Matrix<S> superpoint_descriptors;                   ///< X̂, |P̂| × 3d̂
  Matrix<S> point_descriptors;                        ///< X̃, |P̃| × 3d̃
  geom::NodeGrouping grouping;                        ///< P̃ → P̂

  /// Every intermediate equivariant output, in evaluation order, when
  /// requested from backbone_forward.
  std::vector<std::vector<VectorFeature<S>>> layer_outputs;
};

/// Throws InputError("cloud too small") when the coarsest level has fewer
/// than two points.
Pyramid build_pyramid(const geom::PointCloud& cloud, const BackboneConfig& config);

/// One-channel translation-invariant input feature per point: the offset of
/// the point from the centroid of its k nearest neighbours.
template <typename S>
std::vector<VectorFeature<S>> input_features(const geom::PointCloud& cloud, std::size_t k);

template <typename S>
FeaturePyramid<S> forward_pyramid(const BackboneParams<S>& params, const Pyramid& levels,
                                  bool record_layers = false);

template <typename S>
FeaturePyramid<S> backbone_forward(const BackboneParams<S>& params, const geom::PointCloud& cloud,
                                   bool record_layers = false);

BackboneParams<double> init_backbone(const BackboneConfig& config, std::uint64_t seed,
                                     bool neutral_correlation = true);

/// Calls f(name, matrix) for every parameter tensor in a fixed order.
template <typename Params, typename F>
void visit_parameters(Params& params, F&& f);

// ---------------------------------------------------------------------------

template <typename S>
template <typename T>
BackboneParams<T> BackboneParams<S>::cast() const {
  BackboneParams<T> out;
  out.config = config;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (const auto& b : stages[s]) out.stages[s].push_back(b.template cast<T>());
  }
  out.fuse_mid = fuse_mid.template cast<T>();
  out.fuse_point = fuse_point.template cast<T>();
  out.superpoint_head = superpoint_head.template cast<T>();
  out.point_head = point_head.template cast<T>();
  return out;
}

namespace detail {

template <typename M, typename F>
void visit_correlation(const std::string& prefix, M& net, F& f) {
  for (std::size_t i = 0; i < net.vn_layers.size(); ++i) {
    f(prefix + ".vn" + std::to_string(i) + ".w", net.vn_layers[i].w);
  }
  for (std::size_t i = 0; i < net.vn_activations.size(); ++i) {
    f(prefix + ".vn" + std::to_string(i) + ".u", net.vn_activations[i].u);
  }
  for (std::size_t i = 0; i < net.mlp.size(); ++i) {
    f(prefix + ".mlp" + std::to_string(i) + ".w", net.mlp[i].w);
    f(prefix + ".mlp" + std::to_string(i) + ".b", net.mlp[i].b);
  }
}

template <typename B, typename F>
void visit_block(const std::string& prefix, B& block, F& f) {
  f(prefix + ".linear.w", block.linear.w);
  f(prefix + ".activation.u", block.activation.u);
}

template <typename H, typename F>
void visit_head(const std::string& prefix, H& head, F& f) {
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    f(prefix + ".linear" + std::to_string(i) + ".w", head.layers[i].w);
  }
  for (std::size_t i = 0; i < head.activations.size(); ++i) {
    f(prefix + ".activation" + std::to_string(i) + ".u", head.activations[i].u);
  }
}

}  // namespace detail

template <typename Params, typename F>
void visit_parameters(Params& params, F&& f) {
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    for (std::size_t b = 0; b < params.stages[s].size(); ++b) {
      auto& block = params.stages[s][b];
      const std::string p = "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      for (std::size_t k = 0; k < block.conv.bank.weights.size(); ++k) {
        f(p + ".conv.kernel" + std::to_string(k), block.conv.bank.weights[k]);
      }
      detail::visit_correlation(p + ".conv.correlation", block.conv.correlation, f);
      f(p + ".conv_activation.u", block.conv_activation.u);
      detail::visit_block(p + ".expand", block.expand, f);
      if (block.shortcut) f(p + ".shortcut.w", block.shortcut->w);
    }
  }
  detail::visit_block("backbone.fuse_mid", params.fuse_mid, f);
  detail::visit_block("backbone.fuse_point", params.fuse_point, f);
  detail::visit_head("backbone.superpoint_head", params.superpoint_head, f);
  detail::visit_head("backbone.point_head", params.point_head, f);
}

}  // namespace parereg::conv
