#include "parereg/conv/backbone.hpp"

#include <cmath>

#include "parereg/error.hpp"
#include "parereg/geom/sampling.hpp"

namespace parereg::conv {

BackboneConfig BackboneConfig::indoor() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::outdoor() {
  BackboneConfig c;
  c.voxel = 0.3;
  c.ratio = 2.5;
  c.point_channels = 21;
  return c;
}

Pyramid build_pyramid(const geom::PointCloud& cloud, const BackboneConfig& config) {
  geom::require_non_empty(cloud);
  if (!(config.voxel > 0.0) || !(config.ratio > 0.0)) {
    throw InputError("voxel and ratio must be positive");
  }
  Pyramid levels;
  levels[0] = cloud;
  double cell = config.voxel;
  for (std::size_t l = 1; l < levels.size(); ++l) {
    levels[l] = config.sampler == PyramidSampler::radius
                    ? geom::radius_downsample(levels[l - 1], cell)
                    : geom::voxel_downsample(levels[l - 1], cell);
    cell *= config.ratio;
  }
  if (levels[3].size() < 2) throw InputError("cloud too small");
  return levels;
}

template <typename S>
std::vector<VectorFeature<S>> input_features(const geom::PointCloud& cloud, std::size_t k) {
  const auto graph = geom::knn(cloud, cloud, k);
  std::vector<VectorFeature<S>> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Vec3 mean = Vec3::Zero();
    for (const auto& n : graph[i]) mean += cloud[n.index];
    mean /= static_cast<double>(graph[i].size());
    VectorFeature<S> f(1, 3);
    f.row(0) = (cloud[i] - mean).transpose().template cast<S>();
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

template <typename S>
Matrix<S> invariant_rows(const vn::VnInvariantHead<S>& head,
                         const std::vector<VectorFeature<S>>& features) {
  if (features.empty()) return {};
  Matrix<S> out(static_cast<Eigen::Index>(features.size()), 3 * features.front().rows());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = vn::vn_invariant(head, features[i]).transpose();
  }
  return out;
}

}  // namespace

template <typename S>
FeaturePyramid<S> forward_pyramid(const BackboneParams<S>& params, const Pyramid& levels,
                                  bool record_layers) {
  const auto& cfg = params.config;
  FeaturePyramid<S> out;
  out.levels = levels;
  auto record = [&](const std::vector<VectorFeature<S>>& f) {
    if (record_layers) out.layer_outputs.push_back(f);
  };

  std::vector<VectorFeature<S>> features = input_features<S>(levels[0], cfg.k);
  record(features);
  std::array<std::vector<VectorFeature<S>>, 3> skips;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& blocks = params.stages[s];
    if (blocks.empty()) throw InputError("backbone stage without blocks");
    const geom::PointCloud& support = levels[s];
    const geom::PointCloud& here = levels[s + 1];
    features = strided_block<S>(blocks.front(), here, support, features, cfg.k);
    record(features);
    if (blocks.size() > 1) {
      const auto graph = geom::knn(here, here, cfg.k);
      for (std::size_t b = 1; b < blocks.size(); ++b) {
        features = pare_resblock<S>(blocks[b], here, here, graph, features);
        record(features);
      }
    }
    skips[s] = features;
  }

  out.superpoint_features = skips[2];
  auto mid = nearest_upsample<S>(skips[2], levels[3], levels[2], skips[1], params.fuse_mid);
  record(mid);
  out.point_features = nearest_upsample<S>(mid, levels[2], levels[1], skips[0], params.fuse_point);
  record(out.point_features);

  out.superpoint_descriptors = invariant_rows(params.superpoint_head, out.superpoint_features);
  out.point_descriptors = invariant_rows(params.point_head, out.point_features);
  out.grouping = geom::point_to_node_group(levels[1], levels[3]);
  return out;
}

template <typename S>
FeaturePyramid<S> backbone_forward(const BackboneParams<S>& params, const geom::PointCloud& cloud,
                                   bool record_layers) {
  return forward_pyramid(params, build_pyramid(cloud, params.config), record_layers);
}

BackboneParams<double> init_backbone(const BackboneConfig& config, std::uint64_t seed,
                                     bool neutral_correlation) {
  if (config.blocks_per_stage == 0) throw InputError("blocks_per_stage must be >= 1");
  Rng rng(seed);
  BackboneParams<double> p;
  p.config = config;
  Eigen::Index in = 1;
  double spacing = config.voxel;
  for (std::size_t s = 0; s < 3; ++s) {
    const Eigen::Index out = config.stage_widths[s];
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      p.stages[s].push_back(init_resblock(b == 0 ? in : out, out, config.kernels,
                                          config.correlation_hidden, config.mode,
                                          neutral_correlation, rng, spacing));
    }
    in = out;
    spacing *= config.ratio;
  }
  const auto& w = config.stage_widths;
  p.fuse_mid = vn::init_block(w[1], w[2] + w[1], rng);
  p.fuse_point = vn::init_block(config.point_channels, w[1] + w[0], rng);
  p.superpoint_head = vn::init_invariant_head(w[2], rng);
  p.point_head = vn::init_invariant_head(config.point_channels, rng);
  return p;
}

#define PAREREG_BACKBONE_INSTANTIATE(S)                                                     \
  template std::vector<VectorFeature<S>> input_features<S>(const geom::PointCloud&,         \
                                                           std::size_t);                    \
  template FeaturePyramid<S> forward_pyramid(const BackboneParams<S>&, const Pyramid&, bool); \
  template FeaturePyramid<S> backbone_forward(const BackboneParams<S>&,                     \
                                              const geom::PointCloud&, bool);

PAREREG_BACKBONE_INSTANTIATE(float)
PAREREG_BACKBONE_INSTANTIATE(double)

#undef PAREREG_BACKBONE_INSTANTIATE

}  // namespace parereg::conv
