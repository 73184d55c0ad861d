#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parereg/estimator/estimator.hpp"
#include "parereg/eval/losses.hpp"
#include "parereg/geom/point_cloud.hpp"
#include "parereg/geom/transform.hpp"

namespace parereg::app {

using geom::Vec3;

enum class SceneGenerator { plane_grid, box_room, random_surface };

std::string to_string(SceneGenerator g);
/// Throws InputError for unknown names.
SceneGenerator scene_generator_from_string(const std::string& name);

struct SceneSpec {
  SceneGenerator generator = SceneGenerator::random_surface;
  std::size_t points = 2000;
  double extent = 3.0;  ///< footprint edge length (m)
  /// When set, the crop ratio is searched so that the cropped pair reaches
  /// this overlap (within 0.05) and `crop_ratio` is ignored.
  std::optional<double> overlap;
  double crop_ratio = 0.3;  ///< 0 disables cropping
  double overlap_radius = 0.0375;
  double noise = 0.005;  ///< per-coordinate Gaussian σ (m)
  double max_translation = 1.0;
  bool oracle_features = false;
  Eigen::Index oracle_channels = 8;
  double oracle_noise = 0.01;

  void validate() const;
};

using eval::IndexPair;

struct Scene {
  geom::PointCloud p;
  geom::PointCloud q;
  geom::RigidTransform gt;  ///< maps P into Q's frame
  /// Index pairs (into p, q) of points that were the same surface sample
  /// before noise.
  std::vector<IndexPair> correspondences;
  double overlap = 1.0;     ///< achieved, measured before noise
  double crop_ratio = 0.0;  ///< ratio actually applied
  /// Oracle features: random F per sample on P, F·R_gtᵀ + noise on its twin.
  std::vector<estimator::Feature> features_p;
  std::vector<estimator::Feature> features_q;
};

/// Surface samples of the chosen generator, deterministic in `seed`.
geom::PointCloud sample_surface(SceneGenerator generator, std::size_t points, double extent,
                                std::uint64_t seed);

/// Samples a surface, duplicates it, moves the copy by a random rigid
/// motion, crops both sides, then adds independent noise. Throws InputError
/// with the achieved value when an overlap target cannot be met.
Scene gen_scene(const SceneSpec& spec, std::uint64_t seed);

/// `count` pairs of which round(count · inlier_ratio) are ground-truth
/// twins; the rest join points at least `outlier_margin` apart under the
/// ground truth. Pairs are shuffled and carry the oracle features; their
/// (p, q) indices go to `indices` when given.
estimator::CorrespondenceSet oracle_correspondences(const Scene& scene, std::size_t count,
                                                    double inlier_ratio, double outlier_margin,
                                                    std::uint64_t seed,
                                                    std::vector<IndexPair>* indices = nullptr);

}  // namespace parereg::app
