#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "parereg/geom/point_cloud.hpp"
#include "parereg/geom/transform.hpp"

namespace parereg::geom {

/// One centroid per occupied voxel, ordered by ascending (i, j, k) voxel
/// coordinate where i = floor(x / voxel). A point on a voxel face belongs to
/// the voxel whose lower face it lies on.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Greedy radius clustering in index order: a point becomes a seed unless a
/// previous seed lies within `radius`; every point joins its nearest seed and
/// each cluster is replaced by its centroid. Depends only on pairwise
/// distances and point order, so it commutes with rigid motions.
PointCloud radius_downsample(const PointCloud& cloud, double radius);

/// Fraction of points of `p` whose nearest neighbour in `q` lies within
/// `radius` once `p` is mapped by `p_to_q`.
double overlap_ratio(const PointCloud& p, const PointCloud& q, const RigidTransform& p_to_q,
                     double radius);

struct CropIndices {
  std::vector<std::size_t> p;  ///< retained indices into P, ascending
  std::vector<std::size_t> q;  ///< retained indices into Q, ascending
};

/// Plane-cut augmentation. For each cloud a random direction is drawn
/// independently; the `ratio` fraction of points at either extreme along it
/// forms a candidate cap, and whichever cap overlaps the other cloud more
/// (under `p_to_q`) is removed.
CropIndices random_crop_indices(const PointCloud& p, const PointCloud& q,
                                const RigidTransform& p_to_q, double ratio,
                                double overlap_radius, std::uint64_t seed);

std::pair<PointCloud, PointCloud> random_crop(const PointCloud& p, const PointCloud& q,
                                              const RigidTransform& p_to_q, double ratio,
                                              double overlap_radius, std::uint64_t seed);

}  // namespace parereg::geom
