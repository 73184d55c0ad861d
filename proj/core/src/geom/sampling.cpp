#include "parereg/geom/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "parereg/error.hpp"
#include "parereg/geom/neighbors.hpp"

namespace parereg::geom {

namespace {

using VoxelKey = std::array<std::int64_t, 3>;

VoxelKey voxel_of(const Vec3& p, double voxel) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel))};
}

struct KeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ULL;
    return h;
  }
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw InputError("voxel size must be positive");
  require_non_empty(cloud);
  struct Accum {
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
  };
  std::map<VoxelKey, Accum> cells;
  for (const auto& p : cloud) {
    auto& a = cells[voxel_of(p, voxel)];
    a.sum += p;
    ++a.count;
  }
  std::vector<Vec3> out;
  out.reserve(cells.size());
  for (const auto& [key, a] : cells) out.emplace_back(a.sum / static_cast<double>(a.count));
  return PointCloud(std::move(out));
}

PointCloud radius_downsample(const PointCloud& cloud, double radius) {
  if (!(radius > 0.0)) throw InputError("radius must be positive");
  require_non_empty(cloud);

  // Seed selection; the hash grid only accelerates the "any seed within
  // radius" test, the decision itself is a plain distance comparison.
  const double r2 = radius * radius;
  std::unordered_map<VoxelKey, std::vector<std::size_t>, KeyHash> seed_cells;
  std::vector<Vec3> seeds;
  for (const auto& p : cloud) {
    const VoxelKey c = voxel_of(p, radius);
    bool covered = false;
    for (std::int64_t dx = -1; dx <= 1 && !covered; ++dx) {
      for (std::int64_t dy = -1; dy <= 1 && !covered; ++dy) {
        for (std::int64_t dz = -1; dz <= 1 && !covered; ++dz) {
          auto it = seed_cells.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == seed_cells.end()) continue;
          for (std::size_t s : it->second) {
            if (squared_distance(seeds[s], p) <= r2) {
              covered = true;
              break;
            }
          }
        }
      }
    }
    if (!covered) {
      seed_cells[c].push_back(seeds.size());
      seeds.push_back(p);
    }
  }

  const PointCloud seed_cloud(seeds);
  const auto owner = nearest_indices(seed_cloud, cloud);
  std::vector<Vec3> sums(seeds.size(), Vec3::Zero());
  std::vector<std::size_t> counts(seeds.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    sums[owner[i]] += cloud[i];
    ++counts[owner[i]];
  }
  std::vector<Vec3> out;
  out.reserve(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    // Every seed owns at least itself unless an exact duplicate precedes it,
    // which the covered test already rules out.
    out.emplace_back(sums[s] / static_cast<double>(counts[s]));
  }
  return PointCloud(std::move(out));
}

double overlap_ratio(const PointCloud& p, const PointCloud& q, const RigidTransform& p_to_q,
                     double radius) {
  if (!(radius > 0.0)) throw InputError("overlap radius must be positive");
  if (p.empty() || q.empty()) return 0.0;
  const PointCloud moved = apply_transform(p, p_to_q);
  const NeighborGraph nn = knn(q, moved, 1);
  const double r2 = radius * radius;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (nn[i][0].sq_distance <= r2) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

namespace {

// Keeps all but the `ratio` cap (at one end along a random direction) that
// overlaps `other` the most.
std::vector<std::size_t> crop_one(const PointCloud& cloud, const PointCloud& other,
                                  const RigidTransform& to_other, double ratio, double radius,
                                  Rng& rng) {
  const Vec3 dir = random_unit_vector(rng);
  const std::size_t n = cloud.size();
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = dir.dot(cloud[i]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proj[a] < proj[b] || (proj[a] == proj[b] && a < b);
  });

  const auto removed = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (removed >= n) throw DegenerateError("degenerate crop");

  const std::span<const std::size_t> all(order);
  const auto low_cap = all.first(removed);
  const auto high_cap = all.last(removed);
  const double low_overlap = overlap_ratio(subset(cloud, low_cap), other, to_other, radius);
  const double high_overlap = overlap_ratio(subset(cloud, high_cap), other, to_other, radius);

  std::vector<std::size_t> kept = high_overlap > low_overlap
                                      ? std::vector<std::size_t>(order.begin(), order.end() - removed)
                                      : std::vector<std::size_t>(order.begin() + removed, order.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

CropIndices random_crop_indices(const PointCloud& p, const PointCloud& q,
                                const RigidTransform& p_to_q, double ratio,
                                double overlap_radius, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("crop ratio must lie in (0, 1)");
  require_non_empty(p);
  require_non_empty(q);
  Rng rng(seed);
  CropIndices out;
  out.p = crop_one(p, q, p_to_q, ratio, overlap_radius, rng);
  out.q = crop_one(q, p, p_to_q.inverse(), ratio, overlap_radius, rng);
  return out;
}

std::pair<PointCloud, PointCloud> random_crop(const PointCloud& p, const PointCloud& q,
                                              const RigidTransform& p_to_q, double ratio,
                                              double overlap_radius, std::uint64_t seed) {
  const CropIndices idx = random_crop_indices(p, q, p_to_q, ratio, overlap_radius, seed);
  return {subset(p, idx.p), subset(q, idx.q)};
}

}  // namespace parereg::geom
