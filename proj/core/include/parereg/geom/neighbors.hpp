#pragma once

#include <cstddef>
#include <vector>

#include "parereg/geom/point_cloud.hpp"

namespace parereg::geom {

struct Neighbor {
  std::size_t index;
  double sq_distance;

  bool operator==(const Neighbor&) const = default;
};

/// For each query, up to k reference indices sorted by ascending distance,
/// ties broken by lower index.
struct NeighborGraph {
  std::vector<std::vector<Neighbor>> rows;

  [[nodiscard]] std::size_t size() const { return rows.size(); }
  const std::vector<Neighbor>& operator[](std::size_t i) const { return rows[i]; }
};

enum class KnnBackend {
  automatic,   ///< exhaustive up to kExhaustiveLimit reference points, grid above
  exhaustive,
  grid,
};

inline constexpr std::size_t kExhaustiveLimit = 2000;

/// Exact k nearest neighbours of every query point in `reference`.
/// Both backends return identical graphs.
NeighborGraph knn(const PointCloud& reference, const PointCloud& queries, std::size_t k,
                  KnnBackend backend = KnnBackend::automatic);

/// Index of the nearest reference point for every query.
std::vector<std::size_t> nearest_indices(const PointCloud& reference, const PointCloud& queries);

/// Dense points partitioned by nearest node (superpoint).
struct NodeGrouping {
  std::vector<std::vector<std::size_t>> groups;  ///< node → dense indices, ascending
  std::vector<std::size_t> node_of;              ///< dense index → node

  [[nodiscard]] std::size_t node_count() const { return groups.size(); }
};

NodeGrouping point_to_node_group(const PointCloud& dense, const PointCloud& nodes);

}  // namespace parereg::geom
