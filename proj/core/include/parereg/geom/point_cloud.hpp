#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace parereg::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered list of 3D points. Coordinates are always finite.
class PointCloud {
 public:
  PointCloud() = default;

  /// Throws InputError on a non-finite coordinate.
  explicit PointCloud(std::vector<Vec3> points);

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] bool empty() const { return points_.empty(); }

  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  [[nodiscard]] std::span<const Vec3> points() const { return points_; }

  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  void push_back(const Vec3& p);
  void reserve(std::size_t n) { points_.reserve(n); }

  [[nodiscard]] Vec3 centroid() const;

  bool operator==(const PointCloud& other) const { return points_ == other.points_; }

 private:
  std::vector<Vec3> points_;
};

/// Points at the given indices, in the given order.
PointCloud subset(const PointCloud& cloud, std::span<const std::size_t> indices);

/// Throws InputError("empty cloud") if the cloud has no points.
void require_non_empty(const PointCloud& cloud);

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace parereg::geom
