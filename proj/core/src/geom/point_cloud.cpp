#include "parereg/geom/point_cloud.hpp"

#include "parereg/error.hpp"

namespace parereg::geom {

namespace {

void check_finite(const Vec3& p) {
  if (!p.allFinite()) throw InputError("non-finite point coordinate");
}

}  // namespace

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  for (const auto& p : points_) check_finite(p);
}

void PointCloud::push_back(const Vec3& p) {
  check_finite(p);
  points_.push_back(p);
}

Vec3 PointCloud::centroid() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points_) sum += p;
  return points_.empty() ? sum : Vec3(sum / static_cast<double>(points_.size()));
}

PointCloud subset(const PointCloud& cloud, std::span<const std::size_t> indices) {
  std::vector<Vec3> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= cloud.size()) throw InputError("subset index out of range");
    out.push_back(cloud[i]);
  }
  return PointCloud(std::move(out));
}

void require_non_empty(const PointCloud& cloud) {
  if (cloud.empty()) throw InputError("empty cloud");
}

}  // namespace parereg::geom
