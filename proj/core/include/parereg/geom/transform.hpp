#pragma once

#include <cstdint>

#include "parereg/geom/point_cloud.hpp"
#include "parereg/random.hpp"

namespace parereg::geom {

/// Proper rotation: mᵀm = I and det(m) = +1, both within 1e-6.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-6;

  Rotation() : m_(Mat3::Identity()) {}

  /// Throws InputError if `m` is not a proper rotation within `tol`.
  static Rotation from_matrix(const Mat3& m, double tol = kTolerance);
  /// Rotation by `angle` radians about `axis` (normalized internally).
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  /// Unit quaternion (w, x, y, z); normalized internally.
  static Rotation from_quaternion(double w, double x, double y, double z);

  [[nodiscard]] const Mat3& matrix() const { return m_; }
  [[nodiscard]] Rotation inverse() const { return Rotation(m_.transpose()); }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  bool operator==(const Rotation& other) const { return m_ == other.m_; }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// p ↦ r·p + t.
struct RigidTransform {
  Rotation r;
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return r.matrix() * p + t; }
  [[nodiscard]] RigidTransform inverse() const;

  bool operator==(const RigidTransform& other) const {
    return r == other.r && t == other.t;
  }
};

/// Applies t1 first, then t2.
RigidTransform compose(const RigidTransform& t2, const RigidTransform& t1);

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& transform);

/// Haar-uniform rotation from a unit quaternion (Shoemake's subgroup method).
Rotation random_rotation(Rng& rng);
Rotation random_rotation(std::uint64_t seed);

/// Uniform direction on the unit sphere.
Vec3 random_unit_vector(Rng& rng);

/// Angle of a⁻¹b in radians, computed with atan2 so that tiny angles keep
/// full relative precision.
double geodesic_angle(const Rotation& a, const Rotation& b);

}  // namespace parereg::geom
