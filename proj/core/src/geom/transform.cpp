#include "parereg/geom/transform.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "parereg/error.hpp"

namespace parereg::geom {

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  if (!m.allFinite()) throw InputError("rotation has non-finite entries");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol) throw InputError("rotation is not orthonormal");
  if (std::abs(m.determinant() - 1.0) > tol) throw InputError("rotation determinant is not +1");
  return Rotation(m);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw InputError("rotation axis has zero length");
  return Rotation(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix());
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  if (!(q.norm() > 0.0)) throw InputError("zero quaternion");
  q.normalize();
  return Rotation(q.toRotationMatrix());
}

RigidTransform RigidTransform::inverse() const {
  const Rotation ri = r.inverse();
  return {ri, -(ri.matrix() * t)};
}

RigidTransform compose(const RigidTransform& t2, const RigidTransform& t1) {
  return {t2.r * t1.r, t2.r.matrix() * t1.t + t2.t};
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& transform) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(transform.apply(p));
  return PointCloud(std::move(out));
}

Rotation random_rotation(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2;
  const double t3 = 2.0 * std::numbers::pi * u3;
  return Rotation::from_quaternion(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2),
                                   b * std::sin(t3));
}

Rotation random_rotation(std::uint64_t seed) {
  Rng rng(seed);
  return random_rotation(rng);
}

Vec3 random_unit_vector(Rng& rng) {
  for (;;) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

double geodesic_angle(const Rotation& a, const Rotation& b) {
  const Mat3 rel = a.matrix().transpose() * b.matrix();
  const Vec3 skew(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double sin_theta = 0.5 * skew.norm();
  const double cos_theta = 0.5 * (rel.trace() - 1.0);
  return std::atan2(sin_theta, cos_theta);
}

}  // namespace parereg::geom
