#include "parereg/estimator/svd3.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "parereg/error.hpp"

namespace parereg::estimator {

SymmetricEigen3 jacobi_eigen3(const Mat3& input, int max_sweeps, double tolerance) {
  Mat3 a = 0.5 * (input + input.transpose());
  Mat3 v = Mat3::Identity();
  const double scale = a.norm();
  constexpr std::array<std::array<int, 2>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const double off = std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
    if (off <= tolerance * scale) break;
    for (const auto& [p, q] : kPairs) {
      const double apq = a(p, q);
      if (apq == 0.0) continue;
      // Symmetric Schur decomposition of the (p, q) 2×2 block.
      const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
      const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = t * c;
      for (int k = 0; k < 3; ++k) {
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = c * akp - s * akq;
        a(k, q) = s * akp + c * akq;
      }
      for (int k = 0; k < 3; ++k) {
        const double apk = a(p, k);
        const double aqk = a(q, k);
        a(p, k) = c * apk - s * aqk;
        a(q, k) = s * apk + c * aqk;
      }
      for (int k = 0; k < 3; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return a(i, i) > a(j, j) || (a(i, i) == a(j, j) && i < j);
  });
  SymmetricEigen3 out;
  for (int i = 0; i < 3; ++i) {
    out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {

// Any unit vector orthogonal to the unit vector `a`.
Vec3 orthogonal_unit(const Vec3& a) {
  const Vec3 axis = std::abs(a.x()) <= std::abs(a.y()) && std::abs(a.x()) <= std::abs(a.z())
                        ? Vec3::UnitX()
                        : (std::abs(a.y()) <= std::abs(a.z()) ? Vec3::UnitY() : Vec3::UnitZ());
  return a.cross(axis).normalized();
}

// One-sided Jacobi on the columns of H·V. Working on H instead of HᵀH keeps
// the small singular directions accurate when H is close to rank two.
Mat3 right_singular_vectors(const Mat3& h) {
  Mat3 w = h;
  Mat3 v = Mat3::Identity();
  constexpr std::array<std::array<int, 2>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (const auto& [p, q] : kPairs) {
      const double alpha = w.col(p).squaredNorm();
      const double beta = w.col(q).squaredNorm();
      const double gamma = w.col(p).dot(w.col(q));
      if (gamma == 0.0 || std::abs(gamma) <= 1e-16 * std::sqrt(alpha * beta)) continue;
      rotated = true;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = t * c;
      for (Mat3* m : {&w, &v}) {
        const Vec3 mp = m->col(p);
        const Vec3 mq = m->col(q);
        m->col(p) = c * mp - s * mq;
        m->col(q) = s * mp + c * mq;
      }
    }
    if (!rotated) break;
  }
  std::array<int, 3> order{0, 1, 2};
  const Vec3 norms(w.col(0).norm(), w.col(1).norm(), w.col(2).norm());
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return norms(i) > norms(j) || (norms(i) == norms(j) && i < j); });
  Mat3 out;
  for (int i = 0; i < 3; ++i) out.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

Svd3 svd3(const Mat3& h) {
  Svd3 out;
  out.v = right_singular_vectors(h);
  if (out.v.determinant() < 0.0) out.v.col(2) = -out.v.col(2);

  const Vec3 hv0 = h * out.v.col(0);
  const Vec3 hv1 = h * out.v.col(1);
  const double s0 = hv0.norm();
  Vec3 u0 = s0 > 0.0 ? Vec3(hv0 / s0) : Vec3::UnitX();
  Vec3 u1 = hv1 - u0.dot(hv1) * u0;
  const double n1 = u1.norm();
  u1 = n1 > 1e-300 ? Vec3(u1 / n1) : orthogonal_unit(u0);
  const Vec3 u2 = u0.cross(u1);

  out.u.col(0) = u0;
  out.u.col(1) = u1;
  out.u.col(2) = u2;
  out.s = Vec3(s0, u1.dot(hv1), u2.dot(h * out.v.col(2)));
  return out;
}

geom::Rotation kabsch_rotation(const Mat3& h, const char* what) {
  const Svd3 d = svd3(h);
  if (!(d.s(0) > 0.0) || !(d.s(1) >= kRankTolerance * d.s(0))) throw DegenerateError(what);
  // U and V are both proper, so V·Uᵀ already is the sign-corrected solution.
  return geom::Rotation::from_matrix(d.v * d.u.transpose());
}

}  // namespace parereg::estimator
