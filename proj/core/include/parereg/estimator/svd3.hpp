#pragma once

#include "parereg/geom/point_cloud.hpp"
#include "parereg/geom/transform.hpp"

namespace parereg::estimator {

using geom::Mat3;
using geom::Vec3;

struct SymmetricEigen3 {
  Vec3 values;   ///< descending
  Mat3 vectors;  ///< columns, matching `values`
};

/// Cyclic Jacobi on a symmetric 3×3 matrix. Stops when the off-diagonal
/// Frobenius norm drops below `tolerance` · ‖A‖_F or after `max_sweeps`.
SymmetricEigen3 jacobi_eigen3(const Mat3& a, int max_sweeps = 30, double tolerance = 1e-14);

/// H = U·diag(s)·Vᵀ with U and V proper rotations and s sorted by
/// magnitude. s(0), s(1) ≥ 0; s(2) carries the sign of det(H).
struct Svd3 {
  Mat3 u;
  Vec3 s;
  Mat3 v;
};

/// One-sided Jacobi on H for V, then U from H·V (third column completed by
/// a cross product).
Svd3 svd3(const Mat3& h);

/// argmin over proper R of Σ‖R·a_i − b_i‖² for H = Σ a_i b_iᵀ:
/// R = V·diag(1, 1, det(VUᵀ))·Uᵀ. Throws DegenerateError(`what`) when
/// s(1) < 1e-9 · s(0).
geom::Rotation kabsch_rotation(const Mat3& h, const char* what);

inline constexpr double kRankTolerance = 1e-9;

}  // namespace parereg::estimator
