#pragma once

#include <span>
#include <vector>

#include "parereg/geom/transform.hpp"
#include "parereg/vn/vector_neuron.hpp"

namespace parereg::eval {

using Feature = vn::VectorFeature<double>;
using MatrixX = vn::Matrix<double>;
using VectorX = Eigen::VectorXd;

/// Hinge margins and the radii that decide positive / negative pairs.
/// The radii are not published values.
struct LossConfig {
  double alpha = 0.1;
  double beta = 1.4;
  double positive_radius = 0.05;  ///< d_p (m)
  double negative_radius = 0.10;  ///< d_n (m)

  void validate() const;
};

/// Floor applied inside every logarithm of the point matching loss.
inline constexpr double kLogClamp = 1e-12;

struct IndexPair {
  std::size_t x;
  std::size_t y;
};

struct PointMatchingLoss {
  double value = 0.0;
  MatrixX grad_z;          ///< ∂L/∂Z
  VectorX grad_sigma_p;    ///< ∂L/∂σ_P
  VectorX grad_sigma_q;    ///< ∂L/∂σ_Q
  std::size_t clamped = 0; ///< log arguments that hit kLogClamp
};

/// −mean_C log Z_xy − ½ mean_I log(1 − σ_x) − ½ mean_J log(1 − σ_y).
/// Empty sets contribute zero; clamped terms have zero gradient.
PointMatchingLoss point_matching_loss(const MatrixX& z, const VectorX& sigma_p,
                                      const VectorX& sigma_q, std::span<const IndexPair> positives,
                                      std::span<const std::size_t> unmatched_p,
                                      std::span<const std::size_t> unmatched_q);

struct PointMatchingLogitLoss {
  double value = 0.0;
  MatrixX grad_m;          ///< ∂L/∂M
  VectorX grad_logit_p;    ///< ∂L/∂s_P, σ = sigmoid(s)
  VectorX grad_logit_q;
  std::size_t clamped = 0;
};

/// Same loss with Z = σ_P σ_Qᵀ ⊙ rowsoftmax(M) ⊙ colsoftmax(M) built from the
/// matching matrix M and saliency logits, gradients chained back to them.
PointMatchingLogitLoss point_matching_loss_from_logits(const MatrixX& m, const VectorX& logit_p,
                                                       const VectorX& logit_q,
                                                       std::span<const IndexPair> positives,
                                                       std::span<const std::size_t> unmatched_p,
                                                       std::span<const std::size_t> unmatched_q);

struct ContrastiveLoss {
  double value = 0.0;
  std::vector<Feature> grad_p;
  std::vector<Feature> grad_q;
  /// Smallest |D − α| over positive and |β − D| over negative channels; a
  /// finite-difference probe with step below this sees no hinge switch.
  double kink_margin = 0.0;
};

/// Per-channel hinges on D = ‖f^P_c·R_gtᵀ − f^Q_c‖²: mean over positive
/// pairs and channels of [D − α]₊ plus the same mean of [β − D]₊ over
/// negatives.
ContrastiveLoss contrastive_rotation_loss(std::span<const Feature> features_p,
                                          std::span<const Feature> features_q,
                                          const geom::Rotation& r_gt,
                                          std::span<const IndexPair> positives,
                                          std::span<const IndexPair> negatives,
                                          const LossConfig& config);

}  // namespace parereg::eval
