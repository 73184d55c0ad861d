#include "parereg/eval/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "parereg/error.hpp"

namespace parereg::eval {

void LossConfig::validate() const {
  if (!(alpha > 0.0) || !(alpha < beta)) throw InputError("loss margins need 0 < alpha < beta");
  if (!(positive_radius < negative_radius)) throw InputError("loss radii need d_p < d_n");
}

namespace {

void check_indices(const MatrixX& z, const VectorX& sp, const VectorX& sq,
                   std::span<const IndexPair> positives, std::span<const std::size_t> up,
                   std::span<const std::size_t> uq) {
  if (sp.size() != z.rows() || sq.size() != z.cols()) {
    throw InputError("saliency sizes do not match the assignment matrix");
  }
  const auto rows = static_cast<std::size_t>(z.rows());
  const auto cols = static_cast<std::size_t>(z.cols());
  for (const auto& p : positives) {
    if (p.x >= rows || p.y >= cols) throw InputError("positive index out of range");
  }
  for (const auto x : up) {
    if (x >= rows) throw InputError("unmatched source index out of range");
  }
  for (const auto y : uq) {
    if (y >= cols) throw InputError("unmatched target index out of range");
  }
}

// −log(max(v, ε)) and its derivative in v (zero when clamped).
struct ClampedLog {
  double value;
  double derivative;
  bool clamped;
};

ClampedLog neg_log(double v) {
  if (v < kLogClamp) return {-std::log(kLogClamp), 0.0, true};
  return {-std::log(v), -1.0 / v, false};
}

}  // namespace

PointMatchingLoss point_matching_loss(const MatrixX& z, const VectorX& sigma_p,
                                      const VectorX& sigma_q, std::span<const IndexPair> positives,
                                      std::span<const std::size_t> unmatched_p,
                                      std::span<const std::size_t> unmatched_q) {
  check_indices(z, sigma_p, sigma_q, positives, unmatched_p, unmatched_q);
  PointMatchingLoss out;
  out.grad_z = MatrixX::Zero(z.rows(), z.cols());
  out.grad_sigma_p = VectorX::Zero(sigma_p.size());
  out.grad_sigma_q = VectorX::Zero(sigma_q.size());

  if (!positives.empty()) {
    const double w = 1.0 / static_cast<double>(positives.size());
    for (const auto& p : positives) {
      const auto x = static_cast<Eigen::Index>(p.x);
      const auto y = static_cast<Eigen::Index>(p.y);
      const ClampedLog l = neg_log(z(x, y));
      out.value += w * l.value;
      out.grad_z(x, y) += w * l.derivative;
      out.clamped += l.clamped ? 1 : 0;
    }
  }
  auto unmatched = [&](std::span<const std::size_t> set, const VectorX& sigma, VectorX& grad) {
    if (set.empty()) return;
    const double w = 0.5 / static_cast<double>(set.size());
    for (const auto i : set) {
      const auto k = static_cast<Eigen::Index>(i);
      const ClampedLog l = neg_log(1.0 - sigma(k));
      out.value += w * l.value;
      grad(k) -= w * l.derivative;
      out.clamped += l.clamped ? 1 : 0;
    }
  };
  unmatched(unmatched_p, sigma_p, out.grad_sigma_p);
  unmatched(unmatched_q, sigma_q, out.grad_sigma_q);
  return out;
}

namespace {

double sigmoid(double s) {
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

}  // namespace

PointMatchingLogitLoss point_matching_loss_from_logits(const MatrixX& m, const VectorX& logit_p,
                                                       const VectorX& logit_q,
                                                       std::span<const IndexPair> positives,
                                                       std::span<const std::size_t> unmatched_p,
                                                       std::span<const std::size_t> unmatched_q) {
  check_indices(m, logit_p, logit_q, positives, unmatched_p, unmatched_q);
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  MatrixX a(rows, cols);
  MatrixX b(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto e = (m.row(i).array() - m.row(i).maxCoeff()).exp();
    a.row(i) = e / e.sum();
  }
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto e = (m.col(j).array() - m.col(j).maxCoeff()).exp();
    b.col(j) = e / e.sum();
  }
  const VectorX sp = logit_p.unaryExpr([](double s) { return sigmoid(s); });
  const VectorX sq = logit_q.unaryExpr([](double s) { return sigmoid(s); });
  const MatrixX z = (sp * sq.transpose()).cwiseProduct(a).cwiseProduct(b);

  // With c_xy the (unclamped) positive weight, r and k its row and column sums:
  //   ∂L/∂M = −2c + diag(r)·A + B·diag(k)
  //   ∂L/∂s_P = −r ⊙ (1 − σ_P) + (unmatched term) σ_P
  const PointMatchingLoss direct =
      point_matching_loss(z, sp, sq, positives, unmatched_p, unmatched_q);
  PointMatchingLogitLoss out;
  out.value = direct.value;
  out.clamped = direct.clamped;

  MatrixX c = MatrixX::Zero(rows, cols);
  if (!positives.empty()) {
    const double w = 1.0 / static_cast<double>(positives.size());
    for (const auto& p : positives) {
      const auto x = static_cast<Eigen::Index>(p.x);
      const auto y = static_cast<Eigen::Index>(p.y);
      if (z(x, y) >= kLogClamp) c(x, y) += w;
    }
  }
  const VectorX r = c.rowwise().sum();
  const VectorX k = c.colwise().sum().transpose();
  out.grad_m = -2.0 * c + r.asDiagonal() * a + b * k.asDiagonal();
  out.grad_logit_p = -r.cwiseProduct((1.0 - sp.array()).matrix()) +
                     direct.grad_sigma_p.cwiseProduct(sp.cwiseProduct((1.0 - sp.array()).matrix()));
  out.grad_logit_q = -k.cwiseProduct((1.0 - sq.array()).matrix()) +
                     direct.grad_sigma_q.cwiseProduct(sq.cwiseProduct((1.0 - sq.array()).matrix()));
  return out;
}

ContrastiveLoss contrastive_rotation_loss(std::span<const Feature> features_p,
                                          std::span<const Feature> features_q,
                                          const geom::Rotation& r_gt,
                                          std::span<const IndexPair> positives,
                                          std::span<const IndexPair> negatives,
                                          const LossConfig& config) {
  config.validate();
  Eigen::Index channels = -1;
  for (const auto* set : {&features_p, &features_q}) {
    for (const auto& f : *set) {
      if (channels < 0) channels = f.rows();
      if (f.rows() != channels) throw InputError("contrastive loss: channel counts differ");
    }
  }
  ContrastiveLoss out;
  out.grad_p.reserve(features_p.size());
  out.grad_q.reserve(features_q.size());
  for (const auto& f : features_p) out.grad_p.push_back(Feature::Zero(f.rows(), 3));
  for (const auto& f : features_q) out.grad_q.push_back(Feature::Zero(f.rows(), 3));
  out.kink_margin = std::numeric_limits<double>::infinity();
  if (channels <= 0) return out;

  const Eigen::Matrix3d rm = r_gt.matrix();
  auto accumulate = [&](std::span<const IndexPair> pairs, bool positive) {
    if (pairs.empty()) return;
    const double w = 1.0 / static_cast<double>(pairs.size() * static_cast<std::size_t>(channels));
    for (const auto& pr : pairs) {
      if (pr.x >= features_p.size() || pr.y >= features_q.size()) {
        throw InputError("contrastive loss: pair index out of range");
      }
      const Feature diff = features_p[pr.x] * rm.transpose() - features_q[pr.y];
      for (Eigen::Index c = 0; c < channels; ++c) {
        const double d = diff.row(c).squaredNorm();
        const double h = positive ? d - config.alpha : config.beta - d;
        out.kink_margin = std::min(out.kink_margin, std::abs(h));
        if (h <= 0.0) continue;
        out.value += w * h;
        // ∂D/∂f^P = 2·diff·R, ∂D/∂f^Q = −2·diff.
        const double sign = positive ? 1.0 : -1.0;
        out.grad_p[pr.x].row(c) += sign * w * 2.0 * diff.row(c) * rm;
        out.grad_q[pr.y].row(c) -= sign * w * 2.0 * diff.row(c);
      }
    }
  };
  accumulate(positives, true);
  accumulate(negatives, false);
  return out;
}

}  // namespace parereg::eval
