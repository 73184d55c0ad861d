#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "parereg/geom/transform.hpp"

namespace parereg::eval {

using geom::Vec3;

struct MetricThresholds {
  double inlier_radius = 0.1;    ///< τ_ir (m)
  double fmr = 0.05;             ///< τ_fmr
  double rmse = 0.2;             ///< τ_rr (m)
  double rotation_deg = 15.0;    ///< τ_r
  double translation = 0.3;      ///< τ_t (m)

  static MetricThresholds indoor();
  static MetricThresholds outdoor();  ///< 5°, 2 m

  void validate() const;
};

/// Fraction of pairs with ‖R_gt·p + t_gt − q‖ < radius. Throws InputError
/// on an empty set.
double inlier_ratio(std::span<const Vec3> source, std::span<const Vec3> target,
                    const geom::RigidTransform& gt, double radius);

/// Fraction of pair ratios strictly above `threshold`.
double feature_matching_recall(std::span<const double> inlier_ratios, double threshold);

/// sqrt(mean ‖T_est(p) − q‖²) over ground-truth pairs (p, q).
double rmse(std::span<const Vec3> source, std::span<const Vec3> target,
            const geom::RigidTransform& estimate);

/// Fraction of RMSE values strictly below `threshold`.
double registration_recall(std::span<const double> rmses, double threshold);

/// arccos((tr(R_estᵀR_gt) − 1) / 2) in degrees, argument clamped to [−1, 1].
double rotation_error_deg(const geom::Rotation& estimate, const geom::Rotation& gt);

double translation_error(const Vec3& estimate, const Vec3& gt);

struct PoseError {
  double re_deg;
  double te;
};

/// Fraction with RE < τ_r and TE < τ_t (both strict).
double transformation_recall(std::span<const PoseError> errors, double max_re_deg, double max_te);

struct PairMetrics {
  double ir = 0.0;
  double rmse = 0.0;
  double re_deg = 0.0;
  double te_m = 0.0;
};

/// Mean RE/TE cover only pairs that pass the RMSE criterion and are empty
/// when none does.
struct AggregateMetrics {
  double fmr = 0.0;
  double rr = 0.0;
  double tr = 0.0;
  std::optional<double> mean_re;
  std::optional<double> mean_te;
};

AggregateMetrics aggregate(const std::map<std::string, PairMetrics>& pairs,
                           const MetricThresholds& thresholds);

/// {"pairs": {id: {ir, rmse, re_deg, te_m}}, "aggregate": {fmr, rr, tr, mean_re, mean_te}}
nlohmann::json metrics_json(const std::map<std::string, PairMetrics>& pairs,
                            const AggregateMetrics& agg);

/// "pair,ir,rmse,re_deg,te_m", one row per pair in id order.
std::string pairs_csv(const std::map<std::string, PairMetrics>& pairs);

/// "fmr,rr,tr,mean_re,mean_te" and one row; empty means are left blank.
std::string aggregate_csv(const AggregateMetrics& agg);

}  // namespace parereg::eval
