#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parereg/app/config.hpp"
#include "parereg/app/weights.hpp"
#include "parereg/estimator/estimator.hpp"
#include "parereg/eval/metrics.hpp"
#include "parereg/geom/point_cloud.hpp"

namespace parereg::app {

enum class EstimatorKind { feature, ransac, lgr };

std::string to_string(EstimatorKind kind);
/// Throws InputError for names other than feature, ransac and lgr.
EstimatorKind estimator_from_string(const std::string& name);

struct Timing {
  double backbone_ms = 0.0;
  double coarse_matching_ms = 0.0;
  double hypothesis_ms = 0.0;
  double total_ms = 0.0;
};

/// Ground truth available to a run: the transform and, optionally, the
/// twin index pairs used for RMSE (otherwise every source point is used).
struct GroundTruth {
  geom::RigidTransform transform;
  std::vector<IndexPair> correspondences;
};

struct RunReport {
  std::string pair_id;
  std::string estimator;
  std::uint64_t seed = 0;
  estimator::Hypothesis selected;  ///< before refinement
  estimator::Hypothesis final_hypothesis;
  estimator::CorrespondenceSet correspondences;
  /// Source/target point indices of each correspondence.
  std::vector<IndexPair> correspondence_indices;
  std::vector<double> correspondence_scores;
  std::size_t superpoints_p = 0;
  std::size_t superpoints_q = 0;
  std::size_t coarse_matches = 0;
  std::optional<eval::PairMetrics> metrics;
  /// Sanity-mode checks by name.
  std::vector<std::pair<std::string, bool>> checks;
  Timing timing;

  /// Report without the "timing_ms" block is deterministic.
  [[nodiscard]] nlohmann::json to_json() const;
};

struct RegisterOptions {
  EstimatorKind estimator = EstimatorKind::feature;
  std::uint64_t seed = 0;
  /// Extra invariance checks: the source cloud is re-run under a random
  /// rigid motion and descriptors and matches are compared.
  bool sanity = false;
  std::string pair_id = "pair";
};

/// Backbone on both clouds, coarse and fine matching, hypothesis estimation
/// and refinement. Errors are rethrown with the stage name prefixed.
RunReport register_clouds(const Model& model, const AppConfig& config, const geom::PointCloud& p,
                          const geom::PointCloud& q, const std::optional<GroundTruth>& gt,
                          const RegisterOptions& options);

/// Network bypassed: correspondences come from the scene's oracle features
/// (config.matching.fine pairs at config.benchmark.inlier_ratio).
RunReport register_oracle(const Scene& scene, const AppConfig& config, const RegisterOptions& options);

/// Per-pair metrics of an estimate against ground truth.
eval::PairMetrics pair_metrics(const estimator::CorrespondenceSet& predicted,
                               const geom::RigidTransform& estimate, const geom::PointCloud& p,
                               const geom::PointCloud& q, const GroundTruth& gt,
                               const eval::MetricThresholds& thresholds);

/// Runs the chosen estimator and then refine().
std::pair<estimator::Hypothesis, estimator::Hypothesis> estimate(
    const estimator::CorrespondenceSet& corrs, EstimatorKind kind,
    const estimator::EstimatorConfig& config, std::uint64_t seed);

}  // namespace parereg::app
