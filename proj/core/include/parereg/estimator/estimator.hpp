#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "parereg/estimator/svd3.hpp"
#include "parereg/geom/transform.hpp"
#include "parereg/matching/matching.hpp"
#include "parereg/vn/vector_neuron.hpp"

namespace parereg::estimator {

using geom::RigidTransform;
using geom::Rotation;
using Feature = vn::VectorFeature<double>;

/// Matched point pairs with optional weights, per-pair equivariant features
/// and per-pair patch ids. Optional vectors are either empty or one entry
/// per pair.
struct CorrespondenceSet {
  std::vector<Vec3> source;
  std::vector<Vec3> target;
  std::vector<double> weights;
  std::vector<Feature> source_features;
  std::vector<Feature> target_features;
  std::vector<std::size_t> patches;

  [[nodiscard]] std::size_t size() const { return source.size(); }
  [[nodiscard]] bool has_features() const { return !source_features.empty(); }
  [[nodiscard]] double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

  /// Throws InputError on empty sets, ragged optional vectors or non-finite
  /// coordinates.
  void validate() const;
};

enum class HypothesisSource { feature, ransac, lgr, refined };

std::string to_string(HypothesisSource source);

struct Hypothesis {
  RigidTransform transform;
  std::size_t inlier_count = 0;
  HypothesisSource source = HypothesisSource::feature;
  /// Set by refine() when fewer than three inliers left nothing to fit.
  bool refinement_skipped = false;
};

/// {"r": [9, row-major], "t": [3], "inliers": n, "source": "..."}
nlohmann::json to_json(const Hypothesis& h);

struct EstimatorConfig {
  double acceptance_radius = 0.1;  ///< τ_d (m)
  std::size_t refine_iterations = 5;
  std::size_t sample_size = 3;
  /// Hypotheses generated: RANSAC iterations, or the number of leading
  /// correspondences the feature proposer turns into hypotheses.
  std::size_t budget = 1000;
  /// Weight the refinement fits with the correspondence weights.
  bool weighted_refinement = false;

  static EstimatorConfig indoor();
  static EstimatorConfig outdoor();  ///< τ_d = 0.6 m

  void validate() const;
};

/// Weighted least-squares rigid fit src → dst (empty `weights` = uniform).
/// Throws DegenerateError("degenerate configuration") when the centred
/// cross-covariance has rank < 2.
RigidTransform procrustes(std::span<const Vec3> src, std::span<const Vec3> dst,
                          std::span<const double> weights = {});

/// Rotation taking the rows of `fp` onto the rows of `fq`.
/// Throws DegenerateError("underdetermined rotation") for rank < 2.
Rotation fit_rotation_from_features(const Feature& fp, const Feature& fq);

/// Rotation from the attached features of pair `index`, t = q − R·p.
Hypothesis hypothesis_from_correspondence(const CorrespondenceSet& corrs, std::size_t index);

/// Pairs with ‖R·p + t − q‖ < radius (Euclidean, not squared).
std::vector<bool> inlier_mask(const RigidTransform& transform, const CorrespondenceSet& corrs,
                              double radius);
std::size_t count_inliers(const RigidTransform& transform, const CorrespondenceSet& corrs,
                          double radius);

/// One hypothesis per correspondence (the first `budget` of them), skipping
/// degenerate fits; returns the one with most inliers, lowest index on ties.
/// Throws DegenerateError("no valid hypothesis") when every fit fails.
Hypothesis propose_and_select(const CorrespondenceSet& corrs, const EstimatorConfig& config);

/// Re-fits on the current inlier set up to `refine_iterations` times. Stops
/// early when the inlier count would drop or the set stops changing.
/// Fewer than three inliers: returns `h` with refinement_skipped set.
Hypothesis refine(const Hypothesis& h, const CorrespondenceSet& corrs, const EstimatorConfig& config);

/// `budget` random minimal samples; best inlier count kept, first wins ties.
Hypothesis ransac(const CorrespondenceSet& corrs, const EstimatorConfig& config, std::uint64_t seed);

/// One weighted fit per patch id (patches with ≥ 3 pairs), best inlier count
/// selected. Throws DegenerateError("no valid hypothesis") if none fits.
Hypothesis lgr(const CorrespondenceSet& corrs, const EstimatorConfig& config);

/// Builds pairs from point matches; scores become weights, patch ids are
/// kept. Features are attached when both feature lists are non-empty.
template <typename S>
CorrespondenceSet correspondences_from_matches(const geom::PointCloud& p, const geom::PointCloud& q,
                                               std::span<const matching::PointMatch> matches,
                                               std::span<const vn::VectorFeature<S>> features_p = {},
                                               std::span<const vn::VectorFeature<S>> features_q = {});

}  // namespace parereg::estimator
