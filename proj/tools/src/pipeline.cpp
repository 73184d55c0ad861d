#include "parereg/app/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "parereg/error.hpp"
#include "parereg/geom/io.hpp"
#include "parereg/matching/matching.hpp"

namespace parereg::app {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::feature: return "feature";
    case EstimatorKind::ransac: return "ransac";
    case EstimatorKind::lgr: return "lgr";
  }
  return "unknown";
}

EstimatorKind estimator_from_string(const std::string& name) {
  if (name == "feature") return EstimatorKind::feature;
  if (name == "ransac") return EstimatorKind::ransac;
  if (name == "lgr") return EstimatorKind::lgr;
  throw InputError("unknown estimator '" + name + "' (expected feature, ransac or lgr)");
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["pair"] = pair_id;
  j["estimator"] = estimator;
  j["seed"] = seed;
  j["transform"] = geom::to_json(final_hypothesis.transform);
  j["hypothesis"] = estimator::to_json(selected);
  j["refined"] = estimator::to_json(final_hypothesis);
  j["refinement_skipped"] = final_hypothesis.refinement_skipped;
  j["counts"] = {{"superpoints_p", superpoints_p},
                 {"superpoints_q", superpoints_q},
                 {"coarse_matches", coarse_matches},
                 {"correspondences", correspondences.size()}};
  if (metrics) {
    j["metrics"] = {{"ir", metrics->ir},
                    {"rmse", metrics->rmse},
                    {"re_deg", metrics->re_deg},
                    {"te_m", metrics->te_m}};
  } else {
    j["metrics"] = nullptr;
  }
  j["checks"] = nlohmann::json::object();
  for (const auto& [name, ok] : checks) j["checks"][name] = ok;
  j["timing_ms"] = {{"backbone", timing.backbone_ms},
                    {"coarse_matching", timing.coarse_matching_ms},
                    {"hypothesis", timing.hypothesis_ms},
                    {"total", timing.total_ms}};
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError(std::string(name) + ": " + e.what());
  } catch (const DegenerateError& e) {
    throw DegenerateError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

std::pair<estimator::Hypothesis, estimator::Hypothesis> estimate(
    const estimator::CorrespondenceSet& corrs, EstimatorKind kind,
    const estimator::EstimatorConfig& config, std::uint64_t seed) {
  estimator::Hypothesis selected;
  switch (kind) {
    case EstimatorKind::feature: selected = estimator::propose_and_select(corrs, config); break;
    case EstimatorKind::ransac: selected = estimator::ransac(corrs, config, seed); break;
    case EstimatorKind::lgr: selected = estimator::lgr(corrs, config); break;
  }
  return {selected, estimator::refine(selected, corrs, config)};
}

eval::PairMetrics pair_metrics(const estimator::CorrespondenceSet& predicted,
                               const geom::RigidTransform& estimate, const geom::PointCloud& p,
                               const geom::PointCloud& q, const GroundTruth& gt,
                               const eval::MetricThresholds& thresholds) {
  eval::PairMetrics m;
  m.ir = eval::inlier_ratio(predicted.source, predicted.target, gt.transform, thresholds.inlier_radius);
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  if (gt.correspondences.empty()) {
    for (const auto& x : p) {
      src.push_back(x);
      dst.push_back(gt.transform.apply(x));
    }
  } else {
    for (const auto& c : gt.correspondences) {
      if (c.x >= p.size() || c.y >= q.size()) throw InputError("ground-truth pair index out of range");
      src.push_back(p[c.x]);
      dst.push_back(q[c.y]);
    }
  }
  m.rmse = eval::rmse(src, dst, estimate);
  m.re_deg = eval::rotation_error_deg(estimate.r, gt.transform.r);
  m.te_m = eval::translation_error(estimate.t, gt.transform.t);
  return m;
}

namespace {

bool close(const vn::Matrix<double>& a, const vn::Matrix<double>& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() <= tol * scale;
}

void sanity_checks(RunReport& report, const Model& model, const AppConfig& config,
                   const geom::PointCloud& p, const conv::FeaturePyramid<double>& fp,
                   const conv::FeaturePyramid<double>& fq, const matching::MatchResult& matches,
                   std::uint64_t seed) {
  constexpr double kTol = 1e-6;
  Rng rng(seed ^ 0x5a17u);
  geom::RigidTransform motion;
  motion.r = geom::random_rotation(rng);
  motion.t = geom::random_unit_vector(rng);
  const auto moved = conv::backbone_forward(model.backbone, geom::apply_transform(p, motion));

  report.checks.emplace_back("superpoint_descriptors_invariant",
                             close(fp.superpoint_descriptors, moved.superpoint_descriptors, kTol));
  report.checks.emplace_back("point_descriptors_invariant",
                             close(fp.point_descriptors, moved.point_descriptors, kTol));
  bool equivariant = fp.point_features.size() == moved.point_features.size();
  const Eigen::Matrix3d rt = motion.r.matrix().transpose();
  for (std::size_t i = 0; equivariant && i < fp.point_features.size(); ++i) {
    equivariant = close(fp.point_features[i] * rt, moved.point_features[i], kTol);
  }
  report.checks.emplace_back("point_features_equivariant", equivariant);

  const auto again = matching::match_pyramids(model.matching, moved, fq, config.matching);
  bool same = again.points.size() == matches.points.size() &&
              again.superpoints.size() == matches.superpoints.size();
  for (std::size_t i = 0; same && i < again.points.size(); ++i) {
    same = again.points[i].x == matches.points[i].x && again.points[i].y == matches.points[i].y;
  }
  report.checks.emplace_back("matches_invariant", same);

  const double det = report.final_hypothesis.transform.r.matrix().determinant();
  report.checks.emplace_back("proper_rotation", std::abs(det - 1.0) < 1e-9);
}

}  // namespace

RunReport register_clouds(const Model& model, const AppConfig& config, const geom::PointCloud& p,
                          const geom::PointCloud& q, const std::optional<GroundTruth>& gt,
                          const RegisterOptions& options) {
  RunReport report;
  report.pair_id = options.pair_id;
  report.estimator = to_string(options.estimator);
  report.seed = options.seed;
  const auto start = Clock::now();

  auto t0 = Clock::now();
  const auto [fp, fq] = stage("backbone", [&] {
    return std::pair{conv::backbone_forward(model.backbone, p),
                     conv::backbone_forward(model.backbone, q)};
  });
  report.timing.backbone_ms = ms_since(t0);
  report.superpoints_p = fp.levels[3].size();
  report.superpoints_q = fq.levels[3].size();

  t0 = Clock::now();
  const auto matches = stage("matching", [&] {
    return matching::match_pyramids(model.matching, fp, fq, config.matching);
  });
  report.timing.coarse_matching_ms = ms_since(t0);
  report.coarse_matches = matches.superpoints.size();

  report.correspondences = estimator::correspondences_from_matches<double>(
      fp.levels[1], fq.levels[1], matches.points, fp.point_features, fq.point_features);
  for (const auto& m : matches.points) {
    report.correspondence_indices.push_back({m.x, m.y});
    report.correspondence_scores.push_back(m.score);
  }

  t0 = Clock::now();
  std::tie(report.selected, report.final_hypothesis) = stage("estimator", [&] {
    return estimate(report.correspondences, options.estimator, config.estimator, options.seed);
  });
  report.timing.hypothesis_ms = ms_since(t0);

  if (gt) {
    report.metrics = stage("metrics", [&] {
      return pair_metrics(report.correspondences, report.final_hypothesis.transform, p, q, *gt,
                          config.thresholds);
    });
  }
  if (options.sanity) {
    stage("sanity", [&] {
      sanity_checks(report, model, config, p, fp, fq, matches, options.seed);
      return 0;
    });
  }
  report.timing.total_ms = ms_since(start);
  return report;
}

RunReport register_oracle(const Scene& scene, const AppConfig& config, const RegisterOptions& options) {
  RunReport report;
  report.pair_id = options.pair_id;
  report.estimator = to_string(options.estimator);
  report.seed = options.seed;
  const auto start = Clock::now();

  auto t0 = Clock::now();
  report.correspondences = stage("oracle matching", [&] {
    return oracle_correspondences(scene, config.matching.fine, config.benchmark.inlier_ratio,
                                  2.0 * config.estimator.acceptance_radius, options.seed,
                                  &report.correspondence_indices);
  });
  report.correspondence_scores.assign(report.correspondences.size(), 1.0);
  report.timing.coarse_matching_ms = ms_since(t0);

  t0 = Clock::now();
  std::tie(report.selected, report.final_hypothesis) = stage("estimator", [&] {
    return estimate(report.correspondences, options.estimator, config.estimator, options.seed);
  });
  report.timing.hypothesis_ms = ms_since(t0);

  report.metrics = stage("metrics", [&] {
    return pair_metrics(report.correspondences, report.final_hypothesis.transform, scene.p, scene.q,
                        GroundTruth{scene.gt, scene.correspondences}, config.thresholds);
  });
  report.timing.total_ms = ms_since(start);
  return report;
}

}  // namespace parereg::app
