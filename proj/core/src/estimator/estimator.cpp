#include "parereg/estimator/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "parereg/error.hpp"
#include "parereg/geom/io.hpp"
#include "parereg/random.hpp"

namespace parereg::estimator {

void CorrespondenceSet::validate() const {
  const std::size_t n = source.size();
  if (n == 0) throw InputError("empty correspondence set");
  if (target.size() != n) throw InputError("source and target counts differ");
  if (!weights.empty() && weights.size() != n) throw InputError("weights do not match pairs");
  if (source_features.size() != target_features.size() ||
      (!source_features.empty() && source_features.size() != n)) {
    throw InputError("features do not match pairs");
  }
  if (!patches.empty() && patches.size() != n) throw InputError("patch ids do not match pairs");
  for (std::size_t i = 0; i < n; ++i) {
    if (!source[i].allFinite() || !target[i].allFinite()) {
      throw InputError("non-finite coordinate in correspondence " + std::to_string(i));
    }
  }
}

std::string to_string(HypothesisSource source) {
  switch (source) {
    case HypothesisSource::feature: return "feature";
    case HypothesisSource::ransac: return "ransac";
    case HypothesisSource::lgr: return "lgr";
    case HypothesisSource::refined: return "refined";
  }
  return "unknown";
}

nlohmann::json to_json(const Hypothesis& h) {
  nlohmann::json j = geom::to_json(h.transform);
  j["inliers"] = h.inlier_count;
  j["source"] = to_string(h.source);
  return j;
}

EstimatorConfig EstimatorConfig::indoor() { return EstimatorConfig{}; }

EstimatorConfig EstimatorConfig::outdoor() {
  EstimatorConfig c;
  c.acceptance_radius = 0.6;
  return c;
}

void EstimatorConfig::validate() const {
  if (!(acceptance_radius > 0.0)) throw InputError("acceptance radius must be positive");
  if (sample_size < 3) throw InputError("sample size must be at least 3");
}

RigidTransform procrustes(std::span<const Vec3> src, std::span<const Vec3> dst,
                          std::span<const double> weights) {
  if (src.size() != dst.size()) throw InputError("procrustes: point counts differ");
  if (src.empty()) throw InputError("procrustes: no points");
  if (!weights.empty() && weights.size() != src.size()) {
    throw InputError("procrustes: weights do not match points");
  }
  double total = 0.0;
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0)) throw InputError("procrustes: negative weight");
    total += w;
    cs += w * src[i];
    cd += w * dst[i];
  }
  if (!(total > 0.0)) throw DegenerateError("degenerate configuration");
  cs /= total;
  cd /= total;
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    h += w * (src[i] - cs) * (dst[i] - cd).transpose();
  }
  RigidTransform out;
  out.r = kabsch_rotation(h, "degenerate configuration");
  out.t = cd - out.r * cs;
  return out;
}

Rotation fit_rotation_from_features(const Feature& fp, const Feature& fq) {
  if (fp.rows() != fq.rows()) throw InputError("feature channel counts differ");
  if (fp.rows() < 2) throw DegenerateError("underdetermined rotation");
  const Mat3 h = fp.transpose() * fq;
  return kabsch_rotation(h, "underdetermined rotation");
}

Hypothesis hypothesis_from_correspondence(const CorrespondenceSet& corrs, std::size_t index) {
  if (!corrs.has_features()) throw InputError("correspondences carry no features");
  if (index >= corrs.size()) throw InputError("correspondence index out of range");
  Hypothesis h;
  h.transform.r = fit_rotation_from_features(corrs.source_features[index],
                                             corrs.target_features[index]);
  h.transform.t = corrs.target[index] - h.transform.r * corrs.source[index];
  h.source = HypothesisSource::feature;
  return h;
}

std::vector<bool> inlier_mask(const RigidTransform& transform, const CorrespondenceSet& corrs,
                              double radius) {
  if (!(radius > 0.0)) throw InputError("acceptance radius must be positive");
  const double r2 = radius * radius;
  std::vector<bool> mask(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    mask[i] = geom::squared_distance(transform.apply(corrs.source[i]), corrs.target[i]) < r2;
  }
  return mask;
}

std::size_t count_inliers(const RigidTransform& transform, const CorrespondenceSet& corrs,
                          double radius) {
  const auto mask = inlier_mask(transform, corrs, radius);
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

Hypothesis propose_and_select(const CorrespondenceSet& corrs, const EstimatorConfig& config) {
  corrs.validate();
  config.validate();
  if (!corrs.has_features()) throw InputError("correspondences carry no features");
  const std::size_t n = std::min(corrs.size(), config.budget);
  std::optional<Hypothesis> best;
  for (std::size_t i = 0; i < n; ++i) {
    Hypothesis h;
    try {
      h = hypothesis_from_correspondence(corrs, i);
    } catch (const DegenerateError&) {
      continue;
    }
    h.inlier_count = count_inliers(h.transform, corrs, config.acceptance_radius);
    if (!best || h.inlier_count > best->inlier_count) best = h;
  }
  if (!best) throw DegenerateError("no valid hypothesis");
  return *best;
}

Hypothesis refine(const Hypothesis& h, const CorrespondenceSet& corrs, const EstimatorConfig& config) {
  corrs.validate();
  config.validate();
  Hypothesis current = h;
  current.inlier_count = count_inliers(h.transform, corrs, config.acceptance_radius);
  auto mask = inlier_mask(h.transform, corrs, config.acceptance_radius);
  if (current.inlier_count < 3) {
    Hypothesis out = h;
    out.refinement_skipped = true;
    return out;
  }
  current.source = HypothesisSource::refined;
  for (std::size_t it = 0; it < config.refine_iterations; ++it) {
    std::vector<Vec3> src;
    std::vector<Vec3> dst;
    std::vector<double> w;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      if (!mask[i]) continue;
      src.push_back(corrs.source[i]);
      dst.push_back(corrs.target[i]);
      if (config.weighted_refinement) w.push_back(corrs.weight(i));
    }
    RigidTransform fit;
    try {
      fit = procrustes(src, dst, w);
    } catch (const DegenerateError&) {
      break;
    }
    auto next_mask = inlier_mask(fit, corrs, config.acceptance_radius);
    const auto next_count =
        static_cast<std::size_t>(std::count(next_mask.begin(), next_mask.end(), true));
    if (next_count < current.inlier_count) break;
    current.transform = fit;
    current.inlier_count = next_count;
    if (next_mask == mask) break;
    mask = std::move(next_mask);
  }
  return current;
}

Hypothesis ransac(const CorrespondenceSet& corrs, const EstimatorConfig& config, std::uint64_t seed) {
  corrs.validate();
  config.validate();
  const std::size_t k = config.sample_size;
  if (corrs.size() < k) {
    throw InputError("ransac needs at least " + std::to_string(k) + " correspondences");
  }
  Rng rng(seed);
  std::optional<Hypothesis> best;
  std::vector<std::size_t> sample;
  std::vector<Vec3> src(k);
  std::vector<Vec3> dst(k);
  for (std::size_t it = 0; it < config.budget; ++it) {
    sample.clear();
    while (sample.size() < k) {
      const auto idx = static_cast<std::size_t>(rng.below(corrs.size()));
      if (std::find(sample.begin(), sample.end(), idx) == sample.end()) sample.push_back(idx);
    }
    for (std::size_t j = 0; j < k; ++j) {
      src[j] = corrs.source[sample[j]];
      dst[j] = corrs.target[sample[j]];
    }
    Hypothesis h;
    h.source = HypothesisSource::ransac;
    try {
      h.transform = procrustes(src, dst);
    } catch (const DegenerateError&) {
      continue;
    }
    h.inlier_count = count_inliers(h.transform, corrs, config.acceptance_radius);
    if (!best || h.inlier_count > best->inlier_count) best = h;
  }
  if (!best) {
    // Every sample was degenerate; report identity with its support.
    Hypothesis h;
    h.source = HypothesisSource::ransac;
    h.inlier_count = count_inliers(h.transform, corrs, config.acceptance_radius);
    return h;
  }
  return *best;
}

Hypothesis lgr(const CorrespondenceSet& corrs, const EstimatorConfig& config) {
  corrs.validate();
  config.validate();
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    groups[corrs.patches.empty() ? 0 : corrs.patches[i]].push_back(i);
  }
  std::optional<Hypothesis> best;
  for (const auto& [patch, members] : groups) {
    if (members.size() < 3) continue;
    std::vector<Vec3> src;
    std::vector<Vec3> dst;
    std::vector<double> w;
    for (const auto i : members) {
      src.push_back(corrs.source[i]);
      dst.push_back(corrs.target[i]);
      w.push_back(corrs.weight(i));
    }
    Hypothesis h;
    h.source = HypothesisSource::lgr;
    try {
      h.transform = procrustes(src, dst, w);
    } catch (const DegenerateError&) {
      continue;
    }
    h.inlier_count = count_inliers(h.transform, corrs, config.acceptance_radius);
    if (!best || h.inlier_count > best->inlier_count) best = h;
  }
  if (!best) throw DegenerateError("no valid hypothesis");
  return *best;
}

template <typename S>
CorrespondenceSet correspondences_from_matches(const geom::PointCloud& p, const geom::PointCloud& q,
                                               std::span<const matching::PointMatch> matches,
                                               std::span<const vn::VectorFeature<S>> features_p,
                                               std::span<const vn::VectorFeature<S>> features_q) {
  const bool with_features = !features_p.empty() && !features_q.empty();
  if (with_features && (features_p.size() != p.size() || features_q.size() != q.size())) {
    throw InputError("features do not match clouds");
  }
  CorrespondenceSet out;
  for (const auto& m : matches) {
    if (m.x >= p.size() || m.y >= q.size()) throw InputError("match index out of range");
    out.source.push_back(p[m.x]);
    out.target.push_back(q[m.y]);
    out.weights.push_back(m.score);
    out.patches.push_back(m.patch);
    if (with_features) {
      out.source_features.push_back(features_p[m.x].template cast<double>());
      out.target_features.push_back(features_q[m.y].template cast<double>());
    }
  }
  return out;
}

template CorrespondenceSet correspondences_from_matches<float>(
    const geom::PointCloud&, const geom::PointCloud&, std::span<const matching::PointMatch>,
    std::span<const vn::VectorFeature<float>>, std::span<const vn::VectorFeature<float>>);
template CorrespondenceSet correspondences_from_matches<double>(
    const geom::PointCloud&, const geom::PointCloud&, std::span<const matching::PointMatch>,
    std::span<const vn::VectorFeature<double>>, std::span<const vn::VectorFeature<double>>);

}  // namespace parereg::estimator
