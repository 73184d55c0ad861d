#include "parereg/app/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>

#include "parereg/error.hpp"
#include "parereg/geom/sampling.hpp"
#include "parereg/random.hpp"

namespace parereg::app {

std::string to_string(SceneGenerator g) {
  switch (g) {
    case SceneGenerator::plane_grid: return "plane-grid";
    case SceneGenerator::box_room: return "box-room";
    case SceneGenerator::random_surface: return "random-surface";
  }
  return "unknown";
}

SceneGenerator scene_generator_from_string(const std::string& name) {
  if (name == "plane-grid") return SceneGenerator::plane_grid;
  if (name == "box-room") return SceneGenerator::box_room;
  if (name == "random-surface") return SceneGenerator::random_surface;
  throw InputError("unknown scene generator '" + name +
                   "' (expected plane-grid, box-room or random-surface)");
}

void SceneSpec::validate() const {
  if (points == 0) throw InputError("scene.points must be positive");
  if (!(extent > 0.0)) throw InputError("scene.extent must be positive");
  if (overlap && !(*overlap > 0.0 && *overlap <= 1.0)) {
    throw InputError("scene.overlap must lie in (0, 1]");
  }
  if (!(crop_ratio >= 0.0 && crop_ratio < 1.0)) throw InputError("scene.crop_ratio must lie in [0, 1)");
  if (!(overlap_radius > 0.0)) throw InputError("scene.overlap_radius must be positive");
  if (!(noise >= 0.0) || !(oracle_noise >= 0.0)) throw InputError("noise must be non-negative");
  if (!(max_translation >= 0.0)) throw InputError("scene.max_translation must be non-negative");
  if (oracle_channels < 2) throw InputError("scene.oracle_channels must be at least 2");
}

namespace {

using geom::Vec3;

struct Primitive {
  enum class Kind { rectangle, sphere, cylinder } kind;
  Vec3 origin;      // rectangle corner, sphere centre, cylinder base centre
  Vec3 u, v;        // rectangle edges
  double radius = 0.0;
  double height = 0.0;

  [[nodiscard]] double area() const {
    switch (kind) {
      case Kind::rectangle: return u.cross(v).norm();
      case Kind::sphere: return 4.0 * std::numbers::pi * radius * radius;
      case Kind::cylinder: return 2.0 * std::numbers::pi * radius * height;
    }
    return 0.0;
  }

  Vec3 sample(Rng& rng) const {
    switch (kind) {
      case Kind::rectangle: return origin + rng.uniform() * u + rng.uniform() * v;
      case Kind::sphere: return origin + radius * geom::random_unit_vector(rng);
      case Kind::cylinder: {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        return origin + Vec3(radius * std::cos(a), radius * std::sin(a), rng.uniform() * height);
      }
    }
    return origin;
  }
};

Primitive rect(const Vec3& o, const Vec3& u, const Vec3& v) {
  return {Primitive::Kind::rectangle, o, u, v};
}

// Axis-aligned box standing on z = 0: four sides and the top.
void add_box(std::vector<Primitive>& out, double cx, double cy, double sx, double sy, double sz) {
  const Vec3 o(cx - sx / 2, cy - sy / 2, 0.0);
  const Vec3 ex(sx, 0, 0);
  const Vec3 ey(0, sy, 0);
  const Vec3 ez(0, 0, sz);
  out.push_back(rect(o, ex, ez));
  out.push_back(rect(o + ey, ex, ez));
  out.push_back(rect(o, ey, ez));
  out.push_back(rect(o + ex, ey, ez));
  out.push_back(rect(o + ez, ex, ey));
}

std::vector<Primitive> build_primitives(SceneGenerator generator, double e, Rng& rng) {
  std::vector<Primitive> prims;
  const double h = e / 2;
  switch (generator) {
    case SceneGenerator::plane_grid: {
      prims.push_back(rect(Vec3(-h, -h, 0), Vec3(e, 0, 0), Vec3(0, e, 0)));
      const int g = 3;
      const double cell = e / g;
      for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
          const double cx = -h + (i + 0.5) * cell;
          const double cy = -h + (j + 0.5) * cell;
          add_box(prims, cx, cy, 0.3 * cell, 0.3 * cell, rng.uniform(0.1, 0.4) * e);
        }
      }
      break;
    }
    case SceneGenerator::box_room: {
      const double w = e;
      const double d = 0.75 * e;
      const double z = 0.8 * e;
      const Vec3 o(-w / 2, -d / 2, 0);
      prims.push_back(rect(o, Vec3(w, 0, 0), Vec3(0, d, 0)));
      prims.push_back(rect(o, Vec3(w, 0, 0), Vec3(0, 0, z)));
      prims.push_back(rect(o + Vec3(0, d, 0), Vec3(w, 0, 0), Vec3(0, 0, z)));
      prims.push_back(rect(o, Vec3(0, d, 0), Vec3(0, 0, z)));
      prims.push_back(rect(o + Vec3(w, 0, 0), Vec3(0, d, 0), Vec3(0, 0, z)));
      for (int b = 0; b < 3; ++b) {
        const double sx = rng.uniform(0.1, 0.25) * e;
        const double sy = rng.uniform(0.1, 0.25) * e;
        add_box(prims, rng.uniform(-w / 2 + sx, w / 2 - sx), rng.uniform(-d / 2 + sy, d / 2 - sy),
                sx, sy, rng.uniform(0.1, 0.3) * e);
      }
      break;
    }
    case SceneGenerator::random_surface: {
      prims.push_back(rect(Vec3(-h, -h, 0), Vec3(e, 0, 0), Vec3(0, e, 0)));
      for (int b = 0; b < 3; ++b) {
        add_box(prims, rng.uniform(-0.35, 0.35) * e, rng.uniform(-0.35, 0.35) * e,
                rng.uniform(0.08, 0.2) * e, rng.uniform(0.08, 0.2) * e, rng.uniform(0.05, 0.3) * e);
      }
      for (int s = 0; s < 2; ++s) {
        const double r = rng.uniform(0.04, 0.1) * e;
        prims.push_back({Primitive::Kind::sphere,
                         Vec3(rng.uniform(-0.35, 0.35) * e, rng.uniform(-0.35, 0.35) * e, r),
                         Vec3::Zero(), Vec3::Zero(), r, 0.0});
      }
      for (int c = 0; c < 2; ++c) {
        prims.push_back({Primitive::Kind::cylinder,
                         Vec3(rng.uniform(-0.35, 0.35) * e, rng.uniform(-0.35, 0.35) * e, 0.0),
                         Vec3::Zero(), Vec3::Zero(), rng.uniform(0.03, 0.08) * e,
                         rng.uniform(0.1, 0.4) * e});
      }
      break;
    }
  }
  return prims;
}

}  // namespace

geom::PointCloud sample_surface(SceneGenerator generator, std::size_t points, double extent,
                                std::uint64_t seed) {
  if (points == 0) throw InputError("scene.points must be positive");
  Rng rng(seed);
  const auto prims = build_primitives(generator, extent, rng);
  std::vector<double> cdf;
  double total = 0.0;
  for (const auto& p : prims) {
    total += p.area();
    cdf.push_back(total);
  }
  std::vector<Vec3> out;
  out.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double a = rng.uniform() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), a);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), prims.size() - 1);
    out.push_back(prims[k].sample(rng));
  }
  return geom::PointCloud(std::move(out));
}

namespace {

struct CropChoice {
  geom::CropIndices indices;
  double ratio = 0.0;
  double overlap = 1.0;
};

CropChoice no_crop(std::size_t n) {
  CropChoice c;
  for (std::size_t i = 0; i < n; ++i) {
    c.indices.p.push_back(i);
    c.indices.q.push_back(i);
  }
  return c;
}

double measure(const geom::PointCloud& base, const geom::PointCloud& moved,
               const geom::CropIndices& idx, const geom::RigidTransform& gt, double radius) {
  return geom::overlap_ratio(geom::subset(base, idx.p), geom::subset(moved, idx.q), gt, radius);
}

}  // namespace

Scene gen_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::uint64_t surface_seed = rng.next();
  const geom::PointCloud base = sample_surface(spec.generator, spec.points, spec.extent, surface_seed);

  Scene scene;
  scene.gt.r = geom::random_rotation(rng);
  scene.gt.t = spec.max_translation * std::cbrt(rng.uniform()) * geom::random_unit_vector(rng);
  const geom::PointCloud moved = geom::apply_transform(base, scene.gt);
  const std::size_t n = base.size();

  constexpr int kAttempts = 8;
  constexpr double kTolerance = 0.05;
  std::vector<std::uint64_t> crop_seeds;
  for (int a = 0; a < kAttempts; ++a) crop_seeds.push_back(rng.next());

  CropChoice choice;
  if (spec.overlap) {
    const double target = *spec.overlap;
    if (target >= 1.0) {
      choice = no_crop(n);
      choice.overlap = measure(base, moved, choice.indices, scene.gt, spec.overlap_radius);
    } else {
      bool found = false;
      auto consider = [&](double ratio, std::uint64_t s) -> std::optional<double> {
        geom::CropIndices idx;
        try {
          idx = geom::random_crop_indices(base, moved, scene.gt, ratio, spec.overlap_radius, s);
        } catch (const DegenerateError&) {
          return std::nullopt;
        }
        const double ov = measure(base, moved, idx, scene.gt, spec.overlap_radius);
        if (!found || std::abs(ov - target) < std::abs(choice.overlap - target)) {
          choice = {std::move(idx), ratio, ov};
          found = true;
        }
        return ov;
      };
      // Overlap falls roughly monotonically with the crop ratio for a fixed
      // crop seed, so each seed gets a bisection over the ratio.
      for (const auto s : crop_seeds) {
        double lo = 0.0;
        double hi = 0.95;
        for (int step = 0; step < 12; ++step) {
          const double mid = 0.5 * (lo + hi);
          const auto ov = consider(mid, s);
          if (!ov || *ov < target) {
            hi = mid;
          } else {
            lo = mid;
          }
          if (found && std::abs(choice.overlap - target) < 0.2 * kTolerance) break;
        }
        if (found && std::abs(choice.overlap - target) < 0.2 * kTolerance) break;
      }
      if (!found || std::abs(choice.overlap - target) > kTolerance) {
        throw InputError("overlap target " + std::to_string(target) +
                         " unreachable; closest achieved " + std::to_string(choice.overlap));
      }
    }
  } else if (spec.crop_ratio > 0.0) {
    choice.indices = geom::random_crop_indices(base, moved, scene.gt, spec.crop_ratio,
                                               spec.overlap_radius, crop_seeds.front());
    choice.ratio = spec.crop_ratio;
    choice.overlap = measure(base, moved, choice.indices, scene.gt, spec.overlap_radius);
  } else {
    choice = no_crop(n);
    choice.overlap = measure(base, moved, choice.indices, scene.gt, spec.overlap_radius);
  }
  scene.overlap = choice.overlap;
  scene.crop_ratio = choice.ratio;

  // Twins: the same original sample kept on both sides.
  std::vector<std::size_t> q_slot(n, n);
  for (std::size_t j = 0; j < choice.indices.q.size(); ++j) q_slot[choice.indices.q[j]] = j;
  for (std::size_t i = 0; i < choice.indices.p.size(); ++i) {
    const std::size_t j = q_slot[choice.indices.p[i]];
    if (j < n) scene.correspondences.push_back({i, j});
  }

  const std::uint64_t noise_seed = rng.next();
  const std::uint64_t feature_seed = rng.next();
  Rng noise(noise_seed);
  auto jitter = [&](const geom::PointCloud& cloud, std::span<const std::size_t> keep) {
    std::vector<Vec3> pts;
    pts.reserve(keep.size());
    for (const auto i : keep) {
      Vec3 p = cloud[i];
      if (spec.noise > 0.0) {
        for (int d = 0; d < 3; ++d) p(d) += noise.normal(0.0, spec.noise);
      }
      pts.push_back(p);
    }
    return geom::PointCloud(std::move(pts));
  };
  scene.p = jitter(base, choice.indices.p);
  scene.q = jitter(moved, choice.indices.q);

  if (spec.oracle_features) {
    Rng frng(feature_seed);
    const Eigen::Index c = spec.oracle_channels;
    std::vector<estimator::Feature> base_features(n, estimator::Feature(c, 3));
    for (auto& f : base_features) {
      for (Eigen::Index r = 0; r < c; ++r) {
        for (Eigen::Index k = 0; k < 3; ++k) f(r, k) = frng.normal();
      }
    }
    const Eigen::Matrix3d rt = scene.gt.r.matrix().transpose();
    for (const auto i : choice.indices.p) scene.features_p.push_back(base_features[i]);
    for (const auto i : choice.indices.q) {
      estimator::Feature g = base_features[i] * rt;
      if (spec.oracle_noise > 0.0) {
        for (Eigen::Index r = 0; r < c; ++r) {
          for (Eigen::Index k = 0; k < 3; ++k) g(r, k) += frng.normal(0.0, spec.oracle_noise);
        }
      }
      scene.features_q.push_back(std::move(g));
    }
  }
  return scene;
}

estimator::CorrespondenceSet oracle_correspondences(const Scene& scene, std::size_t count,
                                                    double inlier_ratio, double outlier_margin,
                                                    std::uint64_t seed,
                                                    std::vector<IndexPair>* indices) {
  if (count == 0) throw InputError("correspondence count must be positive");
  if (!(inlier_ratio >= 0.0 && inlier_ratio <= 1.0)) throw InputError("inlier ratio must lie in [0, 1]");
  if (scene.features_p.empty()) throw InputError("scene was generated without oracle features");
  const auto inliers = static_cast<std::size_t>(std::llround(inlier_ratio * static_cast<double>(count)));
  if (inliers > scene.correspondences.size()) {
    throw InputError("scene has only " + std::to_string(scene.correspondences.size()) +
                     " ground-truth pairs, " + std::to_string(inliers) + " requested");
  }
  Rng rng(seed);
  // Partial Fisher-Yates over the ground-truth pairs.
  std::vector<IndexPair> twins = scene.correspondences;
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < inliers; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(twins.size() - i));
    std::swap(twins[i], twins[j]);
    pairs.push_back(twins[i]);
  }
  const double margin2 = outlier_margin * outlier_margin;
  std::size_t attempts = 0;
  while (pairs.size() < count) {
    if (++attempts > 1000 * count) throw DegenerateError("cannot draw enough outliers");
    const auto x = static_cast<std::size_t>(rng.below(scene.p.size()));
    const auto y = static_cast<std::size_t>(rng.below(scene.q.size()));
    if (geom::squared_distance(scene.gt.apply(scene.p[x]), scene.q[y]) < margin2) continue;
    pairs.push_back({x, y});
  }
  for (std::size_t i = pairs.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(pairs[i - 1], pairs[j]);
  }

  estimator::CorrespondenceSet out;
  for (const auto& pr : pairs) {
    out.source.push_back(scene.p[pr.x]);
    out.target.push_back(scene.q[pr.y]);
    out.source_features.push_back(scene.features_p[pr.x]);
    out.target_features.push_back(scene.features_q[pr.y]);
  }
  if (indices) *indices = std::move(pairs);
  return out;
}

}  // namespace parereg::app
