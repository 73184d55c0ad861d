#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/SVD>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "parereg/error.hpp"
#include "parereg/estimator/estimator.hpp"
#include "parereg/estimator/svd3.hpp"

using namespace parereg;
using namespace parereg::estimator;
using geom::Mat3;

namespace {

Vec3 random_vec(Rng& rng, double scale = 1.0) { return scale * Vec3(rng.normal(), rng.normal(), rng.normal()); }

RigidTransform random_transform(Rng& rng) { return {geom::random_rotation(rng), random_vec(rng)}; }

Feature random_feature(Eigen::Index c, Rng& rng) {
  Feature f(c, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  return f;
}

// Independent Kabsch via Eigen's SVD: argmin over proper R of Σ‖R·a − b‖²
// for H = Σ a bᵀ.
Mat3 eigen_kabsch(const Mat3& h) {
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixV() * d * svd.matrixU().transpose();
}

double angle(const Mat3& a, const Mat3& b) {
  return geom::geodesic_angle(geom::Rotation::from_matrix(a, 1e-6), geom::Rotation::from_matrix(b, 1e-6));
}

// n pairs: the first `inliers` follow `gt` exactly with exact features, the
// rest are random.
CorrespondenceSet synthetic(const RigidTransform& gt, std::size_t n, std::size_t inliers, Rng& rng,
                            double noise = 0.0) {
  CorrespondenceSet c;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = random_vec(rng);
    const Feature f = random_feature(6, rng);
    c.source.push_back(p);
    c.source_features.push_back(f);
    if (i < inliers) {
      c.target.push_back(gt.apply(p) + random_vec(rng, noise));
      c.target_features.push_back(f * gt.r.matrix().transpose());
    } else {
      c.target.push_back(random_vec(rng, 3.0));
      c.target_features.push_back(random_feature(6, rng));
    }
  }
  return c;
}

}  // namespace

TEST(Svd3, ReconstructsWithProperFactors) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Mat3 h;
    for (int i = 0; i < 9; ++i) h.data()[i] = rng.normal();
    const auto s = svd3(h);
    EXPECT_LE((s.u * s.s.asDiagonal() * s.v.transpose() - h).norm(), 1e-12 * h.norm());
    EXPECT_NEAR(s.u.determinant(), 1.0, 1e-12);
    EXPECT_NEAR(s.v.determinant(), 1.0, 1e-12);
    EXPECT_GE(s.s(0), s.s(1));
    EXPECT_GE(s.s(1), std::abs(s.s(2)));
    EXPECT_GT(s.s(2) * h.determinant(), -1e-300);
    Eigen::JacobiSVD<Mat3> oracle(h);
    EXPECT_NEAR(std::abs(s.s(2)), oracle.singularValues()(2), 1e-12);
    EXPECT_NEAR(s.s(0), oracle.singularValues()(0), 1e-12);
  }
}

TEST(Svd3, JacobiEigenOfSymmetric) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Mat3 a;
    for (int i = 0; i < 9; ++i) a.data()[i] = rng.normal();
    a = (a + a.transpose()).eval();
    const auto e = jacobi_eigen3(a);
    EXPECT_LE((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - a).norm(), 1e-12 * a.norm());
    EXPECT_GE(e.values(0), e.values(1));
    EXPECT_GE(e.values(1), e.values(2));
  }
}

TEST(Svd3, KabschMatchesEigenOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Mat3 h;
    for (int i = 0; i < 9; ++i) h.data()[i] = rng.normal();
    EXPECT_LE((kabsch_rotation(h, "x").matrix() - eigen_kabsch(h)).norm(), 1e-12);
  }
  EXPECT_THROW(kabsch_rotation(Vec3(1, 2, 3) * Vec3(0, 1, 0).transpose(), "rank one"), DegenerateError);
}

TEST(Procrustes, IdentityAndRecovery) {
  Rng rng(4);
  std::vector<Vec3> src;
  for (int i = 0; i < 10; ++i) src.push_back(random_vec(rng));
  const auto id = procrustes(src, src);
  EXPECT_LE((id.r.matrix() - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LE(id.t.norm(), 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = random_transform(rng);
    std::vector<Vec3> dst;
    for (const auto& p : src) dst.push_back(gt.apply(p));
    const auto fit = procrustes(src, dst);
    EXPECT_LE(geom::geodesic_angle(fit.r, gt.r), 1e-9);
    EXPECT_LE((fit.t - gt.t).norm(), 1e-9);
  }
}

TEST(Procrustes, MirrorInputNeverYieldsReflection) {
  std::vector<Vec3> src{{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}, {0.5, 0.5, 0}};
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(Vec3(-p.x(), p.y(), p.z()));
  const auto fit = procrustes(src, dst);
  EXPECT_NEAR(fit.r.matrix().determinant(), 1.0, 1e-12);
}

TEST(Procrustes, DegenerateAndMalformedInputs) {
  std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  EXPECT_THROW(procrustes(line, line), DegenerateError);
  EXPECT_THROW(procrustes(std::vector<Vec3>{}, std::vector<Vec3>{}), InputError);
  std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(procrustes(line, two), InputError);
}

TEST(Procrustes, WeightedMatchesAugmentedOracle) {
  // Integer weights equal repeating each point that many times.
  Rng rng(5);
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  std::vector<double> w;
  std::vector<Vec3> rep_src;
  std::vector<Vec3> rep_dst;
  for (int i = 0; i < 12; ++i) {
    src.push_back(random_vec(rng));
    dst.push_back(random_vec(rng));
    w.push_back(static_cast<double>(1 + rng.below(4)));
    for (int k = 0; k < static_cast<int>(w.back()); ++k) {
      rep_src.push_back(src.back());
      rep_dst.push_back(dst.back());
    }
  }
  const auto a = procrustes(src, dst, w);
  const auto b = procrustes(rep_src, rep_dst);
  EXPECT_LE((a.r.matrix() - b.r.matrix()).norm(), 1e-12);
  EXPECT_LE((a.t - b.t).norm(), 1e-12);
}

TEST(Procrustes, OptimalAgainstRandomRotations) {
  Rng rng(6);
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  std::vector<double> w;
  const auto gt = random_transform(rng);
  for (int i = 0; i < 30; ++i) {
    src.push_back(random_vec(rng));
    dst.push_back(gt.apply(src.back()) + random_vec(rng, 0.3));
    w.push_back(rng.uniform(0.1, 2.0));
  }
  auto cost = [&](const RigidTransform& t) {
    double c = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) c += w[i] * (t.apply(src[i]) - dst[i]).squaredNorm();
    return c;
  };
  const auto fit = procrustes(src, dst, w);
  const double best = cost(fit);
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += w[i] * src[i];
    cd += w[i] * dst[i];
    total += w[i];
  }
  cs /= total;
  cd /= total;
  for (int probe = 0; probe < 1000; ++probe) {
    RigidTransform other;
    other.r = geom::random_rotation(rng);
    other.t = cd - other.r * cs;
    EXPECT_LE(best, cost(other) + 1e-12);
  }
}

TEST(FitRotation, IdentityRecoveryAndOracle) {
  Rng rng(7);
  const Feature f = random_feature(8, rng);
  EXPECT_LE((fit_rotation_from_features(f, f).matrix() - Mat3::Identity()).norm(), 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r0 = geom::random_rotation(rng);
    const Feature fp = random_feature(8, rng);
    EXPECT_LE(geom::geodesic_angle(fit_rotation_from_features(fp, fp * r0.matrix().transpose()), r0), 1e-9);

    Feature noisy = fp * r0.matrix().transpose();
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += 0.01 * rng.normal();
    const Mat3 fit = fit_rotation_from_features(fp, noisy).matrix();
    EXPECT_LE((fit - eigen_kabsch(fp.transpose() * noisy)).norm(), 1e-12);
    // Zero-centroid Procrustes on the rows, made zero-mean by adding negatives.
    std::vector<Vec3> a;
    std::vector<Vec3> b;
    for (Eigen::Index c = 0; c < fp.rows(); ++c) {
      a.push_back(fp.row(c).transpose());
      a.push_back(-fp.row(c).transpose());
      b.push_back(noisy.row(c).transpose());
      b.push_back(-noisy.row(c).transpose());
    }
    EXPECT_LE((fit - procrustes(a, b).r.matrix()).norm(), 1e-12);
  }
}

TEST(FitRotation, Equivariance) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Feature fp = random_feature(6, rng);
    const Feature fq = random_feature(6, rng);
    const Mat3 r1 = geom::random_rotation(rng).matrix();
    const Mat3 r2 = geom::random_rotation(rng).matrix();
    const Mat3 base = fit_rotation_from_features(fp, fq).matrix();
    const Mat3 moved = fit_rotation_from_features(fp * r1.transpose(), fq * r2.transpose()).matrix();
    EXPECT_LE(angle(moved, r2 * base * r1.transpose()), 1e-9);
  }
}

TEST(FitRotation, RankOneRejected) {
  Feature f(4, 3);
  for (int c = 0; c < 4; ++c) f.row(c) = (c + 1.0) * Eigen::RowVector3d(1, 2, 3);
  EXPECT_THROW(fit_rotation_from_features(f, f), DegenerateError);
}

TEST(Hypothesis, FromCorrespondence) {
  CorrespondenceSet c;
  c.source.push_back(Vec3::Zero());
  c.target.push_back(Vec3::Zero());
  Rng rng(9);
  const Feature f = random_feature(4, rng);
  c.source_features.push_back(f);
  c.target_features.push_back(f);
  const auto h = hypothesis_from_correspondence(c, 0);
  EXPECT_LE((h.transform.r.matrix() - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LE(h.transform.t.norm(), 1e-12);

  const auto gt = random_transform(rng);
  const auto s = synthetic(gt, 20, 20, rng);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto hi = hypothesis_from_correspondence(s, i);
    EXPECT_LE(geom::geodesic_angle(hi.transform.r, gt.r), 1e-9);
    EXPECT_LE((hi.transform.t - gt.t).norm(), 1e-9);
  }
  const auto j = to_json(hypothesis_from_correspondence(s, 0));
  EXPECT_EQ(j.at("r").size(), 9u);
  EXPECT_EQ(j.at("source"), "feature");
}

TEST(Inliers, CountsAgainstRecount) {
  Rng rng(10);
  const auto gt = random_transform(rng);
  const auto c = synthetic(gt, 50, 50, rng);
  EXPECT_EQ(count_inliers(gt, c, 0.1), 50u);
  RigidTransform far = gt;
  far.t += Vec3(1.0, 0, 0);
  EXPECT_EQ(count_inliers(far, c, 0.1), 0u);
  const auto noisy = synthetic(gt, 200, 120, rng, 0.06);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = random_transform(rng);
    const double radius = rng.uniform(0.05, 3.0);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i)
      if ((t.r.matrix() * noisy.source[i] + t.t - noisy.target[i]).norm() < radius) ++expected;
    EXPECT_EQ(count_inliers(t, noisy, radius), expected);
  }
  const auto mixed = count_inliers(gt, noisy, 0.1);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i)
    if ((gt.apply(noisy.source[i]) - noisy.target[i]).norm() < 0.1) ++expected;
  EXPECT_EQ(mixed, expected);
}

TEST(ProposeAndSelect, SixtyOfHundredInliers) {
  Rng rng(11);
  const auto gt = random_transform(rng);
  auto c = synthetic(gt, 100, 60, rng);
  const auto h = propose_and_select(c, EstimatorConfig{});
  EXPECT_LE(geom::geodesic_angle(h.transform.r, gt.r), 1e-9);
  EXPECT_LE((h.transform.t - gt.t).norm(), 1e-9);
  EXPECT_GE(h.inlier_count, 60u);
}

TEST(ProposeAndSelect, SingleCorrespondenceAndRankOne) {
  Rng rng(12);
  const auto gt = random_transform(rng);
  const auto one = synthetic(gt, 1, 1, rng);
  const auto h = propose_and_select(one, EstimatorConfig{});
  EXPECT_LE(geom::geodesic_angle(h.transform.r, hypothesis_from_correspondence(one, 0).transform.r), 0.0);
  EXPECT_EQ(h.inlier_count, 1u);

  auto flat = synthetic(gt, 5, 5, rng);
  for (auto& f : flat.source_features) f = Eigen::VectorXd::Ones(f.rows()) * Eigen::RowVector3d(1, 0, 0);
  EXPECT_THROW(propose_and_select(flat, EstimatorConfig{}), DegenerateError);
}

TEST(ProposeAndSelect, OrderInvariantUpToTies) {
  Rng rng(13);
  const auto gt = random_transform(rng);
  auto c = synthetic(gt, 80, 30, rng, 0.01);
  const auto base = propose_and_select(c, EstimatorConfig{});
  std::vector<std::size_t> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    CorrespondenceSet s;
    for (const auto i : perm) {
      s.source.push_back(c.source[i]);
      s.target.push_back(c.target[i]);
      s.source_features.push_back(c.source_features[i]);
      s.target_features.push_back(c.target_features[i]);
    }
    const auto h = propose_and_select(s, EstimatorConfig{});
    EXPECT_EQ(h.inlier_count, base.inlier_count);
    // Among equally supported hypotheses the lowest index wins.
    for (std::size_t i = 0; i < s.size(); ++i) {
      try {
        const auto hi = hypothesis_from_correspondence(s, i);
        if (count_inliers(hi.transform, s, 0.1) == h.inlier_count) {
          EXPECT_EQ(hi.transform.t, h.transform.t);
          break;
        }
      } catch (const DegenerateError&) {
      }
    }
  }
}

TEST(ProposeAndSelect, BudgetLimitsCandidates) {
  Rng rng(14);
  const auto gt = random_transform(rng);
  auto c = synthetic(gt, 50, 10, rng);
  std::rotate(c.source.begin(), c.source.begin() + 10, c.source.end());
  std::rotate(c.target.begin(), c.target.begin() + 10, c.target.end());
  std::rotate(c.source_features.begin(), c.source_features.begin() + 10, c.source_features.end());
  std::rotate(c.target_features.begin(), c.target_features.begin() + 10, c.target_features.end());
  EstimatorConfig cfg;
  cfg.budget = 40;
  EXPECT_GT(geom::geodesic_angle(propose_and_select(c, cfg).transform.r, gt.r), 1e-3);
  cfg.budget = 41;
  EXPECT_LE(geom::geodesic_angle(propose_and_select(c, cfg).transform.r, gt.r), 1e-9);
}

TEST(Refine, FixedPointOnNoiselessData) {
  Rng rng(15);
  const auto gt = random_transform(rng);
  const auto c = synthetic(gt, 40, 40, rng);
  Hypothesis h{gt, 0, HypothesisSource::feature, false};
  const auto r = refine(h, c, EstimatorConfig{});
  EXPECT_LE(geom::geodesic_angle(r.transform.r, gt.r), 1e-12);
  EXPECT_LE((r.transform.t - gt.t).norm(), 1e-12);
  EXPECT_EQ(r.inlier_count, 40u);
}

TEST(Refine, ImprovesPerturbedHypotheses) {
  Rng rng(16);
  int improved = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto gt = random_transform(rng);
    CorrespondenceSet c = synthetic(gt, 100, 70, rng, 0.005);
    RigidTransform start = gt;
    start.r = geom::Rotation::from_axis_angle(geom::random_unit_vector(rng), 2.0 * M_PI / 180.0) * gt.r;
    start.t += 0.05 * geom::random_unit_vector(rng);
    const double before = geom::geodesic_angle(start.r, gt.r);
    const auto r = refine({start, 0, HypothesisSource::feature, false}, c, EstimatorConfig{});
    if (r.refinement_skipped) continue;
    if (geom::geodesic_angle(r.transform.r, gt.r) < before) ++improved;
  }
  EXPECT_GE(improved, 95);
}

TEST(Refine, TooFewInliersIsSkipped) {
  Rng rng(17);
  const auto gt = random_transform(rng);
  const auto c = synthetic(gt, 20, 2, rng);
  Hypothesis h{gt, 7, HypothesisSource::feature, false};
  const auto r = refine(h, c, EstimatorConfig{});
  EXPECT_TRUE(r.refinement_skipped);
  EXPECT_EQ(r.transform, gt);
  EXPECT_EQ(r.inlier_count, 7u);
}

TEST(Ransac, RecoversCleanSetAndReproducible) {
  Rng rng(18);
  const auto gt = random_transform(rng);
  const auto c = synthetic(gt, 60, 60, rng);
  EstimatorConfig cfg;
  cfg.budget = 20;
  const auto h = refine(ransac(c, cfg, 3), c, cfg);
  EXPECT_LE(geom::geodesic_angle(h.transform.r, gt.r), 1e-6 * M_PI / 180.0);
  EXPECT_LE((h.transform.t - gt.t).norm(), 1e-6);

  const auto noisy = synthetic(gt, 100, 30, rng, 0.01);
  const auto a = ransac(noisy, cfg, 99);
  const auto b = ransac(noisy, cfg, 99);
  EXPECT_EQ(a.transform, b.transform);
  EXPECT_EQ(a.inlier_count, b.inlier_count);
  EXPECT_EQ(a.source, HypothesisSource::ransac);
}

TEST(Ransac, SingleSampleOnHardSetLosesToProposer) {
  Rng rng(19);
  int ransac_ok = 0;
  int feature_ok = 0;
  EstimatorConfig cfg;
  cfg.budget = 1;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto gt = random_transform(rng);
    auto c = synthetic(gt, 100, 10, rng, 0.005);
    // Shuffle so the first pair is an inlier about 10% of the time.
    for (std::size_t i = c.size(); i > 1; --i) {
      const std::size_t j = rng.below(i);
      std::swap(c.source[i - 1], c.source[j]);
      std::swap(c.target[i - 1], c.target[j]);
      std::swap(c.source_features[i - 1], c.source_features[j]);
      std::swap(c.target_features[i - 1], c.target_features[j]);
    }
    auto ok = [&](const Hypothesis& h) {
      return geom::geodesic_angle(h.transform.r, gt.r) < 15 * M_PI / 180 && (h.transform.t - gt.t).norm() < 0.3;
    };
    ransac_ok += ok(ransac(c, cfg, seed));
    feature_ok += ok(propose_and_select(c, cfg));
  }
  EXPECT_LT(ransac_ok, feature_ok);
  EXPECT_LT(ransac_ok, 20);
}

TEST(Lgr, PicksBestPatch) {
  Rng rng(20);
  const auto gt = random_transform(rng);
  auto c = synthetic(gt, 30, 10, rng);
  for (std::size_t i = 0; i < c.size(); ++i) c.patches.push_back(i / 10);
  const auto h = lgr(c, EstimatorConfig{});
  EXPECT_EQ(h.source, HypothesisSource::lgr);
  EXPECT_LE(geom::geodesic_angle(h.transform.r, gt.r), 1e-9);
  EXPECT_EQ(h.inlier_count, 10u);
  CorrespondenceSet tiny = synthetic(gt, 2, 2, rng);
  EXPECT_THROW(lgr(tiny, EstimatorConfig{}), DegenerateError);
}

TEST(CorrespondenceSet, ValidateRejectsRaggedInput) {
  CorrespondenceSet c;
  EXPECT_THROW(c.validate(), InputError);
  c.source = {Vec3::Zero(), Vec3::Ones()};
  c.target = {Vec3::Zero()};
  EXPECT_THROW(c.validate(), InputError);
  c.target.push_back(Vec3::Ones());
  c.weights = {1.0};
  EXPECT_THROW(c.validate(), InputError);
}
