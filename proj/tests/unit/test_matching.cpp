#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "parereg/conv/backbone.hpp"
#include "parereg/error.hpp"
#include "parereg/geom/transform.hpp"
#include "parereg/matching/matching.hpp"

using namespace parereg;
using matching::PointMatch;
using matching::PointMatches;
using M = vn::Matrix<double>;
using geom::PointCloud;
using geom::Vec3;

namespace {

M random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  return c;
}

matching::ContextConfig small_context() {
  matching::ContextConfig c;
  c.hidden = 8;
  c.out = 6;
  c.heads = 2;
  c.rounds = 2;
  c.bucket_width = 0.25;
  return c;
}

matching::MatchHeads<double> random_heads(Eigen::Index width, Rng& rng) {
  return {random_matrix(width, width, rng), random_matrix(1, width, rng), Eigen::VectorXd::Constant(1, 0.1)};
}

}  // namespace

TEST(Context, ZeroAttentionWeightsReduceToProjection) {
  Rng rng(1);
  auto params = matching::init_matching(small_context(), 5, 4, 2).context;
  for (auto* layers : {&params.self_layers, &params.cross_layers})
    for (auto& l : *layers) {
      l.wq.setZero();
      l.wk.setZero();
      l.wv.setZero();
      l.wo.setZero();
    }
  const M xp = random_matrix(4, 5, rng);
  const M xq = random_matrix(3, 5, rng);
  const auto [hp, hq] = matching::context_attention(params, xp, xq, random_cloud(4, rng), random_cloud(3, rng));
  for (Eigen::Index i = 0; i < xp.rows(); ++i) {
    Eigen::VectorXd e = params.out_proj.w * (params.in_proj.w * xp.row(i).transpose() + params.in_proj.b) +
                        params.out_proj.b;
    e.normalize();
    EXPECT_LE((hp.row(i).transpose() - e).norm(), 1e-14);
  }
  EXPECT_EQ(hq.rows(), 3);
}

TEST(Context, SingleSuperpointEachSide) {
  // softmax over one key is 1, so every attention update is wo·wv·h.
  Rng rng(3);
  const auto params = matching::init_matching(small_context(), 5, 4, 4).context;
  const M xp = random_matrix(1, 5, rng);
  const M xq = random_matrix(1, 5, rng);
  Eigen::VectorXd hp = params.in_proj.w * xp.row(0).transpose() + params.in_proj.b;
  Eigen::VectorXd hq = params.in_proj.w * xq.row(0).transpose() + params.in_proj.b;
  for (std::size_t r = 0; r < params.config.rounds; ++r) {
    const auto& s = params.self_layers[r];
    hp += s.wo * (s.wv * hp);
    hq += s.wo * (s.wv * hq);
    const auto& c = params.cross_layers[r];
    const Eigen::VectorXd to_p = c.wo * (c.wv * hq);
    const Eigen::VectorXd to_q = c.wo * (c.wv * hp);
    hp += to_p;
    hq += to_q;
  }
  Eigen::VectorXd ep = (params.out_proj.w * hp + params.out_proj.b).normalized();
  const auto [op, oq] = matching::context_attention(params, xp, xq, random_cloud(1, rng), random_cloud(1, rng));
  EXPECT_LE((op.row(0).transpose() - ep).norm(), 1e-12);
}

TEST(Context, RigidMotionOfCentresLeavesOutputUnchanged) {
  Rng rng(5);
  const auto params = matching::init_matching(small_context(), 5, 4, 6).context;
  const M xp = random_matrix(6, 5, rng);
  const M xq = random_matrix(5, 5, rng);
  const auto p = random_cloud(6, rng);
  const auto q = random_cloud(5, rng);
  const auto [a, b] = matching::context_attention(params, xp, xq, p, q);
  const geom::RigidTransform t{geom::random_rotation(rng), Vec3(3, 1, -2)};
  const auto [c, d] = matching::context_attention(params, xp, xq, geom::apply_transform(p, t),
                                                  geom::apply_transform(q, t));
  EXPECT_LE((a - c).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((b - d).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(matching::context_attention(params, xp, xq, q, q), InputError);
}

TEST(SuperpointMatch, IdenticalSingleFeature) {
  const M h = M::Constant(1, 4, 0.5);
  const auto m = matching::superpoint_match(h, h, 5);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].x, 0u);
  EXPECT_EQ(m[0].y, 0u);
  EXPECT_DOUBLE_EQ(m[0].score, 1.0);
}

TEST(SuperpointMatch, OrthogonalClustersNeverCross) {
  Rng rng(7);
  auto cluster = [&](int axis, int n) {
    M m(n, 3);
    for (int i = 0; i < n; ++i) {
      Eigen::RowVector3d v = Eigen::RowVector3d::Unit(axis) + 0.05 * Eigen::RowVector3d::Random();
      m.row(i) = v.normalized();
    }
    return m;
  };
  M hp(7, 3);
  hp << cluster(0, 4), cluster(1, 3);
  M hq(5, 3);
  hq << cluster(0, 2), cluster(1, 3);
  auto side = [](Eigen::Index i, Eigen::Index split) { return i < split ? 0 : 1; };
  const std::size_t within = 4 * 2 + 3 * 3;
  const auto m = matching::superpoint_match(hp, hq, within);
  ASSERT_EQ(m.size(), within);
  for (const auto& s : m) EXPECT_EQ(side(s.x, 4), side(s.y, 2));

  // Exhaustive scoring oracle of the dual-normalised similarity.
  M s(7, 5);
  for (Eigen::Index x = 0; x < 7; ++x)
    for (Eigen::Index y = 0; y < 5; ++y) s(x, y) = std::exp(-(hp.row(x) - hq.row(y)).squaredNorm());
  for (const auto& mt : m) {
    const auto x = static_cast<Eigen::Index>(mt.x);
    const auto y = static_cast<Eigen::Index>(mt.y);
    EXPECT_NEAR(mt.score, s(x, y) * s(x, y) / (s.row(x).sum() * s.col(y).sum()), 1e-15);
  }
  (void)rng;
}

TEST(SuperpointMatch, LargeCountReturnsAllDescending) {
  Rng rng(8);
  const M hp = random_matrix(3, 4, rng);
  const M hq = random_matrix(4, 4, rng);
  const auto m = matching::superpoint_match(hp, hq, 100);
  ASSERT_EQ(m.size(), 12u);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_GE(m[i - 1].score, m[i].score);
}

// The product-of-sums normalisation can move a row's argmax away from a
// mutual-max pair when the competing column has a small sum. The seeded
// trials below contain such a case; every entry is also checked against
// direct evaluation of the formula.
TEST(SuperpointMatch, DualNormalisationCanMoveMutualMaxArgmax) {
  Rng rng(9);
  int mutual = 0;
  int moved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const M hp = random_matrix(5, 3, rng);
    const M hq = random_matrix(6, 3, rng);
    M s(5, 6);
    for (Eigen::Index x = 0; x < 5; ++x)
      for (Eigen::Index y = 0; y < 6; ++y) s(x, y) = std::exp(-(hp.row(x) - hq.row(y)).squaredNorm());
    const M dn = matching::dual_normalized_similarity(hp, hq);
    for (Eigen::Index x = 0; x < 5; ++x)
      for (Eigen::Index y = 0; y < 6; ++y)
        EXPECT_NEAR(dn(x, y), s(x, y) * s(x, y) / (s.row(x).sum() * s.col(y).sum()), 1e-15);
    for (Eigen::Index x = 0; x < 5; ++x) {
      Eigen::Index y;
      s.row(x).maxCoeff(&y);
      Eigen::Index xc;
      s.col(y).maxCoeff(&xc);
      if (xc != x) continue;
      ++mutual;
      Eigen::Index y2;
      dn.row(x).maxCoeff(&y2);
      if (y2 != y) ++moved;
    }
  }
  EXPECT_GT(mutual, 0);
  EXPECT_GT(moved, 0);
}

TEST(PatchAssignment, OneByOneIsSaliencyProduct) {
  Rng rng(10);
  const auto heads = random_heads(4, rng);
  const M xp = random_matrix(1, 4, rng);
  const M xq = random_matrix(1, 4, rng);
  const auto a = matching::patch_assignment(heads, xp, xq);
  EXPECT_NEAR(a.z(0, 0), a.sigma_p(0) * a.sigma_q(0), 1e-15);
}

TEST(PatchAssignment, SaturatedSaliencyIsDualSoftmax) {
  Rng rng(11);
  auto heads = random_heads(4, rng);
  heads.ws.setZero();
  heads.ws_bias(0) = 1e3;
  const M xp = random_matrix(3, 4, rng);
  const M xq = random_matrix(2, 4, rng);
  const auto a = matching::patch_assignment(heads, xp, xq);
  EXPECT_TRUE((a.sigma_p.array() == 1.0).all());
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double row = std::exp(a.m(i, j)) / a.m.row(i).array().exp().sum();
      const double col = std::exp(a.m(i, j)) / a.m.col(j).array().exp().sum();
      EXPECT_NEAR(a.z(i, j), row * col, 1e-14);
    }
}

TEST(PatchAssignment, ThreeByThreeDirectFormula) {
  Rng rng(12);
  const auto heads = random_heads(5, rng);
  const M xp = random_matrix(3, 5, rng);
  const M xq = random_matrix(3, 5, rng);
  const auto a = matching::patch_assignment(heads, xp, xq);
  for (Eigen::Index i = 0; i < 3; ++i) {
    double row_sum = 0.0;
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double mij = (heads.wm * xp.row(i).transpose()).dot(heads.wm * xq.row(j).transpose()) / std::sqrt(5.0);
      EXPECT_NEAR(a.m(i, j), mij, 1e-12);
      auto sig = [&](const M& x, Eigen::Index r) {
        return 1.0 / (1.0 + std::exp(-(heads.ws.row(0).dot(x.row(r)) + heads.ws_bias(0))));
      };
      double rs = 0.0;
      double cs = 0.0;
      for (Eigen::Index k = 0; k < 3; ++k) {
        rs += std::exp(a.m(i, k));
        cs += std::exp(a.m(k, j));
      }
      const double z = sig(xp, i) * sig(xq, j) * std::exp(mij) / rs * std::exp(mij) / cs;
      EXPECT_NEAR(a.z(i, j), z, 1e-12);
      EXPECT_GE(a.z(i, j), 0.0);
      EXPECT_LE(a.z(i, j), 1.0);
      row_sum += std::exp(a.m(i, j)) / rs;
    }
    EXPECT_NEAR(row_sum, 1.0, 1e-14);
  }
}

TEST(PointMatch, EmptyGroupAndSmallPatches) {
  Rng rng(13);
  const auto heads = random_heads(4, rng);
  const M dp = random_matrix(5, 4, rng);
  const M dq = random_matrix(5, 4, rng);
  const std::vector<std::size_t> gp{0, 2};
  const std::vector<std::size_t> gq{1, 3, 4};
  EXPECT_TRUE(matching::point_match(heads, std::span<const std::size_t>{}, std::span<const std::size_t>(gq), dp, dq, 4, 0).empty());
  const auto all = matching::point_match(heads, std::span<const std::size_t>(gp), std::span<const std::size_t>(gq), dp, dq, 100, 7);
  ASSERT_EQ(all.size(), 6u);
  for (const auto& m : all) {
    EXPECT_EQ(m.patch, 7u);
    EXPECT_TRUE(m.x == 0 || m.x == 2);
  }
}

TEST(Select, FewerCandidatesThanRequested) {
  std::vector<PointMatches> patches{{{0, 0, 0.5, 0}, {1, 1, 0.2, 0}}, {{2, 2, 0.9, 1}}};
  const auto out = matching::select_correspondences(patches, 10);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].x, 2u);
  EXPECT_THROW(matching::select_correspondences(std::vector<PointMatches>{{}, {}}, 3), DegenerateError);
}

TEST(Select, TiesOrderedByPatchThenIndices) {
  std::vector<PointMatches> patches{{{4, 1, 0.5, 1}, {3, 2, 0.5, 1}}, {{9, 9, 0.5, 0}, {1, 5, 0.5, 1}}};
  const auto out = matching::select_correspondences(patches, 3);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], (PointMatch{9, 9, 0.5, 0}));
  EXPECT_EQ(out[1], (PointMatch{1, 5, 0.5, 1}));
  EXPECT_EQ(out[2], (PointMatch{3, 2, 0.5, 1}));
}

TEST(Select, MergedTopKEqualsSortAll) {
  Rng rng(14);
  std::vector<PointMatches> patches(12);
  PointMatches everything;
  for (std::size_t p = 0; p < patches.size(); ++p) {
    for (int i = 0; i < 20; ++i) {
      // Coarse scores so that ties actually occur.
      const double s = std::round(rng.uniform() * 20) / 20;
      PointMatch m{rng.below(30), rng.below(30), s, p};
      patches[p].push_back(m);
      everything.push_back(m);
    }
  }
  std::stable_sort(everything.begin(), everything.end(), [](const PointMatch& a, const PointMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.patch != b.patch) return a.patch < b.patch;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });
  everything.resize(50);
  EXPECT_EQ(matching::select_correspondences(patches, 50), everything);
}

TEST(MatchPyramids, InvariantUnderRigidMotionOfEitherCloud) {
  conv::BackboneConfig cfg;
  cfg.voxel = 0.08;
  cfg.k = 8;
  cfg.kernels = 3;
  cfg.stage_widths = {4, 6, 8};
  cfg.point_channels = 5;
  cfg.correlation_hidden = 4;
  cfg.blocks_per_stage = 1;
  const auto backbone = conv::init_backbone(cfg, 1, false);
  const auto params = matching::init_matching(small_context(), cfg.superpoint_descriptor_width(),
                                              cfg.point_descriptor_width(), 2);
  Rng rng(15);
  PointCloud p;
  for (int i = 0; i < 400; ++i) {
    const double x = rng.uniform(0, 1.5);
    const double y = rng.uniform(0, 1.5);
    p.push_back({x, y, 0.2 * std::sin(3 * x) * std::cos(2 * y)});
  }
  const geom::RigidTransform t{geom::random_rotation(rng), Vec3(0.3, 0.2, -0.1)};
  // An independent sample: an exact copy makes the score matrix symmetric
  // and its ties break differently after a motion.
  PointCloud q0;
  for (int i = 0; i < 400; ++i) {
    const double x = rng.uniform(0, 1.5);
    const double y = rng.uniform(0, 1.5);
    q0.push_back({x, y, 0.2 * std::sin(3 * x) * std::cos(2 * y)});
  }
  const auto q = geom::apply_transform(q0, t);
  matching::MatchingConfig mc{16, 64, 8};
  const auto fp = conv::backbone_forward(backbone, p);
  const auto fq = conv::backbone_forward(backbone, q);
  const auto base = matching::match_pyramids(params, fp, fq, mc);
  const geom::RigidTransform u{geom::random_rotation(rng), Vec3(-1, 4, 2)};
  const auto fpu = conv::backbone_forward(backbone, geom::apply_transform(p, u));
  const auto fqu = conv::backbone_forward(backbone, geom::apply_transform(q, u));
  for (const auto& moved : {matching::match_pyramids(params, fpu, fq, mc),
                            matching::match_pyramids(params, fp, fqu, mc)}) {
    ASSERT_EQ(moved.points.size(), base.points.size());
    for (std::size_t i = 0; i < base.points.size(); ++i) {
      EXPECT_EQ(moved.points[i].x, base.points[i].x);
      EXPECT_EQ(moved.points[i].y, base.points[i].y);
      EXPECT_NEAR(moved.points[i].score, base.points[i].score, 1e-9);
    }
    ASSERT_EQ(moved.superpoints.size(), base.superpoints.size());
    for (std::size_t i = 0; i < base.superpoints.size(); ++i) {
      EXPECT_EQ(moved.superpoints[i].x, base.superpoints[i].x);
      EXPECT_EQ(moved.superpoints[i].y, base.superpoints[i].y);
    }
  }
}
