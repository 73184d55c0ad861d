#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <tuple>

#include <gtest/gtest.h>

#include "parereg/error.hpp"
#include "parereg/geom/io.hpp"
#include "parereg/geom/neighbors.hpp"
#include "parereg/geom/sampling.hpp"
#include "parereg/geom/transform.hpp"

using namespace parereg;
using geom::PointCloud;
using geom::RigidTransform;
using geom::Vec3;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)});
  return c;
}

RigidTransform random_transform(Rng& rng) {
  RigidTransform t;
  t.r = geom::random_rotation(rng);
  t.t = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  return t;
}

// O(n²) scan with the documented ordering.
std::vector<std::vector<std::size_t>> brute_knn(const PointCloud& ref, const PointCloud& q, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& x : q) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < ref.size(); ++j) d.push_back({(ref[j] - x).squaredNorm(), j});
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> row;
    for (std::size_t j = 0; j < std::min(k, d.size()); ++j) row.push_back(d[j].second);
    out.push_back(row);
  }
  return out;
}

std::vector<std::size_t> indices_of(const std::vector<geom::Neighbor>& row) {
  std::vector<std::size_t> out;
  for (const auto& n : row) out.push_back(n.index);
  return out;
}

}  // namespace

TEST(Voxel, CubeCornersCollapseToCentroid) {
  PointCloud c;
  for (int i = 0; i < 8; ++i) c.push_back(Vec3(i & 1, (i >> 1) & 1, (i >> 2) & 1));
  const auto out = geom::voxel_downsample(c, 2.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], Vec3(0.5, 0.5, 0.5));
}

TEST(Voxel, DistinctVoxelsUnchanged) {
  PointCloud c({Vec3(0, 0, 0), Vec3(0.9, 0, 0)});
  const auto out = geom::voxel_downsample(c, 0.5);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], c[0]);
  EXPECT_EQ(out[1], c[1]);
}

TEST(Voxel, MatchesHashMapOracle) {
  const auto c = random_cloud(1000, 3);
  const double voxel = 0.25;
  std::map<std::tuple<long, long, long>, std::pair<Vec3, int>> bins;
  for (const auto& p : c) {
    auto key = std::make_tuple(static_cast<long>(std::floor(p.x() / voxel)),
                               static_cast<long>(std::floor(p.y() / voxel)),
                               static_cast<long>(std::floor(p.z() / voxel)));
    auto& [sum, n] = bins[key];
    if (n == 0) sum.setZero();
    sum += p;
    ++n;
  }
  const auto out = geom::voxel_downsample(c, voxel);
  ASSERT_LE(out.size(), 64u);
  ASSERT_EQ(out.size(), bins.size());
  std::size_t i = 0;
  for (const auto& [key, acc] : bins) {
    EXPECT_LT((out[i] - acc.first / acc.second).norm(), 1e-12);
    ++i;
  }
}

TEST(Voxel, BoundaryPointUsesFloor) {
  PointCloud c({Vec3(0.5, 0, 0), Vec3(0.6, 0, 0), Vec3(0.1, 0, 0)});
  const auto out = geom::voxel_downsample(c, 0.5);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], Vec3(0.1, 0, 0));
  EXPECT_NEAR(out[1].x(), 0.55, 1e-15);
}

TEST(Voxel, CountStableUnderIntegerVoxelTranslation) {
  const auto c = random_cloud(500, 4);
  RigidTransform t;
  t.t = Vec3(1.0, -2.0, 0.5);
  EXPECT_EQ(geom::voxel_downsample(c, 0.25).size(),
            geom::voxel_downsample(geom::apply_transform(c, t), 0.25).size());
}

TEST(Voxel, EmptyCloudRejected) {
  EXPECT_THROW(geom::voxel_downsample(PointCloud{}, 0.1), InputError);
  EXPECT_THROW(geom::voxel_downsample(random_cloud(3, 1), 0.0), InputError);
}

TEST(Knn, CollinearTieGoesToLowerIndex) {
  PointCloud c({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
  const auto g = geom::knn(c, c, 2);
  EXPECT_EQ(indices_of(g[1]), (std::vector<std::size_t>{1, 0}));
}

TEST(Knn, LargeKListsEverything) {
  const auto c = random_cloud(7, 5);
  const auto g = geom::knn(c, c, 20);
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto idx = indices_of(g[i]);
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> all(c.size());
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(idx, all);
  }
}

TEST(Knn, MatchesExhaustiveScan) {
  const auto c = random_cloud(200, 6);
  const auto g = geom::knn(c, c, 16);
  const auto oracle = brute_knn(c, c, 16);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(indices_of(g[i]), oracle[i]);
}

TEST(Knn, GridBackendAgreesAboveExhaustiveLimit) {
  const auto ref = random_cloud(3000, 7, -1.0, 2.0);
  const auto q = random_cloud(300, 8, -1.5, 2.5);
  const auto grid = geom::knn(ref, q, 12, geom::KnnBackend::grid);
  const auto scan = geom::knn(ref, q, 12, geom::KnnBackend::exhaustive);
  const auto automatic = geom::knn(ref, q, 12);
  const auto oracle = brute_knn(ref, q, 12);
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_EQ(grid[i], scan[i]);
    EXPECT_EQ(automatic[i], scan[i]);
    EXPECT_EQ(indices_of(grid[i]), oracle[i]);
  }
}

TEST(Knn, GridHandlesDuplicatesAndTies) {
  PointCloud ref;
  for (int rep = 0; rep < 3; ++rep) {
    for (int i = 0; i < 15; ++i)
      for (int j = 0; j < 15; ++j)
        for (int k = 0; k < 10; ++k) ref.push_back(Vec3(i, j, k) * 0.1);
  }
  ASSERT_GT(ref.size(), geom::kExhaustiveLimit);
  const auto q = random_cloud(50, 9, 0.0, 1.4);
  const auto grid = geom::knn(ref, q, 9, geom::KnnBackend::grid);
  const auto scan = geom::knn(ref, q, 9, geom::KnnBackend::exhaustive);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(grid[i], scan[i]);
}

TEST(Knn, InvariantUnderRigidMotion) {
  const auto c = random_cloud(400, 10);
  Rng rng(11);
  const auto moved = geom::apply_transform(c, random_transform(rng));
  const auto a = geom::knn(c, c, 10);
  const auto b = geom::knn(moved, moved, 10);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(indices_of(a[i]), indices_of(b[i]));
}

TEST(Grouping, SelfGroups) {
  const auto c = random_cloud(20, 12);
  const auto g = geom::point_to_node_group(c, c);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(g.groups[i], std::vector<std::size_t>{i});
}

TEST(Grouping, TwoNodes) {
  PointCloud dense({Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(9, 0, 0)});
  PointCloud nodes({Vec3(0, 0, 0), Vec3(10, 0, 0)});
  const auto g = geom::point_to_node_group(dense, nodes);
  EXPECT_EQ(g.groups[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(g.groups[1], (std::vector<std::size_t>{2}));
}

TEST(Grouping, MatchesNearestOracleAndPartitions) {
  const auto dense = random_cloud(500, 13);
  const auto nodes = random_cloud(20, 14);
  const auto g = geom::point_to_node_group(dense, nodes);
  const auto oracle = brute_knn(nodes, dense, 1);
  std::size_t total = 0;
  for (const auto& grp : g.groups) total += grp.size();
  EXPECT_EQ(total, dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    EXPECT_EQ(g.node_of[i], oracle[i][0]);
    const auto& grp = g.groups[oracle[i][0]];
    EXPECT_TRUE(std::binary_search(grp.begin(), grp.end(), i));
  }
}

TEST(Transform, IdentityAndTranslation) {
  const auto c = random_cloud(10, 15);
  EXPECT_EQ(geom::apply_transform(c, RigidTransform::identity()), c);
  RigidTransform t;
  t.t = Vec3(1, 0, 0);
  const auto moved = geom::apply_transform(c, t);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(moved[i], c[i] + Vec3(1, 0, 0));
}

TEST(Transform, ComposeMatchesSequentialApplication) {
  Rng rng(16);
  const auto c = random_cloud(50, 17);
  const auto t1 = random_transform(rng);
  const auto t2 = random_transform(rng);
  const auto once = geom::apply_transform(c, geom::compose(t2, t1));
  const auto twice = geom::apply_transform(geom::apply_transform(c, t1), t2);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((once[i] - twice[i]).norm(), 1e-12);
  const auto ct = geom::compose(t1, RigidTransform::identity());
  EXPECT_LT((ct.r.matrix() - t1.r.matrix()).norm(), 1e-15);
  EXPECT_LT((ct.t - t1.t).norm(), 1e-15);
  const auto id = geom::compose(t1, t1.inverse());
  EXPECT_LT((id.r.matrix() - geom::Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(id.t.norm(), 1e-12);
}

TEST(Transform, PreservesPairwiseDistances) {
  Rng rng(18);
  const auto c = random_cloud(60, 19);
  const auto m = geom::apply_transform(c, random_transform(rng));
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      const double a = (c[i] - c[j]).norm();
      EXPECT_NEAR((m[i] - m[j]).norm(), a, 1e-9 * a);
    }
}

TEST(Rotation, RejectsImproperMatrices) {
  geom::Mat3 reflect = geom::Mat3::Identity();
  reflect(2, 2) = -1;
  EXPECT_THROW(geom::Rotation::from_matrix(reflect), InputError);
  EXPECT_THROW(geom::Rotation::from_matrix(2.0 * geom::Mat3::Identity()), InputError);
}

TEST(Rotation, RandomIsReproducibleAndProper) {
  const auto a = geom::random_rotation(42);
  const auto b = geom::random_rotation(42);
  EXPECT_EQ(a, b);
  EXPECT_LT((a.matrix().transpose() * a.matrix() - geom::Mat3::Identity()).norm(), 1e-6);
  EXPECT_NEAR(a.matrix().determinant(), 1.0, 1e-6);
}

TEST(Rotation, HaarTraceMeanIsZero) {
  Rng rng(20);
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) sum += geom::random_rotation(rng).matrix().trace();
  EXPECT_NEAR(sum / n, 0.0, 0.05);
}

TEST(Overlap, Basics) {
  const auto c = random_cloud(100, 21);
  EXPECT_EQ(geom::overlap_ratio(c, c, RigidTransform::identity(), 0.01), 1.0);
  RigidTransform far;
  far.t = Vec3(100 * 0.01 + 10, 0, 0);
  EXPECT_EQ(geom::overlap_ratio(c, geom::apply_transform(c, far), RigidTransform::identity(), 0.01), 0.0);
}

TEST(Overlap, HalfShiftedGridMatchesExhaustiveCount) {
  PointCloud p;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) p.push_back(Vec3(i * 0.1, j * 0.1, 0));
  RigidTransform shift;
  shift.t = Vec3(0.5, 0.0, 0.0);
  const auto q = geom::apply_transform(p, shift);
  const double radius = 0.03;
  std::size_t hits = 0;
  for (const auto& x : p) {
    double best = INFINITY;
    for (const auto& y : q) best = std::min(best, (x - y).norm());
    if (best <= radius) ++hits;
  }
  EXPECT_DOUBLE_EQ(geom::overlap_ratio(p, q, RigidTransform::identity(), radius),
                   static_cast<double>(hits) / p.size());
  EXPECT_NEAR(static_cast<double>(hits) / p.size(), 0.5, 1e-12);
}

TEST(Crop, RetainsComplementOfRatio) {
  const auto c = random_cloud(1000, 22);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [p, q] = geom::random_crop(c, c, RigidTransform::identity(), 0.3, 0.05, seed);
    EXPECT_NEAR(static_cast<double>(p.size()), 700.0, 1.0);
    EXPECT_NEAR(static_cast<double>(q.size()), 700.0, 1.0);
  }
}

TEST(Crop, LowersOverlapAndIsReproducible) {
  const auto c = random_cloud(1000, 23);
  double before = 0.0;
  double after = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    before += geom::overlap_ratio(c, c, RigidTransform::identity(), 0.05);
    const auto [p, q] = geom::random_crop(c, c, RigidTransform::identity(), 0.3, 0.05, seed);
    after += geom::overlap_ratio(p, q, RigidTransform::identity(), 0.05);
  }
  EXPECT_LT(after, before);
  const auto a = geom::random_crop(c, c, RigidTransform::identity(), 0.3, 0.05, 9);
  const auto b = geom::random_crop(c, c, RigidTransform::identity(), 0.3, 0.05, 9);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Crop, RejectsBadRatio) {
  const auto c = random_cloud(10, 24);
  EXPECT_THROW(geom::random_crop(c, c, RigidTransform::identity(), 1.0, 0.05, 1), InputError);
  EXPECT_THROW(geom::random_crop(c, c, RigidTransform::identity(), 0.0, 0.05, 1), InputError);
}

TEST(Io, PlyAndXyzRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "parereg_io_test";
  std::filesystem::create_directories(dir);
  const auto c = random_cloud(25, 25);
  geom::write_xyz(dir / "c.xyz", c);
  const auto x = geom::read_xyz(dir / "c.xyz");
  ASSERT_EQ(x.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((x[i] - c[i]).norm(), 1e-12);
  geom::write_ply(dir / "c.ply", c);
  const auto p = geom::read_ply(dir / "c.ply");
  ASSERT_EQ(p.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((p[i] - c[i]).norm(), 1e-6);
  Rng rng(26);
  const auto t = random_transform(rng);
  geom::write_transform(dir / "t.json", t);
  const auto back = geom::read_transform(dir / "t.json");
  EXPECT_LT((back.r.matrix() - t.r.matrix()).norm(), 1e-15);
  EXPECT_THROW(geom::read_ply(dir / "missing.ply"), InputError);
  std::filesystem::remove_all(dir);
}

TEST(PointCloud, RejectsNonFinite) {
  EXPECT_THROW(PointCloud({Vec3(0, NAN, 0)}), InputError);
}
