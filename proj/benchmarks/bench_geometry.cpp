#include <benchmark/benchmark.h>

#include "parereg/geom/neighbors.hpp"
#include "parereg/geom/sampling.hpp"
#include "parereg/random.hpp"

namespace {

using parereg::Rng;
using parereg::geom::PointCloud;
using parereg::geom::Vec3;

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 0.5));
  return PointCloud(std::move(pts));
}

void BM_KnnExhaustive(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(parereg::geom::knn(cloud, cloud, 16, parereg::geom::KnnBackend::exhaustive));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KnnExhaustive)->Arg(500)->Arg(2000);

void BM_KnnGrid(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(parereg::geom::knn(cloud, cloud, 16, parereg::geom::KnnBackend::grid));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KnnGrid)->Arg(500)->Arg(2000)->Arg(20000);

void BM_VoxelDownsample(benchmark::State& state) {
  const auto cloud = random_cloud(20000, 2);
  for (auto _ : state) benchmark::DoNotOptimize(parereg::geom::voxel_downsample(cloud, 0.05));
}
BENCHMARK(BM_VoxelDownsample);

}  // namespace
