#include <benchmark/benchmark.h>

#include "parereg/conv/backbone.hpp"
#include "parereg/random.hpp"

namespace {

using parereg::Rng;
using parereg::geom::PointCloud;
using parereg::geom::Vec3;

PointCloud surface(std::size_t n) {
  Rng rng(3);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(0, 2);
    const double y = rng.uniform(0, 2);
    pts.emplace_back(x, y, 0.2 * std::sin(3 * x) * std::cos(2 * y));
  }
  return PointCloud(std::move(pts));
}

parereg::conv::BackboneConfig config() {
  parereg::conv::BackboneConfig cfg;
  cfg.voxel = 0.08;
  cfg.k = 16;
  cfg.kernels = 4;
  cfg.stage_widths = {16, 32, 64};
  cfg.point_channels = 32;
  cfg.correlation_hidden = 16;
  cfg.blocks_per_stage = 1;
  return cfg;
}

template <typename S>
void BM_Backbone(benchmark::State& state) {
  const auto params = parereg::conv::init_backbone(config(), 1, false).cast<S>();
  const auto cloud = surface(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(parereg::conv::backbone_forward(params, cloud));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_TEMPLATE(BM_Backbone, double)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Backbone, float)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

template <typename S>
void BM_ResBlock(benchmark::State& state) {
  Rng rng(4);
  const auto channels = static_cast<Eigen::Index>(state.range(0));
  const auto block = parereg::conv::init_resblock(channels, channels, 4, 16, parereg::conv::ConvMode::edge,
                                                  false, rng, 0.1)
                         .cast<S>();
  const auto cloud = surface(1000);
  const auto graph = parereg::geom::knn(cloud, cloud, 16);
  std::vector<parereg::conv::VectorFeature<S>> features;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    parereg::conv::VectorFeature<S> f(channels, 3);
    for (Eigen::Index j = 0; j < f.size(); ++j) f.data()[j] = static_cast<S>(rng.normal());
    features.push_back(std::move(f));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(parereg::conv::pare_resblock<S>(block, cloud, cloud, graph, features));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cloud.size()));
}
BENCHMARK_TEMPLATE(BM_ResBlock, double)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_ResBlock, float)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
