#include <benchmark/benchmark.h>

#include "parereg/app/scene.hpp"
#include "parereg/estimator/estimator.hpp"

namespace {

namespace app = parereg::app;
namespace estimator = parereg::estimator;

estimator::CorrespondenceSet correspondences() {
  app::SceneSpec spec;
  spec.points = 2000;
  spec.oracle_features = true;
  const auto scene = app::gen_scene(spec, 11);
  return app::oracle_correspondences(scene, 1000, 0.3, 0.5, 11);
}

void BM_FeatureProposer(benchmark::State& state) {
  const auto corrs = correspondences();
  estimator::EstimatorConfig cfg;
  cfg.budget = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(estimator::propose_and_select(corrs, cfg));
}
BENCHMARK(BM_FeatureProposer)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Ransac(benchmark::State& state) {
  const auto corrs = correspondences();
  estimator::EstimatorConfig cfg;
  cfg.budget = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(estimator::ransac(corrs, cfg, 5));
}
BENCHMARK(BM_Ransac)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Procrustes(benchmark::State& state) {
  const auto corrs = correspondences();
  for (auto _ : state) benchmark::DoNotOptimize(estimator::procrustes(corrs.source, corrs.target));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corrs.size()));
}
BENCHMARK(BM_Procrustes);

}  // namespace
