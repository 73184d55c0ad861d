#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parereg/app/config.hpp"
#include "parereg/app/pipeline.hpp"
#include "parereg/app/scene.hpp"
#include "parereg/eval/metrics.hpp"

namespace parereg::app {

/// {"pairs": {id: {"transform": {...}, "correspondences": [[px,py,pz,qx,qy,qz], ...]}}}
/// Used both for predictions (estimated transform, predicted pairs) and
/// ground truth (true transform, twin pairs).
nlohmann::json pair_entry(const geom::RigidTransform& transform, std::span<const Vec3> source,
                          std::span<const Vec3> target);

nlohmann::json ground_truth_json(const Scene& scene, const std::string& pair_id);
nlohmann::json prediction_json(const RunReport& report);

/// Writes p.ply, q.ply and ground_truth.json (plus scene.json with the
/// achieved overlap and crop ratio) into `out`.
void cmd_gen(const AppConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// "xi,yi,score" per correspondence.
std::string correspondences_csv(const RunReport& report);
/// [{"x": xi, "y": yi, "score": s}, ...]
nlohmann::json correspondences_json(const RunReport& report);

struct BenchmarkRow {
  std::string estimator;
  std::size_t budget = 0;
  double success = 0.0;
  std::optional<double> mean_re;  ///< over successful pairs
  std::optional<double> mean_te;
  double ms = 0.0;  ///< mean wall time per pair
};

/// Oracle-feature scenes for seeds seed, seed+1, …; every estimator at every
/// budget on the same correspondence sets, followed by refine(). Success is
/// RE < τ_r and TE < τ_t.
std::vector<BenchmarkRow> run_benchmark(const AppConfig& config, std::uint64_t seed);

/// Columns estimator,budget,success,mean_re,mean_te,ms.
std::string benchmark_csv(std::span<const BenchmarkRow> rows);

struct EvalResult {
  std::map<std::string, eval::PairMetrics> pairs;
  eval::AggregateMetrics aggregate;
};

/// All six metrics from prediction and ground-truth documents in the
/// pair_entry format. Throws InputError when the pair ids differ.
EvalResult cmd_eval(const nlohmann::json& predictions, const nlohmann::json& ground_truth,
                    const eval::MetricThresholds& thresholds);

/// Full command line: `parereg gen|register|benchmark|eval|weights ...`.
/// Returns 0 on success, 2 on input errors, 3 on degenerate geometry.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace parereg::app
