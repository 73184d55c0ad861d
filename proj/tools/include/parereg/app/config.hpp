#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parereg/app/scene.hpp"
#include "parereg/conv/backbone.hpp"
#include "parereg/estimator/estimator.hpp"
#include "parereg/eval/losses.hpp"
#include "parereg/eval/metrics.hpp"
#include "parereg/matching/matching.hpp"

namespace parereg::app {

struct BenchmarkSpec {
  std::size_t pairs = 200;
  std::size_t correspondences = 1000;
  double inlier_ratio = 0.3;
  std::vector<std::string> estimators{"feature", "ransac"};
  std::vector<std::size_t> budgets{10, 30, 100, 300, 1000};
};

/// Everything the CLI needs. The JSON form has the sections
/// "preset", "paper_defaults", "model", "estimator", "loss", "scene" and
/// "benchmark"; any field may be omitted and unknown fields are rejected.
struct AppConfig {
  std::string preset = "indoor";
  conv::BackboneConfig backbone;
  matching::ContextConfig context;
  matching::MatchingConfig matching;
  estimator::EstimatorConfig estimator;
  eval::MetricThresholds thresholds;
  eval::LossConfig loss;
  SceneSpec scene;
  BenchmarkSpec benchmark;

  /// "indoor" or "outdoor" defaults.
  static AppConfig for_preset(const std::string& preset);

  [[nodiscard]] nlohmann::json to_json() const;
  /// Starts from the preset named in `j` (default indoor) and applies every
  /// field present. Throws InputError naming the offending key.
  static AppConfig from_json(const nlohmann::json& j);

  void validate() const;
};

AppConfig load_config(const std::filesystem::path& path);

}  // namespace parereg::app
