#include "parereg/app/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include "parereg/error.hpp"

namespace parereg::app {

AppConfig AppConfig::for_preset(const std::string& preset) {
  AppConfig c;
  c.preset = preset;
  if (preset == "indoor") return c;
  if (preset != "outdoor") throw InputError("unknown preset '" + preset + "' (indoor or outdoor)");
  c.backbone = conv::BackboneConfig::outdoor();
  c.context = matching::ContextConfig::outdoor();
  c.estimator = estimator::EstimatorConfig::outdoor();
  c.thresholds = eval::MetricThresholds::outdoor();
  c.scene.noise = 0.01;
  c.scene.extent = 40.0;
  c.scene.overlap_radius = 0.45;
  c.scene.max_translation = 2.0;
  return c;
}

namespace {

std::string sampler_name(conv::PyramidSampler s) {
  return s == conv::PyramidSampler::radius ? "radius" : "voxel";
}

std::string mode_name(conv::ConvMode m) { return m == conv::ConvMode::edge ? "edge" : "node"; }

// Binds the keys of one JSON section to setters; unknown keys are errors.
class Section {
 public:
  Section(const nlohmann::json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      node_ = &root.at(name_);
      if (!node_->is_object()) throw InputError("config: '" + name_ + "' must be an object");
    }
  }

  template <typename T>
  void bind(const std::string& key, T& target) {
    known_.push_back(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      target = node_->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError("config: " + name_ + "." + key + " has the wrong type");
    }
  }

  void bind_fn(const std::string& key, const std::function<void(const nlohmann::json&)>& apply) {
    known_.push_back(key);
    if (node_ && node_->contains(key)) {
      try {
        apply(node_->at(key));
      } catch (const nlohmann::json::exception&) {
        throw InputError("config: " + name_ + "." + key + " has the wrong type");
      }
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
        throw InputError("config: unknown key " + name_ + "." + key);
      }
    }
  }

 private:
  std::string name_;
  const nlohmann::json* node_ = nullptr;
  std::vector<std::string> known_;
};

void bind_all(const nlohmann::json& j, AppConfig& c) {
  Section paper(j, "paper_defaults");
  paper.bind("voxel_size", c.backbone.voxel);
  paper.bind("gaussian_noise", c.scene.noise);
  paper.bind("crop_ratio", c.scene.crop_ratio);
  paper.bind("nearest_neighbors", c.backbone.k);
  paper.bind("weight_matrices", c.backbone.kernels);
  paper.bind("coarse_correspondences", c.matching.coarse);
  paper.bind("fine_correspondences", c.matching.fine);
  paper.bind("acceptance_radius", c.estimator.acceptance_radius);
  paper.bind("alpha", c.loss.alpha);
  paper.bind("beta", c.loss.beta);
  paper.bind("tau_ir", c.thresholds.inlier_radius);
  paper.bind("tau_fmr", c.thresholds.fmr);
  paper.bind("tau_rr", c.thresholds.rmse);
  paper.bind("tau_r_deg", c.thresholds.rotation_deg);
  paper.bind("tau_t", c.thresholds.translation);
  paper.finish();

  Section model(j, "model");
  model.bind("downsample_ratio", c.backbone.ratio);
  model.bind_fn("stage_widths", [&](const nlohmann::json& v) {
    const auto w = v.get<std::vector<Eigen::Index>>();
    if (w.size() != 3) throw InputError("config: model.stage_widths needs three entries");
    std::copy(w.begin(), w.end(), c.backbone.stage_widths.begin());
  });
  model.bind("point_channels", c.backbone.point_channels);
  model.bind("correlation_hidden", c.backbone.correlation_hidden);
  model.bind("blocks_per_stage", c.backbone.blocks_per_stage);
  model.bind_fn("sampler", [&](const nlohmann::json& v) {
    const auto s = v.get<std::string>();
    if (s != "radius" && s != "voxel") throw InputError("config: model.sampler must be radius or voxel");
    c.backbone.sampler = s == "radius" ? conv::PyramidSampler::radius : conv::PyramidSampler::voxel;
  });
  model.bind_fn("conv_mode", [&](const nlohmann::json& v) {
    const auto s = v.get<std::string>();
    if (s != "edge" && s != "node") throw InputError("config: model.conv_mode must be edge or node");
    c.backbone.mode = s == "edge" ? conv::ConvMode::edge : conv::ConvMode::node;
  });
  model.bind("context_hidden", c.context.hidden);
  model.bind("context_out", c.context.out);
  model.bind("heads", c.context.heads);
  model.bind("rounds", c.context.rounds);
  model.bind("distance_buckets", c.context.distance_buckets);
  model.bind("bucket_width", c.context.bucket_width);
  model.bind("per_patch", c.matching.per_patch);
  model.finish();

  Section est(j, "estimator");
  est.bind("refine_iterations", c.estimator.refine_iterations);
  est.bind("sample_size", c.estimator.sample_size);
  est.bind("budget", c.estimator.budget);
  est.bind("weighted_refinement", c.estimator.weighted_refinement);
  est.finish();

  Section loss(j, "loss");
  loss.bind("positive_radius", c.loss.positive_radius);
  loss.bind("negative_radius", c.loss.negative_radius);
  loss.finish();

  Section scene(j, "scene");
  scene.bind_fn("generator", [&](const nlohmann::json& v) {
    c.scene.generator = scene_generator_from_string(v.get<std::string>());
  });
  scene.bind("points", c.scene.points);
  scene.bind("extent", c.scene.extent);
  scene.bind_fn("overlap", [&](const nlohmann::json& v) {
    if (v.is_null()) {
      c.scene.overlap.reset();
    } else {
      c.scene.overlap = v.get<double>();
    }
  });
  scene.bind("overlap_radius", c.scene.overlap_radius);
  scene.bind("max_translation", c.scene.max_translation);
  scene.bind("oracle_features", c.scene.oracle_features);
  scene.bind("oracle_channels", c.scene.oracle_channels);
  scene.bind("oracle_noise", c.scene.oracle_noise);
  scene.finish();

  Section bench(j, "benchmark");
  bench.bind("pairs", c.benchmark.pairs);
  bench.bind("correspondences", c.benchmark.correspondences);
  bench.bind("inlier_ratio", c.benchmark.inlier_ratio);
  bench.bind("estimators", c.benchmark.estimators);
  bench.bind("budgets", c.benchmark.budgets);
  bench.finish();
}

}  // namespace

nlohmann::json AppConfig::to_json() const {
  const auto& b = backbone;
  nlohmann::json j;
  j["preset"] = preset;
  j["paper_defaults"] = {
      {"voxel_size", b.voxel},
      {"gaussian_noise", scene.noise},
      {"crop_ratio", scene.crop_ratio},
      {"nearest_neighbors", b.k},
      {"weight_matrices", b.kernels},
      {"coarse_correspondences", matching.coarse},
      {"fine_correspondences", matching.fine},
      {"acceptance_radius", estimator.acceptance_radius},
      {"alpha", loss.alpha},
      {"beta", loss.beta},
      {"tau_ir", thresholds.inlier_radius},
      {"tau_fmr", thresholds.fmr},
      {"tau_rr", thresholds.rmse},
      {"tau_r_deg", thresholds.rotation_deg},
      {"tau_t", thresholds.translation},
  };
  j["model"] = {
      {"downsample_ratio", b.ratio},
      {"stage_widths", std::vector<Eigen::Index>(b.stage_widths.begin(), b.stage_widths.end())},
      {"point_channels", b.point_channels},
      {"correlation_hidden", b.correlation_hidden},
      {"blocks_per_stage", b.blocks_per_stage},
      {"sampler", sampler_name(b.sampler)},
      {"conv_mode", mode_name(b.mode)},
      {"context_hidden", context.hidden},
      {"context_out", context.out},
      {"heads", context.heads},
      {"rounds", context.rounds},
      {"distance_buckets", context.distance_buckets},
      {"bucket_width", context.bucket_width},
      {"per_patch", matching.per_patch},
  };
  j["estimator"] = {
      {"refine_iterations", estimator.refine_iterations},
      {"sample_size", estimator.sample_size},
      {"budget", estimator.budget},
      {"weighted_refinement", estimator.weighted_refinement},
  };
  j["loss"] = {{"positive_radius", loss.positive_radius}, {"negative_radius", loss.negative_radius}};
  j["scene"] = {
      {"generator", to_string(scene.generator)},
      {"points", scene.points},
      {"extent", scene.extent},
      {"overlap", scene.overlap ? nlohmann::json(*scene.overlap) : nlohmann::json(nullptr)},
      {"overlap_radius", scene.overlap_radius},
      {"max_translation", scene.max_translation},
      {"oracle_features", scene.oracle_features},
      {"oracle_channels", scene.oracle_channels},
      {"oracle_noise", scene.oracle_noise},
  };
  j["benchmark"] = {
      {"pairs", benchmark.pairs},
      {"correspondences", benchmark.correspondences},
      {"inlier_ratio", benchmark.inlier_ratio},
      {"estimators", benchmark.estimators},
      {"budgets", benchmark.budgets},
  };
  return j;
}

AppConfig AppConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("config: top level must be an object");
  static const std::vector<std::string> kSections{"preset",    "paper_defaults", "model", "estimator",
                                                  "loss",      "scene",          "benchmark"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kSections.begin(), kSections.end(), key) == kSections.end()) {
      throw InputError("config: unknown section '" + key + "'");
    }
  }
  std::string preset = "indoor";
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw InputError("config: preset must be a string");
    preset = j.at("preset").get<std::string>();
  }
  AppConfig c = for_preset(preset);
  bind_all(j, c);
  c.validate();
  return c;
}

void AppConfig::validate() const {
  if (!(backbone.voxel > 0.0) || !(backbone.ratio > 1.0)) {
    throw InputError("config: voxel_size must be positive and downsample_ratio > 1");
  }
  if (backbone.k == 0 || backbone.kernels <= 0) {
    throw InputError("config: nearest_neighbors and weight_matrices must be positive");
  }
  for (const auto w : backbone.stage_widths) {
    if (w <= 0) throw InputError("config: model.stage_widths must be positive");
  }
  if (backbone.point_channels <= 0 || backbone.correlation_hidden <= 0) {
    throw InputError("config: model widths must be positive");
  }
  if (context.heads <= 0 || context.hidden % context.heads != 0) {
    throw InputError("config: context_hidden must be a multiple of heads");
  }
  if (matching.coarse == 0 || matching.fine == 0 || matching.per_patch == 0) {
    throw InputError("config: correspondence counts must be positive");
  }
  estimator.validate();
  thresholds.validate();
  loss.validate();
  scene.validate();
  if (benchmark.pairs == 0 || benchmark.correspondences == 0) {
    throw InputError("config: benchmark.pairs and benchmark.correspondences must be positive");
  }
  if (benchmark.estimators.empty()) throw InputError("config: benchmark.estimators is empty");
  if (benchmark.budgets.empty()) throw InputError("config: benchmark.budgets is empty");
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return AppConfig::from_json(j);
}

}  // namespace parereg::app
