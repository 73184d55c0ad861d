#include "parereg/app/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "parereg/error.hpp"
#include "parereg/geom/io.hpp"

namespace parereg::app {

namespace fs = std::filesystem;

nlohmann::json pair_entry(const geom::RigidTransform& transform, std::span<const Vec3> source,
                          std::span<const Vec3> target) {
  if (source.size() != target.size()) throw InputError("source and target counts differ");
  nlohmann::json corrs = nlohmann::json::array();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3& a = source[i];
    const Vec3& b = target[i];
    corrs.push_back({a.x(), a.y(), a.z(), b.x(), b.y(), b.z()});
  }
  return {{"transform", geom::to_json(transform)}, {"correspondences", std::move(corrs)}};
}

nlohmann::json ground_truth_json(const Scene& scene, const std::string& pair_id) {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (const auto& c : scene.correspondences) {
    src.push_back(scene.p[c.x]);
    dst.push_back(scene.q[c.y]);
  }
  nlohmann::json j;
  j["pairs"][pair_id] = pair_entry(scene.gt, src, dst);
  return j;
}

nlohmann::json prediction_json(const RunReport& report) {
  nlohmann::json j;
  j["pairs"][report.pair_id] = pair_entry(report.final_hypothesis.transform,
                                          report.correspondences.source,
                                          report.correspondences.target);
  return j;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string scene_id(std::uint64_t seed) { return "scene-" + std::to_string(seed); }

}  // namespace

void cmd_gen(const AppConfig& config, std::uint64_t seed, const fs::path& out) {
  const Scene scene = gen_scene(config.scene, seed);
  fs::create_directories(out);
  geom::write_ply(out / "p.ply", scene.p);
  geom::write_ply(out / "q.ply", scene.q);
  write_json(out / "ground_truth.json", ground_truth_json(scene, scene_id(seed)));
  write_json(out / "scene.json", {{"pair", scene_id(seed)},
                                  {"seed", seed},
                                  {"generator", to_string(config.scene.generator)},
                                  {"overlap", scene.overlap},
                                  {"crop_ratio", scene.crop_ratio},
                                  {"points_p", scene.p.size()},
                                  {"points_q", scene.q.size()},
                                  {"correspondences", scene.correspondences.size()}});
}

std::string correspondences_csv(const RunReport& report) {
  std::string out = "xi,yi,score\n";
  for (std::size_t i = 0; i < report.correspondence_indices.size(); ++i) {
    const auto& c = report.correspondence_indices[i];
    out += std::to_string(c.x) + "," + std::to_string(c.y) + "," +
           fixed(report.correspondence_scores[i], 9) + "\n";
  }
  return out;
}

nlohmann::json correspondences_json(const RunReport& report) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < report.correspondence_indices.size(); ++i) {
    const auto& c = report.correspondence_indices[i];
    j.push_back({{"x", c.x}, {"y", c.y}, {"score", report.correspondence_scores[i]}});
  }
  return j;
}

std::vector<BenchmarkRow> run_benchmark(const AppConfig& config, std::uint64_t seed) {
  const auto& spec = config.benchmark;
  if (spec.estimators.empty()) throw InputError("benchmark: empty estimator list");
  if (spec.budgets.empty()) throw InputError("benchmark: empty budget list");
  std::vector<EstimatorKind> kinds;
  for (const auto& name : spec.estimators) kinds.push_back(estimator_from_string(name));

  SceneSpec scene_spec = config.scene;
  scene_spec.oracle_features = true;

  struct Accumulator {
    std::size_t successes = 0;
    double sum_re = 0.0;
    double sum_te = 0.0;
    double ms = 0.0;
  };
  std::vector<Accumulator> acc(kinds.size() * spec.budgets.size());

  for (std::size_t pair = 0; pair < spec.pairs; ++pair) {
    const std::uint64_t s = seed + pair;
    const Scene scene = gen_scene(scene_spec, s);
    const auto corrs = oracle_correspondences(scene, spec.correspondences, spec.inlier_ratio,
                                              2.0 * config.estimator.acceptance_radius, s);
    for (std::size_t e = 0; e < kinds.size(); ++e) {
      for (std::size_t b = 0; b < spec.budgets.size(); ++b) {
        estimator::EstimatorConfig ec = config.estimator;
        ec.budget = spec.budgets[b];
        const auto start = std::chrono::steady_clock::now();
        geom::RigidTransform result;
        try {
          result = estimate(corrs, kinds[e], ec, s).second.transform;
        } catch (const DegenerateError&) {
          result = geom::RigidTransform::identity();
        }
        auto& a = acc[e * spec.budgets.size() + b];
        a.ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        const double re = eval::rotation_error_deg(result.r, scene.gt.r);
        const double te = eval::translation_error(result.t, scene.gt.t);
        if (re < config.thresholds.rotation_deg && te < config.thresholds.translation) {
          ++a.successes;
          a.sum_re += re;
          a.sum_te += te;
        }
      }
    }
  }

  std::vector<BenchmarkRow> rows;
  const auto n = static_cast<double>(spec.pairs);
  for (std::size_t e = 0; e < kinds.size(); ++e) {
    for (std::size_t b = 0; b < spec.budgets.size(); ++b) {
      const auto& a = acc[e * spec.budgets.size() + b];
      BenchmarkRow row;
      row.estimator = spec.estimators[e];
      row.budget = spec.budgets[b];
      row.success = static_cast<double>(a.successes) / n;
      if (a.successes > 0) {
        row.mean_re = a.sum_re / static_cast<double>(a.successes);
        row.mean_te = a.sum_te / static_cast<double>(a.successes);
      }
      row.ms = a.ms / n;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string benchmark_csv(std::span<const BenchmarkRow> rows) {
  std::string out = "estimator,budget,success,mean_re,mean_te,ms\n";
  for (const auto& r : rows) {
    out += r.estimator + "," + std::to_string(r.budget) + "," + fixed(r.success, 6) + "," +
           (r.mean_re ? fixed(*r.mean_re, 9) : "") + "," + (r.mean_te ? fixed(*r.mean_te, 9) : "") +
           "," + fixed(r.ms, 3) + "\n";
  }
  return out;
}

namespace {

struct PairDoc {
  geom::RigidTransform transform;
  std::vector<Vec3> source;
  std::vector<Vec3> target;
};

std::map<std::string, PairDoc> parse_pairs(const nlohmann::json& doc, const std::string& what) {
  if (!doc.is_object() || !doc.contains("pairs") || !doc.at("pairs").is_object()) {
    throw InputError(what + ": expected an object with a \"pairs\" object");
  }
  std::map<std::string, PairDoc> out;
  for (const auto& [id, entry] : doc.at("pairs").items()) {
    PairDoc d;
    try {
      d.transform = geom::transform_from_json(entry.at("transform"));
      for (const auto& row : entry.at("correspondences")) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() != 6) throw InputError(what + ": pair '" + id + "' correspondence needs 6 numbers");
        d.source.emplace_back(v[0], v[1], v[2]);
        d.target.emplace_back(v[3], v[4], v[5]);
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(what + ": pair '" + id + "': " + e.what());
    }
    out.emplace(id, std::move(d));
  }
  if (out.empty()) throw InputError(what + ": no pairs");
  return out;
}

}  // namespace

EvalResult cmd_eval(const nlohmann::json& predictions, const nlohmann::json& ground_truth,
                    const eval::MetricThresholds& thresholds) {
  const auto pred = parse_pairs(predictions, "predictions");
  const auto gt = parse_pairs(ground_truth, "ground truth");
  for (const auto& [id, d] : pred) {
    if (!gt.count(id)) throw InputError("prediction for unknown pair '" + id + "'");
  }
  EvalResult out;
  for (const auto& [id, g] : gt) {
    const auto it = pred.find(id);
    if (it == pred.end()) throw InputError("no prediction for pair '" + id + "'");
    const PairDoc& p = it->second;
    eval::PairMetrics m;
    m.ir = eval::inlier_ratio(p.source, p.target, g.transform, thresholds.inlier_radius);
    m.rmse = eval::rmse(g.source, g.target, p.transform);
    m.re_deg = eval::rotation_error_deg(p.transform.r, g.transform.r);
    m.te_m = eval::translation_error(p.transform.t, g.transform.t);
    out.pairs.emplace(id, m);
  }
  out.aggregate = eval::aggregate(out.pairs, thresholds);
  return out;
}

namespace {

struct CommonOptions {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--out", o.out, "Output directory");
}

AppConfig config_from(const CommonOptions& o) {
  return o.config.empty() ? AppConfig::for_preset("indoor") : load_config(o.config);
}

Model model_from(const AppConfig& config, const std::string& weights, std::uint64_t seed) {
  Model model = init_model(config.backbone, config.context, seed);
  if (!weights.empty()) import_weights(WeightContainer::load(weights), model);
  return model;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-equivariant point cloud registration"};
  app.require_subcommand(1);

  CommonOptions gen_opts;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene pair");
  add_common(gen, gen_opts);
  std::optional<double> gen_overlap;
  gen->add_option("--overlap", gen_overlap, "Target overlap in (0, 1]");

  CommonOptions reg_opts;
  auto* reg = app.add_subcommand("register", "Register a pair of clouds");
  add_common(reg, reg_opts);
  std::string reg_p;
  std::string reg_q;
  std::string reg_gt;
  std::string reg_weights;
  std::string reg_estimator = "feature";
  std::optional<std::size_t> reg_budget;
  bool reg_oracle = false;
  bool reg_sanity = false;
  bool reg_aligned = false;
  reg->add_option("--p", reg_p, "Source cloud (.ply or .xyz); omit to generate a scene");
  reg->add_option("--q", reg_q, "Target cloud");
  reg->add_option("--gt", reg_gt, "Ground-truth transform JSON for file inputs");
  reg->add_option("--weights", reg_weights, "Weight container; default random from --seed");
  reg->add_option("--estimator", reg_estimator, "feature | ransac | lgr");
  reg->add_option("--budget", reg_budget, "Hypothesis budget");
  reg->add_flag("--oracle", reg_oracle, "Use oracle features instead of the network");
  reg->add_flag("--sanity", reg_sanity, "Run invariance checks");
  reg->add_flag("--aligned", reg_aligned, "Write the aligned source cloud");

  CommonOptions bench_opts;
  auto* bench = app.add_subcommand("benchmark", "Estimator success rate versus hypothesis budget");
  add_common(bench, bench_opts);
  std::vector<std::string> bench_estimators;
  std::vector<std::size_t> bench_budgets;
  std::optional<std::size_t> bench_pairs;
  bench->add_option("--estimator", bench_estimators, "Estimators to compare (repeatable)");
  bench->add_option("--budget", bench_budgets, "Hypothesis budgets (repeatable)");
  bench->add_option("--pairs", bench_pairs, "Number of scenes");

  CommonOptions eval_opts;
  auto* ev = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  add_common(ev, eval_opts);
  std::string eval_pred;
  std::string eval_gt;
  ev->add_option("--pred", eval_pred, "Predictions JSON")->required();
  ev->add_option("--gt", eval_gt, "Ground-truth JSON")->required();

  CommonOptions w_opts;
  auto* weights = app.add_subcommand("weights", "Create or inspect weight containers");
  add_common(weights, w_opts);
  std::string w_action;
  std::string w_file;
  weights->add_option("action", w_action, "init | inspect | check")->required();
  weights->add_option("file", w_file, "Weight file (inspect, check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      AppConfig config = config_from(gen_opts);
      if (gen_overlap) config.scene.overlap = *gen_overlap;
      config.validate();
      cmd_gen(config, gen_opts.seed, gen_opts.out);
      out << "wrote " << (fs::path(gen_opts.out) / "ground_truth.json").string() << "\n";
    } else if (*reg) {
      AppConfig config = config_from(reg_opts);
      if (reg_budget) config.estimator.budget = *reg_budget;
      RegisterOptions options;
      options.estimator = estimator_from_string(reg_estimator);
      options.seed = reg_opts.seed;
      options.sanity = reg_sanity;
      RunReport report;
      geom::PointCloud p;
      geom::PointCloud q;
      if (reg_p.empty() != reg_q.empty()) throw InputError("--p and --q must be given together");
      if (!reg_p.empty()) {
        if (reg_oracle) throw InputError("--oracle needs a generated scene, not file inputs");
        p = geom::read_cloud(reg_p);
        q = geom::read_cloud(reg_q);
        std::optional<GroundTruth> gt;
        if (!reg_gt.empty()) gt = GroundTruth{geom::read_transform(reg_gt), {}};
        options.pair_id = fs::path(reg_p).stem().string();
        report = register_clouds(model_from(config, reg_weights, reg_opts.seed), config, p, q, gt,
                                 options);
      } else {
        SceneSpec spec = config.scene;
        spec.oracle_features = spec.oracle_features || reg_oracle;
        const Scene scene = gen_scene(spec, reg_opts.seed);
        p = scene.p;
        q = scene.q;
        options.pair_id = scene_id(reg_opts.seed);
        if (reg_oracle) {
          report = register_oracle(scene, config, options);
        } else {
          report = register_clouds(model_from(config, reg_weights, reg_opts.seed), config, p, q,
                                   GroundTruth{scene.gt, scene.correspondences}, options);
        }
      }
      const fs::path dir = reg_opts.out;
      fs::create_directories(dir);
      write_json(dir / "report.json", report.to_json());
      write_json(dir / "prediction.json", prediction_json(report));
      write_json(dir / "hypothesis.json", estimator::to_json(report.final_hypothesis));
      write_text(dir / "correspondences.csv", correspondences_csv(report));
      write_json(dir / "correspondences.json", correspondences_json(report));
      if (reg_aligned) {
        geom::write_ply(dir / "aligned.ply", geom::apply_transform(p, report.final_hypothesis.transform));
      }
      out << report.to_json().dump(2) << "\n";
    } else if (*bench) {
      AppConfig config = config_from(bench_opts);
      if (!bench_estimators.empty()) config.benchmark.estimators = bench_estimators;
      if (!bench_budgets.empty()) config.benchmark.budgets = bench_budgets;
      if (bench_pairs) config.benchmark.pairs = *bench_pairs;
      config.validate();
      const auto rows = run_benchmark(config, bench_opts.seed);
      const std::string csv = benchmark_csv(rows);
      fs::create_directories(bench_opts.out);
      write_text(fs::path(bench_opts.out) / "benchmark.csv", csv);
      out << csv;
    } else if (*ev) {
      const AppConfig config = config_from(eval_opts);
      const auto result = cmd_eval(read_json(eval_pred), read_json(eval_gt), config.thresholds);
      const fs::path dir = eval_opts.out;
      fs::create_directories(dir);
      const auto j = eval::metrics_json(result.pairs, result.aggregate);
      write_json(dir / "metrics.json", j);
      write_text(dir / "metrics_pairs.csv", eval::pairs_csv(result.pairs));
      write_text(dir / "metrics_aggregate.csv", eval::aggregate_csv(result.aggregate));
      out << j["aggregate"].dump(2) << "\n";
    } else if (*weights) {
      const AppConfig config = config_from(w_opts);
      if (w_action == "init") {
        const auto container = export_weights(init_model(config.backbone, config.context, w_opts.seed));
        const fs::path path = w_file.empty() ? fs::path(w_opts.out) / "weights.bin" : fs::path(w_file);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        container.save(path);
        out << "wrote " << path.string() << " (" << container.records().size() << " tensors)\n";
      } else if (w_action == "inspect" || w_action == "check") {
        if (w_file.empty()) throw InputError("weights " + w_action + " needs a file");
        const auto container = WeightContainer::load(w_file);
        if (w_action == "check") {
          Model model = init_model(config.backbone, config.context, 0);
          import_weights(container, model);
          out << "ok\n";
        } else {
          nlohmann::json j;
          char hash[17];
          std::snprintf(hash, sizeof hash, "%016llx",
                        static_cast<unsigned long long>(container.layout_hash()));
          j["layout_hash"] = hash;
          j["tensors"] = nlohmann::json::array();
          for (const auto& r : container.records()) j["tensors"].push_back({{"name", r.name}, {"dims", r.dims}});
          out << j.dump(2) << "\n";
        }
      } else {
        throw InputError("unknown weights action '" + w_action + "' (init, inspect or check)");
      }
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateError& e) {
    err << "degenerate: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace parereg::app
