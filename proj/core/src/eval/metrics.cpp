#include "parereg/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "parereg/error.hpp"

namespace parereg::eval {

MetricThresholds MetricThresholds::indoor() { return MetricThresholds{}; }

MetricThresholds MetricThresholds::outdoor() {
  MetricThresholds t;
  t.rotation_deg = 5.0;
  t.translation = 2.0;
  return t;
}

void MetricThresholds::validate() const {
  if (!(inlier_radius > 0.0) || !(fmr > 0.0) || !(rmse > 0.0) || !(rotation_deg > 0.0) ||
      !(translation > 0.0)) {
    throw InputError("metric thresholds must be positive");
  }
}

namespace {

void check_pairs(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.empty()) throw InputError("empty correspondence set");
  if (source.size() != target.size()) throw InputError("source and target counts differ");
}

template <typename T, typename Pred>
double fraction(std::span<const T> values, Pred pred) {
  if (values.empty()) throw InputError("no pairs to evaluate");
  const auto hits = std::count_if(values.begin(), values.end(), pred);
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

}  // namespace

double inlier_ratio(std::span<const Vec3> source, std::span<const Vec3> target,
                    const geom::RigidTransform& gt, double radius) {
  check_pairs(source, target);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if ((gt.apply(source[i]) - target[i]).norm() < radius) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(source.size());
}

double feature_matching_recall(std::span<const double> inlier_ratios, double threshold) {
  return fraction(inlier_ratios, [&](double ir) { return ir > threshold; });
}

double rmse(std::span<const Vec3> source, std::span<const Vec3> target,
            const geom::RigidTransform& estimate) {
  check_pairs(source, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    sum += (estimate.apply(source[i]) - target[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(source.size()));
}

double registration_recall(std::span<const double> rmses, double threshold) {
  return fraction(rmses, [&](double e) { return e < threshold; });
}

double rotation_error_deg(const geom::Rotation& estimate, const geom::Rotation& gt) {
  const double trace = (estimate.matrix().transpose() * gt.matrix()).trace();
  const double c = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double translation_error(const Vec3& estimate, const Vec3& gt) { return (estimate - gt).norm(); }

double transformation_recall(std::span<const PoseError> errors, double max_re_deg, double max_te) {
  return fraction(errors, [&](const PoseError& e) { return e.re_deg < max_re_deg && e.te < max_te; });
}

AggregateMetrics aggregate(const std::map<std::string, PairMetrics>& pairs,
                           const MetricThresholds& thresholds) {
  thresholds.validate();
  if (pairs.empty()) throw InputError("no pairs to evaluate");
  std::vector<double> irs;
  std::vector<double> rmses;
  std::vector<PoseError> poses;
  double sum_re = 0.0;
  double sum_te = 0.0;
  std::size_t aligned = 0;
  for (const auto& [id, m] : pairs) {
    irs.push_back(m.ir);
    rmses.push_back(m.rmse);
    poses.push_back({m.re_deg, m.te_m});
    if (m.rmse < thresholds.rmse) {
      sum_re += m.re_deg;
      sum_te += m.te_m;
      ++aligned;
    }
  }
  AggregateMetrics out;
  out.fmr = feature_matching_recall(irs, thresholds.fmr);
  out.rr = registration_recall(rmses, thresholds.rmse);
  out.tr = transformation_recall(poses, thresholds.rotation_deg, thresholds.translation);
  if (aligned > 0) {
    out.mean_re = sum_re / static_cast<double>(aligned);
    out.mean_te = sum_te / static_cast<double>(aligned);
  }
  return out;
}

nlohmann::json metrics_json(const std::map<std::string, PairMetrics>& pairs,
                            const AggregateMetrics& agg) {
  nlohmann::json j;
  j["pairs"] = nlohmann::json::object();
  for (const auto& [id, m] : pairs) {
    j["pairs"][id] = {{"ir", m.ir}, {"rmse", m.rmse}, {"re_deg", m.re_deg}, {"te_m", m.te_m}};
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j["aggregate"] = {{"fmr", agg.fmr},
                    {"rr", agg.rr},
                    {"tr", agg.tr},
                    {"mean_re", opt(agg.mean_re)},
                    {"mean_te", opt(agg.mean_te)}};
  return j;
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string pairs_csv(const std::map<std::string, PairMetrics>& pairs) {
  std::string out = "pair,ir,rmse,re_deg,te_m\n";
  for (const auto& [id, m] : pairs) {
    out += id + "," + format_double(m.ir) + "," + format_double(m.rmse) + "," +
           format_double(m.re_deg) + "," + format_double(m.te_m) + "\n";
  }
  return out;
}

std::string aggregate_csv(const AggregateMetrics& agg) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return "fmr,rr,tr,mean_re,mean_te\n" + format_double(agg.fmr) + "," + format_double(agg.rr) +
         "," + format_double(agg.tr) + "," + opt(agg.mean_re) + "," + opt(agg.mean_te) + "\n";
}

}  // namespace parereg::eval
