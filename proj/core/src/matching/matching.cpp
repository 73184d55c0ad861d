#include "parereg/matching/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parereg/error.hpp"

namespace parereg::matching {

ContextConfig ContextConfig::indoor() { return ContextConfig{}; }

ContextConfig ContextConfig::outdoor() {
  ContextConfig c;
  c.hidden = 96;
  c.out = 128;
  c.bucket_width = 2.0;
  return c;
}

namespace {

using BucketMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

BucketMatrix distance_buckets(const geom::PointCloud& cloud, const ContextConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  BucketMatrix b(n, n);
  const int last = static_cast<int>(cfg.distance_buckets) - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = std::sqrt(geom::squared_distance(cloud[static_cast<std::size_t>(i)],
                                                        cloud[static_cast<std::size_t>(j)]));
      const double bucket = std::floor(d / cfg.bucket_width);
      b(i, j) = bucket >= last ? last : static_cast<int>(bucket);
    }
  }
  return b;
}

template <typename S>
void softmax_rows(Matrix<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const S top = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - top).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

template <typename S>
Matrix<S> dense_rows(const Dense<S>& layer, const Matrix<S>& x) {
  if (layer.w.cols() != x.cols()) {
    throw InputError("projection expects width " + std::to_string(layer.w.cols()) + ", got " +
                     std::to_string(x.cols()));
  }
  Matrix<S> out = x * layer.w.transpose();
  out.rowwise() += layer.b.transpose();
  return out;
}

// Multi-head attention of `queries` over `keys`; returns the projected
// update (before the residual add).
template <typename S>
Matrix<S> attend(const AttentionLayer<S>& layer, Eigen::Index heads, const Matrix<S>& queries,
                 const Matrix<S>& keys, const BucketMatrix* buckets) {
  const Matrix<S> q = queries * layer.wq.transpose();
  const Matrix<S> k = keys * layer.wk.transpose();
  const Matrix<S> v = keys * layer.wv.transpose();
  const Eigen::Index width = q.cols() / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(width));
  Matrix<S> mixed(q.rows(), q.cols());
  for (Eigen::Index h = 0; h < heads; ++h) {
    Matrix<S> logits = q.middleCols(h * width, width) * k.middleCols(h * width, width).transpose();
    logits *= scale;
    if (buckets != nullptr) {
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
          logits(i, j) += layer.distance_bias(h, (*buckets)(i, j));
        }
      }
    }
    softmax_rows(logits);
    mixed.middleCols(h * width, width) = logits * v.middleCols(h * width, width);
  }
  return mixed * layer.wo.transpose();
}

template <typename S>
void normalize_rows(Matrix<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const S n = m.row(i).norm();
    if (n > S(0)) m.row(i) /= n;
  }
}

}  // namespace

template <typename S>
std::pair<Matrix<S>, Matrix<S>> context_attention(const ContextParams<S>& params,
                                                  const Matrix<S>& x_p, const Matrix<S>& x_q,
                                                  const geom::PointCloud& p_hat,
                                                  const geom::PointCloud& q_hat) {
  const auto& cfg = params.config;
  if (static_cast<std::size_t>(x_p.rows()) != p_hat.size() ||
      static_cast<std::size_t>(x_q.rows()) != q_hat.size()) {
    throw InputError("context_attention: descriptor rows do not match superpoints");
  }
  if (cfg.heads <= 0 || cfg.hidden % cfg.heads != 0) {
    throw InputError("context_attention: head count must divide the hidden width");
  }
  if (params.self_layers.size() != cfg.rounds || params.cross_layers.size() != cfg.rounds) {
    throw InputError("context_attention: layer count does not match rounds");
  }
  const BucketMatrix bp = distance_buckets(p_hat, cfg);
  const BucketMatrix bq = distance_buckets(q_hat, cfg);

  Matrix<S> hp = dense_rows(params.in_proj, x_p);
  Matrix<S> hq = dense_rows(params.in_proj, x_q);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto& self = params.self_layers[r];
    hp += attend(self, cfg.heads, hp, hp, &bp);
    hq += attend(self, cfg.heads, hq, hq, &bq);
    const auto& cross = params.cross_layers[r];
    const Matrix<S> to_p = attend<S>(cross, cfg.heads, hp, hq, nullptr);
    const Matrix<S> to_q = attend<S>(cross, cfg.heads, hq, hp, nullptr);
    hp += to_p;
    hq += to_q;
  }
  Matrix<S> out_p = dense_rows(params.out_proj, hp);
  Matrix<S> out_q = dense_rows(params.out_proj, hq);
  normalize_rows(out_p);
  normalize_rows(out_q);
  return {std::move(out_p), std::move(out_q)};
}

template <typename S>
Matrix<double> dual_normalized_similarity(const Matrix<S>& h_p, const Matrix<S>& h_q) {
  if (h_p.cols() != h_q.cols()) throw InputError("superpoint features differ in width");
  const Matrix<double> a = h_p.template cast<double>();
  const Matrix<double> b = h_q.template cast<double>();
  Matrix<double> s(a.rows(), b.rows());
  for (Eigen::Index x = 0; x < a.rows(); ++x) {
    for (Eigen::Index y = 0; y < b.rows(); ++y) {
      s(x, y) = std::exp(-(a.row(x) - b.row(y)).squaredNorm());
    }
  }
  const Eigen::VectorXd row_sum = s.rowwise().sum();
  const Eigen::RowVectorXd col_sum = s.colwise().sum();
  Matrix<double> out(s.rows(), s.cols());
  for (Eigen::Index x = 0; x < s.rows(); ++x) {
    for (Eigen::Index y = 0; y < s.cols(); ++y) {
      const double denom = row_sum(x) * col_sum(y);
      out(x, y) = denom > 0.0 ? s(x, y) * s(x, y) / denom : 0.0;
    }
  }
  return out;
}

template <typename S>
SuperpointMatches superpoint_match(const Matrix<S>& h_p, const Matrix<S>& h_q, std::size_t count) {
  if (h_p.rows() == 0 || h_q.rows() == 0) throw InputError("superpoint_match: empty features");
  const Matrix<double> scores = dual_normalized_similarity(h_p, h_q);
  SuperpointMatches all;
  all.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index x = 0; x < scores.rows(); ++x) {
    for (Eigen::Index y = 0; y < scores.cols(); ++y) {
      all.push_back({static_cast<std::size_t>(x), static_cast<std::size_t>(y), scores(x, y)});
    }
  }
  const std::size_t keep = std::min(count, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const SuperpointMatch& a, const SuperpointMatch& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.x != b.x ? a.x < b.x : a.y < b.y;
                    });
  all.resize(keep);
  return all;
}

template <typename S>
PatchAssignment<S> patch_assignment(const MatchHeads<S>& heads, const Matrix<S>& x_p,
                                    const Matrix<S>& x_q) {
  if (x_p.cols() != heads.wm.cols() || x_q.cols() != heads.wm.cols() ||
      heads.ws.cols() != x_p.cols() || heads.ws_bias.size() != 1) {
    throw InputError("patch_assignment: descriptor width does not match heads");
  }
  PatchAssignment<S> out;
  const Matrix<S> a = x_p * heads.wm.transpose();
  const Matrix<S> b = x_q * heads.wm.transpose();
  out.m = a * b.transpose() / std::sqrt(static_cast<S>(x_p.cols()));

  auto saliency = [&](const Matrix<S>& x) {
    Vector<S> logits = x * heads.ws.transpose();
    logits.array() += heads.ws_bias(0);
    return Vector<S>((S(1) / (S(1) + (-logits.array()).exp())).matrix());
  };
  out.sigma_p = saliency(x_p);
  out.sigma_q = saliency(x_q);

  Matrix<S> row_soft = out.m;
  softmax_rows(row_soft);
  Matrix<S> col_soft = out.m.transpose();
  softmax_rows(col_soft);
  out.z = (out.sigma_p * out.sigma_q.transpose()).cwiseProduct(row_soft).cwiseProduct(
      col_soft.transpose());
  return out;
}

namespace {

bool point_match_before(const PointMatch& a, const PointMatch& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.patch != b.patch) return a.patch < b.patch;
  return a.x != b.x ? a.x < b.x : a.y < b.y;
}

template <typename S>
Matrix<S> gather_rows(const Matrix<S>& m, std::span<const std::size_t> rows) {
  Matrix<S> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw InputError("group index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

template <typename S>
PointMatches point_match(const MatchHeads<S>& heads, std::span<const std::size_t> group_p,
                         std::span<const std::size_t> group_q, const Matrix<S>& descriptors_p,
                         const Matrix<S>& descriptors_q, std::size_t per_pair,
                         std::size_t patch_index) {
  if (group_p.empty() || group_q.empty()) return {};
  const auto assignment =
      patch_assignment(heads, gather_rows(descriptors_p, group_p), gather_rows(descriptors_q, group_q));
  PointMatches all;
  all.reserve(group_p.size() * group_q.size());
  for (std::size_t i = 0; i < group_p.size(); ++i) {
    for (std::size_t j = 0; j < group_q.size(); ++j) {
      all.push_back({group_p[i], group_q[j],
                     static_cast<double>(assignment.z(static_cast<Eigen::Index>(i),
                                                      static_cast<Eigen::Index>(j))),
                     patch_index});
    }
  }
  const std::size_t keep = std::min(per_pair, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    point_match_before);
  all.resize(keep);
  return all;
}

PointMatches select_correspondences(std::span<const PointMatches> patches, std::size_t count) {
  PointMatches all;
  for (const auto& p : patches) all.insert(all.end(), p.begin(), p.end());
  if (all.empty()) throw DegenerateError("no correspondences");
  const std::size_t keep = std::min(count, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    point_match_before);
  all.resize(keep);
  return all;
}

template <typename S>
MatchResult match_pyramids(const MatchingParams<S>& params, const conv::FeaturePyramid<S>& p,
                           const conv::FeaturePyramid<S>& q, const MatchingConfig& config) {
  MatchResult out;
  const auto [h_p, h_q] = context_attention(params.context, p.superpoint_descriptors,
                                            q.superpoint_descriptors, p.levels[3], q.levels[3]);
  out.superpoints = superpoint_match(h_p, h_q, config.coarse);
  std::vector<PointMatches> patches;
  patches.reserve(out.superpoints.size());
  for (std::size_t i = 0; i < out.superpoints.size(); ++i) {
    const auto& sp = out.superpoints[i];
    patches.push_back(point_match(params.heads, std::span<const std::size_t>(p.grouping.groups[sp.x]),
                                  std::span<const std::size_t>(q.grouping.groups[sp.y]),
                                  p.point_descriptors, q.point_descriptors, config.per_patch, i));
  }
  out.points = select_correspondences(patches, config.fine);
  return out;
}

MatchingParams<double> init_matching(const ContextConfig& context, Eigen::Index superpoint_width,
                                     Eigen::Index point_width, std::uint64_t seed) {
  Rng rng(seed);
  auto bound = [](Eigen::Index fan_in) { return std::sqrt(3.0 / static_cast<double>(fan_in)); };
  auto square = [&](Eigen::Index n) { return vn::uniform_matrix(n, n, bound(n), rng); };

  MatchingParams<double> p;
  auto& c = p.context;
  c.config = context;
  c.in_proj = {vn::uniform_matrix(context.hidden, superpoint_width, bound(superpoint_width), rng),
               Vector<double>::Zero(context.hidden)};
  for (std::size_t r = 0; r < context.rounds; ++r) {
    AttentionLayer<double> self{square(context.hidden), square(context.hidden),
                                square(context.hidden), square(context.hidden),
                                vn::uniform_matrix(context.heads,
                                                   static_cast<Eigen::Index>(context.distance_buckets),
                                                   1.0, rng)};
    c.self_layers.push_back(std::move(self));
    AttentionLayer<double> cross{square(context.hidden), square(context.hidden),
                                 square(context.hidden), square(context.hidden), {}};
    c.cross_layers.push_back(std::move(cross));
  }
  c.out_proj = {vn::uniform_matrix(context.out, context.hidden, bound(context.hidden), rng),
                Vector<double>::Zero(context.out)};
  p.heads.wm = vn::uniform_matrix(point_width, point_width, bound(point_width), rng);
  p.heads.ws = vn::uniform_matrix(1, point_width, bound(point_width), rng);
  p.heads.ws_bias = Vector<double>::Zero(1);
  return p;
}

#define PAREREG_MATCHING_INSTANTIATE(S)                                                       \
  template std::pair<Matrix<S>, Matrix<S>> context_attention(                                 \
      const ContextParams<S>&, const Matrix<S>&, const Matrix<S>&, const geom::PointCloud&,   \
      const geom::PointCloud&);                                                               \
  template Matrix<double> dual_normalized_similarity(const Matrix<S>&, const Matrix<S>&);     \
  template SuperpointMatches superpoint_match(const Matrix<S>&, const Matrix<S>&, std::size_t); \
  template PatchAssignment<S> patch_assignment(const MatchHeads<S>&, const Matrix<S>&,        \
                                               const Matrix<S>&);                             \
  template PointMatches point_match(const MatchHeads<S>&, std::span<const std::size_t>,       \
                                    std::span<const std::size_t>, const Matrix<S>&,           \
                                    const Matrix<S>&, std::size_t, std::size_t);              \
  template MatchResult match_pyramids(const MatchingParams<S>&, const conv::FeaturePyramid<S>&, \
                                      const conv::FeaturePyramid<S>&, const MatchingConfig&);

PAREREG_MATCHING_INSTANTIATE(float)
PAREREG_MATCHING_INSTANTIATE(double)

#undef PAREREG_MATCHING_INSTANTIATE

}  // namespace parereg::matching
