#include "parereg/conv/pare_conv.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parereg/error.hpp"

namespace parereg::conv {

template <typename S>
std::vector<VectorFeature<S>> spatial_stats(const Vec3& center, std::span<const Vec3> neighbors) {
  if (neighbors.empty()) throw InputError("spatial_stats: no neighbours");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : neighbors) mean += p - center;
  mean /= static_cast<double>(neighbors.size());

  std::vector<VectorFeature<S>> out;
  out.reserve(neighbors.size());
  for (const auto& p : neighbors) {
    const Vec3 rel = p - center;
    VectorFeature<S> f(3, 3);
    f.row(0) = rel.transpose().cast<S>();
    f.row(1) = mean.transpose().cast<S>();
    f.row(2) = rel.cross(mean).transpose().cast<S>();
    out.push_back(std::move(f));
  }
  return out;
}

template <typename S>
Vector<S> correlation_scores(const CorrelationNet<S>& net, const VectorFeature<S>& stats) {
  VectorFeature<S> h = stats;
  for (std::size_t i = 0; i < net.vn_layers.size(); ++i) {
    h = vn::vn_linear(net.vn_layers[i], h);
    if (i < net.vn_activations.size()) h = vn::vn_relu(net.vn_activations[i], h);
  }
  Vector<S> x = vn::vn_magnitudes<S>(h);
  for (std::size_t i = 0; i < net.mlp.size(); ++i) {
    const auto& layer = net.mlp[i];
    if (layer.w.cols() != x.size()) throw InputError("correlation MLP width mismatch");
    x = layer.w * x + layer.b;
    if (i + 1 < net.mlp.size()) x = x.cwiseMax(S(0));
  }
  const S top = x.maxCoeff();
  Vector<S> e = (x.array() - top).exp().matrix();
  return e / e.sum();
}

template <typename S>
VectorFeature<S> aggregate(const KernelBank<S>& bank, const Matrix<S>& scores,
                           std::span<const VectorFeature<S>> phis) {
  if (scores.rows() != static_cast<Eigen::Index>(phis.size()) ||
      scores.cols() != bank.kernel_count()) {
    throw InputError("aggregate: score matrix shape mismatch");
  }
  const Eigen::Index in = bank.weights.front().cols();
  VectorFeature<S> out = VectorFeature<S>::Zero(bank.out_channels(), 3);
  for (Eigen::Index k = 0; k < bank.kernel_count(); ++k) {
    VectorFeature<S> mixed = VectorFeature<S>::Zero(in, 3);
    for (std::size_t j = 0; j < phis.size(); ++j) {
      if (phis[j].rows() != in) {
        throw InputError("pare_conv: kernel expects " + std::to_string(in) +
                         " input channels, got " + std::to_string(phis[j].rows()));
      }
      mixed += scores(static_cast<Eigen::Index>(j), k) * phis[j];
    }
    out += bank.weights[static_cast<std::size_t>(k)] * mixed;
  }
  return out;
}

template <typename S>
VectorFeature<S> center_feature(std::span<const geom::Neighbor> row,
                                std::span<const VectorFeature<S>> support_features) {
  if (row.empty()) throw InputError("empty neighborhood");
  if (row.front().sq_distance == 0.0) return support_features[row.front().index];
  VectorFeature<S> sum = support_features[row.front().index];
  for (std::size_t j = 1; j < row.size(); ++j) sum += support_features[row[j].index];
  return sum / static_cast<S>(row.size());
}

template <typename S>
VectorFeature<S> pare_conv(const PareConv<S>& conv, const Vec3& center,
                           const geom::PointCloud& support, std::span<const geom::Neighbor> row,
                           std::span<const VectorFeature<S>> support_features) {
  if (row.empty()) throw InputError("empty neighborhood");
  if (conv.correlation.kernel_count() != conv.bank.kernel_count()) {
    throw InputError("correlation width does not match kernel count");
  }
  std::vector<Vec3> positions;
  positions.reserve(row.size());
  for (const auto& n : row) positions.push_back(support[n.index]);
  const auto stats = spatial_stats<S>(center, positions);

  Matrix<S> scores(static_cast<Eigen::Index>(row.size()), conv.bank.kernel_count());
  for (std::size_t j = 0; j < row.size(); ++j) {
    scores.row(static_cast<Eigen::Index>(j)) =
        correlation_scores(conv.correlation, stats[j]).transpose();
  }

  std::vector<VectorFeature<S>> phis;
  phis.reserve(row.size());
  if (conv.bank.mode == ConvMode::node) {
    for (const auto& n : row) phis.push_back(support_features[n.index]);
  } else {
    const VectorFeature<S> own = center_feature<S>(row, support_features);
    for (const auto& n : row) {
      const VectorFeature<S>& fj = support_features[n.index];
      phis.push_back(vn::vn_concat<S>(fj - own, fj));
    }
  }
  return aggregate<S>(conv.bank, scores, phis);
}

template <typename S>
std::vector<VectorFeature<S>> pare_resblock(const ResBlock<S>& block, const geom::PointCloud& queries,
                                            const geom::PointCloud& support,
                                            const geom::NeighborGraph& graph,
                                            std::span<const VectorFeature<S>> support_features) {
  if (graph.size() != queries.size()) throw InputError("neighbour graph does not match queries");
  if (support_features.size() != support.size()) {
    throw InputError("support features do not match support cloud");
  }
  std::vector<VectorFeature<S>> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& row = graph[i];
    VectorFeature<S> h = pare_conv<S>(block.conv, queries[i], support, row, support_features);
    h = vn::vn_relu(block.conv_activation, h);
    h = vn::vn_block(block.expand, h);
    const VectorFeature<S> skip = center_feature<S>(row, support_features);
    if (block.shortcut) {
      h += vn::vn_linear(*block.shortcut, skip);
    } else {
      if (skip.rows() != h.rows()) throw InputError("identity shortcut needs C == C'");
      h += skip;
    }
    out.push_back(std::move(h));
  }
  return out;
}

template <typename S>
std::vector<VectorFeature<S>> strided_block(const ResBlock<S>& block,
                                            const geom::PointCloud& sparse_centers,
                                            const geom::PointCloud& dense_cloud,
                                            std::span<const VectorFeature<S>> dense_features,
                                            std::size_t k) {
  if (dense_cloud.empty()) throw InputError("empty neighborhood");
  const auto graph = geom::knn(dense_cloud, sparse_centers, k);
  return pare_resblock<S>(block, sparse_centers, dense_cloud, graph, dense_features);
}

template <typename S>
std::vector<VectorFeature<S>> nearest_upsample(std::span<const VectorFeature<S>> sparse_features,
                                               const geom::PointCloud& sparse_cloud,
                                               const geom::PointCloud& dense_cloud,
                                               std::span<const VectorFeature<S>> skip_features,
                                               const vn::VnBlock<S>& fusion) {
  if (sparse_features.size() != sparse_cloud.size() || skip_features.size() != dense_cloud.size()) {
    throw InputError("nearest_upsample: feature counts do not match clouds");
  }
  const auto nearest = geom::nearest_indices(sparse_cloud, dense_cloud);
  std::vector<VectorFeature<S>> out;
  out.reserve(dense_cloud.size());
  for (std::size_t i = 0; i < dense_cloud.size(); ++i) {
    out.push_back(vn::vn_block(fusion, vn::vn_concat<S>(sparse_features[nearest[i]], skip_features[i])));
  }
  return out;
}

CorrelationNet<double> init_correlation(Eigen::Index hidden, Eigen::Index kernels,
                                        bool neutral_correlation, Rng& rng, double length_scale) {
  if (!(length_scale > 0.0)) throw InputError("correlation length scale must be positive");
  CorrelationNet<double> net;
  net.vn_layers.push_back(vn::init_linear(hidden, 3, rng));
  net.vn_layers.back().w.leftCols(2) /= length_scale;
  net.vn_layers.back().w.col(2) /= length_scale * length_scale;
  net.vn_activations.push_back(vn::init_nonlinearity(hidden, rng));
  net.vn_layers.push_back(vn::init_linear(hidden, hidden, rng));
  net.vn_activations.push_back(vn::init_nonlinearity(hidden, rng));

  const double a = std::sqrt(3.0 / static_cast<double>(hidden));
  net.mlp.push_back({vn::uniform_matrix(hidden, hidden, a, rng), Vector<double>::Zero(hidden)});
  Dense<double> last{vn::uniform_matrix(kernels, hidden, a, rng), Vector<double>::Zero(kernels)};
  if (neutral_correlation) last.w.setZero();
  net.mlp.push_back(std::move(last));
  return net;
}

KernelBank<double> init_bank(Eigen::Index out, Eigen::Index in, Eigen::Index kernels,
                             ConvMode mode, Rng& rng) {
  const Eigen::Index cols = mode == ConvMode::edge ? 2 * in : in;
  const double a = std::sqrt(3.0 / static_cast<double>(cols * kernels));
  KernelBank<double> bank{{}, mode};
  for (Eigen::Index k = 0; k < kernels; ++k) bank.weights.push_back(vn::uniform_matrix(out, cols, a, rng));
  return bank;
}

ResBlock<double> init_resblock(Eigen::Index in, Eigen::Index out, Eigen::Index kernels,
                               Eigen::Index correlation_hidden, ConvMode mode,
                               bool neutral_correlation, Rng& rng, double length_scale) {
  const Eigen::Index mid = std::max<Eigen::Index>(1, out / 2);
  ResBlock<double> block;
  block.conv.bank = init_bank(mid, in, kernels, mode, rng);
  block.conv.correlation =
      init_correlation(correlation_hidden, kernels, neutral_correlation, rng, length_scale);
  block.conv_activation = vn::init_nonlinearity(mid, rng);
  block.expand = vn::init_block(out, mid, rng);
  if (in != out) block.shortcut = vn::init_linear(out, in, rng);
  return block;
}

#define PAREREG_CONV_INSTANTIATE(S)                                                             \
  template VectorFeature<S> center_feature<S>(std::span<const geom::Neighbor>,                  \
                                              std::span<const VectorFeature<S>>);               \
  template std::vector<VectorFeature<S>> spatial_stats<S>(const Vec3&, std::span<const Vec3>);  \
  template Vector<S> correlation_scores(const CorrelationNet<S>&, const VectorFeature<S>&);     \
  template VectorFeature<S> aggregate(const KernelBank<S>&, const Matrix<S>&,                   \
                                      std::span<const VectorFeature<S>>);                       \
  template VectorFeature<S> pare_conv(const PareConv<S>&, const Vec3&, const geom::PointCloud&, \
                                      std::span<const geom::Neighbor>,                          \
                                      std::span<const VectorFeature<S>>);                       \
  template std::vector<VectorFeature<S>> pare_resblock(                                         \
      const ResBlock<S>&, const geom::PointCloud&, const geom::PointCloud&,                     \
      const geom::NeighborGraph&, std::span<const VectorFeature<S>>);                           \
  template std::vector<VectorFeature<S>> strided_block(const ResBlock<S>&,                      \
                                                       const geom::PointCloud&,                 \
                                                       const geom::PointCloud&,                 \
                                                       std::span<const VectorFeature<S>>,       \
                                                       std::size_t);                            \
  template std::vector<VectorFeature<S>> nearest_upsample(                                      \
      std::span<const VectorFeature<S>>, const geom::PointCloud&, const geom::PointCloud&,      \
      std::span<const VectorFeature<S>>, const vn::VnBlock<S>&);

PAREREG_CONV_INSTANTIATE(float)
PAREREG_CONV_INSTANTIATE(double)

#undef PAREREG_CONV_INSTANTIATE

}  // namespace parereg::conv
