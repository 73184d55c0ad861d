#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parereg/conv/backbone.hpp"
#include "parereg/conv/pare_conv.hpp"
#include "parereg/geom/point_cloud.hpp"

namespace parereg::matching {

using conv::Dense;
using conv::Vector;
using vn::Matrix;
using vn::RowVector;

/// Interleaved self/cross attention over superpoint descriptors.
///
/// Self-attention logits carry a learned per-head bias indexed by the bucket
/// of the intra-cloud distance between the two superpoints; cross-attention
/// has no positional term. This stands in for the pair-wise geometric
/// embedding of the Geometric Transformer and keeps every input invariant
/// to rigid motion.
struct ContextConfig {
  Eigen::Index hidden = 192;
  Eigen::Index out = 192;
  Eigen::Index heads = 4;
  std::size_t rounds = 3;
  std::size_t distance_buckets = 8;
  double bucket_width = 0.2;  ///< metres per distance bucket

  static ContextConfig indoor();
  static ContextConfig outdoor();  ///< 96-wide attention, 128-wide output
};

template <typename S>
struct AttentionLayer {
  Matrix<S> wq, wk, wv, wo;  ///< hidden × hidden
  Matrix<S> distance_bias;   ///< heads × buckets; empty for cross-attention

  template <typename T>
  AttentionLayer<T> cast() const {
    return {wq.template cast<T>(), wk.template cast<T>(), wv.template cast<T>(),
            wo.template cast<T>(), distance_bias.template cast<T>()};
  }
};

template <typename S>
struct ContextParams {
  ContextConfig config;
  Dense<S> in_proj;  ///< 3d̂ → hidden
  std::vector<AttentionLayer<S>> self_layers;
  std::vector<AttentionLayer<S>> cross_layers;
  Dense<S> out_proj;  ///< hidden → out

  template <typename T>
  ContextParams<T> cast() const;
};

/// Matchability map W_m (3d̃ → 3d̃) and saliency map W_s (3d̃ → 1, with bias).
template <typename S>
struct MatchHeads {
  Matrix<S> wm;
  RowVector<S> ws;
  Vector<S> ws_bias;  ///< one entry

  template <typename T>
  MatchHeads<T> cast() const {
    return {wm.template cast<T>(), ws.template cast<T>(), ws_bias.template cast<T>()};
  }
};

struct MatchingConfig {
  std::size_t coarse = 256;   ///< N_c superpoint correspondences
  std::size_t fine = 1000;    ///< N_f point correspondences
  std::size_t per_patch = 32; ///< candidates kept from each patch pair
};

template <typename S>
struct MatchingParams {
  ContextParams<S> context;
  MatchHeads<S> heads;

  template <typename T>
  MatchingParams<T> cast() const {
    return {context.template cast<T>(), heads.template cast<T>()};
  }
};

struct SuperpointMatch {
  std::size_t x;
  std::size_t y;
  double score;

  bool operator==(const SuperpointMatch&) const = default;
};

/// Scores descending, ties by (x, y).
using SuperpointMatches = std::vector<SuperpointMatch>;

struct PointMatch {
  std::size_t x;      ///< index into P̃
  std::size_t y;      ///< index into Q̃
  double score;       ///< assignment score Z_xy
  std::size_t patch;  ///< index of the parent superpoint match

  bool operator==(const PointMatch&) const = default;
};

/// Scores descending, ties by (patch, x, y).
using PointMatches = std::vector<PointMatch>;

/// Row-wise L2-normalised contextual features H_P, H_Q. Throws InputError on
/// shape mismatches.
template <typename S>
std::pair<Matrix<S>, Matrix<S>> context_attention(const ContextParams<S>& params,
                                                  const Matrix<S>& x_p, const Matrix<S>& x_q,
                                                  const geom::PointCloud& p_hat,
                                                  const geom::PointCloud& q_hat);

/// S̃_xy = S_xy² / (Σ_x′ S_x′y · Σ_y′ S_xy′), S_xy = exp(−‖h_x − h_y‖²).
template <typename S>
Matrix<double> dual_normalized_similarity(const Matrix<S>& h_p, const Matrix<S>& h_q);

/// Global top-`count` entries of the dual-normalised Gaussian correlation.
template <typename S>
SuperpointMatches superpoint_match(const Matrix<S>& h_p, const Matrix<S>& h_q, std::size_t count);

/// Eq. 4–6 quantities for one patch pair; rows of x_p / x_q are the
/// invariant point descriptors of the two groups.
template <typename S>
struct PatchAssignment {
  Matrix<S> m;        ///< matching matrix
  Vector<S> sigma_p;  ///< saliency of rows
  Vector<S> sigma_q;  ///< saliency of columns
  Matrix<S> z;        ///< σ_x σ_y · rowsoftmax(M) ⊙ colsoftmax(M)
};

template <typename S>
PatchAssignment<S> patch_assignment(const MatchHeads<S>& heads, const Matrix<S>& x_p,
                                    const Matrix<S>& x_q);

/// Top `per_pair` local matches inside one superpoint pair, descending.
/// Returns an empty list when either group is empty.
template <typename S>
PointMatches point_match(const MatchHeads<S>& heads, std::span<const std::size_t> group_p,
                         std::span<const std::size_t> group_q, const Matrix<S>& descriptors_p,
                         const Matrix<S>& descriptors_q, std::size_t per_pair,
                         std::size_t patch_index);

/// Global top-`count` by score over every patch result (a point may appear in
/// several pairs). Throws DegenerateError("no correspondences") when empty.
PointMatches select_correspondences(std::span<const PointMatches> patches, std::size_t count);

struct MatchResult {
  SuperpointMatches superpoints;
  PointMatches points;
};

/// Coarse-to-fine matching of two backbone outputs.
template <typename S>
MatchResult match_pyramids(const MatchingParams<S>& params, const conv::FeaturePyramid<S>& p,
                           const conv::FeaturePyramid<S>& q, const MatchingConfig& config);

MatchingParams<double> init_matching(const ContextConfig& context, Eigen::Index superpoint_width,
                                     Eigen::Index point_width, std::uint64_t seed);

template <typename Params, typename F>
void visit_parameters(Params& params, F&& f);

// ---------------------------------------------------------------------------

template <typename S>
template <typename T>
ContextParams<T> ContextParams<S>::cast() const {
  ContextParams<T> out;
  out.config = config;
  out.in_proj = in_proj.template cast<T>();
  for (const auto& l : self_layers) out.self_layers.push_back(l.template cast<T>());
  for (const auto& l : cross_layers) out.cross_layers.push_back(l.template cast<T>());
  out.out_proj = out_proj.template cast<T>();
  return out;
}

template <typename Params, typename F>
void visit_parameters(Params& params, F&& f) {
  auto& c = params.context;
  f(std::string("context.in_proj.w"), c.in_proj.w);
  f(std::string("context.in_proj.b"), c.in_proj.b);
  auto visit_attn = [&](const std::string& p, auto& layer) {
    f(p + ".wq", layer.wq);
    f(p + ".wk", layer.wk);
    f(p + ".wv", layer.wv);
    f(p + ".wo", layer.wo);
    if (layer.distance_bias.size() > 0) f(p + ".distance_bias", layer.distance_bias);
  };
  for (std::size_t r = 0; r < c.self_layers.size(); ++r) {
    visit_attn("context.round" + std::to_string(r) + ".self", c.self_layers[r]);
  }
  for (std::size_t r = 0; r < c.cross_layers.size(); ++r) {
    visit_attn("context.round" + std::to_string(r) + ".cross", c.cross_layers[r]);
  }
  f(std::string("context.out_proj.w"), c.out_proj.w);
  f(std::string("context.out_proj.b"), c.out_proj.b);
  f(std::string("heads.matchability.w"), params.heads.wm);
  f(std::string("heads.saliency.w"), params.heads.ws);
  f(std::string("heads.saliency.b"), params.heads.ws_bias);
}

}  // namespace parereg::matching
