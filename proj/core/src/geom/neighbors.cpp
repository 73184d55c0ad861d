#include "parereg/geom/neighbors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>

#include "parereg/error.hpp"

namespace parereg::geom {

namespace {

// Strict weak order used everywhere: distance, then index.
bool closer(const Neighbor& a, const Neighbor& b) {
  return a.sq_distance < b.sq_distance ||
         (a.sq_distance == b.sq_distance && a.index < b.index);
}

struct Closer {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

// Bounded max-heap keeping the k best candidates seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(const Neighbor& n) {
    if (heap_.size() < k_) {
      heap_.push(n);
    } else if (closer(n, heap_.top())) {
      heap_.pop();
      heap_.push(n);
    }
  }

  [[nodiscard]] bool full() const { return heap_.size() == k_; }
  [[nodiscard]] double worst() const { return heap_.top().sq_distance; }

  std::vector<Neighbor> take_sorted() {
    std::vector<Neighbor> out;
    out.reserve(heap_.size());
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<Neighbor, std::vector<Neighbor>, Closer> heap_;
};

std::vector<Neighbor> exhaustive_row(const PointCloud& reference, const Vec3& q, std::size_t k) {
  std::vector<Neighbor> all(reference.size());
  for (std::size_t j = 0; j < reference.size(); ++j) {
    all[j] = {j, squared_distance(reference[j], q)};
  }
  const std::size_t kk = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(), closer);
  all.resize(kk);
  return all;
}

// Uniform bucketing of the reference cloud. Cells are searched in growing
// Chebyshev rings around the query cell until no unvisited cell can hold a
// point that would beat (or tie) the current k-th candidate.
class Grid {
 public:
  Grid(const PointCloud& reference, std::size_t k) : reference_(reference) {
    Vec3 lo = reference[0];
    Vec3 hi = reference[0];
    for (const auto& p : reference) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 extent = (hi - lo).cwiseMax(1e-9);
    // Aim for about k points per cell, assuming a roughly uniform fill of the
    // bounding box; the cell count is capped so sparse outliers cannot blow
    // up memory.
    const double volume = extent.prod();
    const double target_cells =
        std::max(1.0, static_cast<double>(reference.size()) / std::max<double>(1.0, k));
    double h = std::cbrt(volume / target_cells);
    for (int a = 0; a < 3; ++a) h = std::max(h, extent[a] / 256.0);
    const double max_cells = 8.0 * static_cast<double>(reference.size()) + 64.0;
    for (;;) {
      for (int a = 0; a < 3; ++a) {
        dims_[a] = static_cast<std::int64_t>(std::floor(extent[a] / h)) + 1;
      }
      if (static_cast<double>(dims_[0] * dims_[1] * dims_[2]) <= max_cells) break;
      h *= 1.25;
    }
    cell_ = h;
    origin_ = lo;
    const auto total = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(total + 1, 0);
    std::vector<std::size_t> cell_of(reference.size());
    for (std::size_t i = 0; i < reference.size(); ++i) {
      cell_of[i] = flat(cell_coords(reference[i]));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < total; ++c) start_[c + 1] += start_[c];
    members_.resize(reference.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < reference.size(); ++i) members_[fill[cell_of[i]]++] = i;
  }

  std::vector<Neighbor> query(const Vec3& q, std::size_t k) const {
    TopK best(k);
    const auto c = cell_coords(q);
    const std::int64_t max_ring =
        std::max({c[0], dims_[0] - 1 - c[0], c[1], dims_[1] - 1 - c[1], c[2], dims_[2] - 1 - c[2]});
    for (std::int64_t r = 0; r <= max_ring; ++r) {
      visit_ring(c, r, q, best);
      if (best.full()) {
        const double bound = ring_bound(c, r, q);
        if (best.worst() < bound * bound) break;
      }
    }
    return best.take_sorted();
  }

 private:
  using Coords = std::array<std::int64_t, 3>;

  Coords cell_coords(const Vec3& p) const {
    Coords c{};
    for (int a = 0; a < 3; ++a) {
      const auto v = static_cast<std::int64_t>(std::floor((p[a] - origin_[a]) / cell_));
      c[a] = std::clamp<std::int64_t>(v, 0, dims_[a] - 1);
    }
    return c;
  }

  std::size_t flat(const Coords& c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  void visit_cell(const Coords& c, const Vec3& q, TopK& best) const {
    const std::size_t f = flat(c);
    for (std::size_t m = start_[f]; m < start_[f + 1]; ++m) {
      const std::size_t j = members_[m];
      best.offer({j, squared_distance(reference_[j], q)});
    }
  }

  void visit_ring(const Coords& c, std::int64_t r, const Vec3& q, TopK& best) const {
    Coords lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, c[a] - r);
      hi[a] = std::min<std::int64_t>(dims_[a] - 1, c[a] + r);
    }
    for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
      for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
        for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
          const bool on_shell = std::abs(x - c[0]) == r || std::abs(y - c[1]) == r ||
                                std::abs(z - c[2]) == r;
          if (on_shell) visit_cell({x, y, z}, q, best);
        }
      }
    }
  }

  // Lower bound on the distance from q to any cell outside rings 0..r.
  double ring_bound(const Coords& c, std::int64_t r, const Vec3& q) const {
    double bound = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (c[a] - r - 1 >= 0) {
        const double face = origin_[a] + static_cast<double>(c[a] - r) * cell_;
        bound = std::min(bound, std::max(0.0, q[a] - face));
      }
      if (c[a] + r + 1 <= dims_[a] - 1) {
        const double face = origin_[a] + static_cast<double>(c[a] + r + 1) * cell_;
        bound = std::min(bound, std::max(0.0, face - q[a]));
      }
    }
    // Binning of points near a cell face is subject to rounding; shave the
    // bound so such points are never skipped.
    return std::max(0.0, bound - 1e-9 * cell_);
  }

  const PointCloud& reference_;
  double cell_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  std::array<std::int64_t, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> members_;
};

}  // namespace

NeighborGraph knn(const PointCloud& reference, const PointCloud& queries, std::size_t k,
                  KnnBackend backend) {
  if (k == 0) throw InputError("knn requires k >= 1");
  require_non_empty(reference);
  if (backend == KnnBackend::automatic) {
    backend = reference.size() <= kExhaustiveLimit ? KnnBackend::exhaustive : KnnBackend::grid;
  }
  NeighborGraph graph;
  graph.rows.resize(queries.size());
  if (backend == KnnBackend::exhaustive) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
      graph.rows[i] = exhaustive_row(reference, queries[i], k);
    }
  } else {
    const Grid grid(reference, k);
    for (std::size_t i = 0; i < queries.size(); ++i) graph.rows[i] = grid.query(queries[i], k);
  }
  return graph;
}

std::vector<std::size_t> nearest_indices(const PointCloud& reference, const PointCloud& queries) {
  const NeighborGraph g = knn(reference, queries, 1);
  std::vector<std::size_t> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i][0].index;
  return out;
}

NodeGrouping point_to_node_group(const PointCloud& dense, const PointCloud& nodes) {
  require_non_empty(dense);
  require_non_empty(nodes);
  NodeGrouping grouping;
  grouping.node_of = nearest_indices(nodes, dense);
  grouping.groups.resize(nodes.size());
  for (std::size_t i = 0; i < dense.size(); ++i) grouping.groups[grouping.node_of[i]].push_back(i);
  return grouping;
}

}  // namespace parereg::geom
