#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "pptr/geometry/types.hpp"

namespace pptr::geometry {

/// Exact k-d tree over one frame's positions.
///
/// k-NN results are ordered by (squared distance, point id); radius results
/// by point id. Pruning uses a strict comparison so equidistant candidates
/// on the far side of a split are still visited and the tie rule holds.
class NeighborIndex {
 public:
  explicit NeighborIndex(std::span<const Vec3> points)
      : points_(points.begin(), points.end()), order_(points.size()) {
    if (points_.empty()) throw Error(Errc::EmptyFrame, "cannot index an empty frame");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!points_[i].allFinite())
        throw Error(Errc::NonFiniteInput, "point " + std::to_string(i) + " is not finite");
    }
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t id) const { return points_[id]; }

  std::vector<std::size_t> k_nearest(const Vec3& query, std::size_t k) const {
    const std::size_t want = std::min(k, points_.size());
    std::vector<std::size_t> out;
    if (want == 0) return out;
    Heap heap;
    knn_visit(0, query, want, heap);
    std::vector<Candidate> sorted;
    sorted.reserve(heap.size());
    while (!heap.empty()) {
      sorted.push_back(heap.top());
      heap.pop();
    }
    out.reserve(sorted.size());
    for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) out.push_back(it->second);
    return out;
  }

  /// All ids with squared distance <= radius^2, ascending by id.
  std::vector<std::size_t> within_radius(const Vec3& query, double radius) const {
    std::vector<std::size_t> out;
    radius_visit(0, query, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;
  using Candidate = std::pair<double, std::size_t>;  // (d2, id), lexicographic
  using Heap = std::priority_queue<Candidate>;

  struct Node {
    std::size_t begin = 0, end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
  };

  std::uint32_t build(std::size_t begin, std::size_t end) {
    const auto idx = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return idx;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return idx;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double ca = points_[a][axis], cb = points_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    nodes_[idx].axis = axis;
    nodes_[idx].split = points_[order_[mid]][axis];
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  void knn_visit(std::uint32_t ni, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t id = order_[i];
        const Candidate c{squared_distance(q, points_[id]), id};
        if (heap.size() < k) {
          heap.push(c);
        } else if (c < heap.top()) {
          heap.pop();
          heap.push(c);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    knn_visit(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().first) knn_visit(far, q, k, heap);
  }

  void radius_visit(std::uint32_t ni, const Vec3& q, double r2, std::vector<std::size_t>& out) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t id = order_[i];
        if (squared_distance(q, points_[id]) <= r2) out.push_back(id);
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    radius_visit(near, q, r2, out);
    if (diff * diff <= r2) radius_visit(far, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline NeighborIndex build_neighbor_index(const PointFrame& frame) {
  if (frame.size() == 0) throw Error(Errc::EmptyFrame, "cannot index an empty frame");
  return NeighborIndex(frame.positions);
}

inline std::vector<std::size_t> k_nearest(const NeighborIndex& index, const Vec3& query,
                                          std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidConfig, "k must be >= 1");
  return index.k_nearest(query, k);
}

}  // namespace pptr::geometry
