#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pptr/common/random.hpp"
#include "pptr/geometry/neighbor_index.hpp"
#include "pptr/geometry/plane.hpp"
#include "pptr/primitives/assignment.hpp"

namespace pptr::primitives {

namespace detail {

/// Median distance to the 12th nearest neighbour, padded by 20%.
inline double auto_cluster_eps(const geometry::NeighborIndex& index, const std::vector<Vec3>& pts) {
  const std::size_t k = std::min<std::size_t>(13, pts.size());  // includes the point itself
  std::vector<double> d;
  d.reserve(pts.size());
  for (const auto& p : pts) {
    const auto nb = index.k_nearest(p, k);
    d.push_back(std::sqrt(geometry::squared_distance(p, pts[nb.back()])));
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return 1.2 * d[d.size() / 2];
}

/// Largest connected piece of the marked points (ties: the piece holding
/// the smallest id). Marked means mark[i] == stamp.
class Components {
 public:
  explicit Components(std::vector<std::vector<std::size_t>> adjacency)
      : adj_(std::move(adjacency)), mark_(adj_.size(), 0), seen_(adj_.size(), 0) {}

  bool enabled() const { return !adj_.empty(); }

  std::vector<std::size_t> largest(const std::vector<std::size_t>& members) {
    ++stamp_;
    for (std::size_t id : members) mark_[id] = stamp_;
    std::vector<std::size_t> best, piece, stack;
    for (std::size_t id : members) {  // members ascend, so ties keep the earliest piece
      if (seen_[id] == stamp_) continue;
      piece.clear();
      stack.assign(1, id);
      seen_[id] = stamp_;
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        piece.push_back(p);
        for (std::size_t q : adj_[p]) {
          if (mark_[q] == stamp_ && seen_[q] != stamp_) {
            seen_[q] = stamp_;
            stack.push_back(q);
          }
        }
      }
      if (piece.size() > best.size()) best = piece;
    }
    std::sort(best.begin(), best.end());
    return best;
  }

 private:
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::uint64_t> mark_, seen_;
  std::uint64_t stamp_ = 0;
};

}  // namespace detail

/// Sequential RANSAC: extract up to m_target planes, each the best of
/// `ransac_iters` three-point hypotheses over the points still unclaimed.
/// A hypothesis scores the size of its largest spatially connected inlier
/// piece (or its raw inlier count when clustering is off), which stops one
/// plane from slicing strips off several patches. The winner is refit by
/// least squares, its inliers are re-collected once against the refit,
/// and they are removed. Extraction stops once the best score is below
/// `min_inliers`.
inline PrimitiveAssignment ransac_planes(const PointFrame& frame, const FitConfig& cfg) {
  if (frame.size() == 0) throw Error(Errc::EmptyFrame, "ransac on an empty frame");
  validate(cfg);
  const auto& pts = frame.positions;
  const std::size_t n = pts.size();

  std::vector<std::vector<std::size_t>> adjacency;
  if (cfg.ransac_cluster_eps != 0.0 && n > 1) {
    const geometry::NeighborIndex index(pts);
    const double eps = cfg.ransac_cluster_eps > 0.0 ? cfg.ransac_cluster_eps : detail::auto_cluster_eps(index, pts);
    adjacency.resize(n);
    for (std::size_t i = 0; i < n; ++i) adjacency[i] = index.within_radius(pts[i], eps);
  }
  detail::Components components(std::move(adjacency));

  PrimitiveAssignment out;
  out.m_target = cfg.m_target;
  out.labels.assign(n, kClutter);

  std::vector<std::size_t> remaining(n);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = i;

  auto collect = [&](const Vec3& normal, double offset) {
    std::vector<std::size_t> in;
    for (std::size_t id : remaining)
      if (std::abs(normal.dot(pts[id]) + offset) <= cfg.ransac_threshold) in.push_back(id);
    return components.enabled() ? components.largest(in) : in;
  };

  Rng rng(cfg.seed);
  while (out.m_actual < cfg.m_target && remaining.size() >= 3) {
    std::size_t best_score = 0;
    Vec3 best_n = Vec3::UnitZ();
    double best_d = 0.0;
    for (std::size_t it = 0; it < cfg.ransac_iters; ++it) {
      const std::size_t i0 = rng.index(remaining.size());
      std::size_t i1 = rng.index(remaining.size() - 1);
      if (i1 >= i0) ++i1;
      std::size_t i2 = rng.index(remaining.size() - 2);
      if (i2 >= std::min(i0, i1)) ++i2;
      if (i2 >= std::max(i0, i1)) ++i2;

      const Vec3& a = pts[remaining[i0]];
      const Vec3 ab = pts[remaining[i1]] - a;
      const Vec3 ac = pts[remaining[i2]] - a;
      const Vec3 cross = ab.cross(ac);
      const double cn = cross.norm();
      if (!(cn > 1e-12 * ab.norm() * ac.norm()) || cn == 0.0) continue;
      const Vec3 nrm = cross / cn;
      const double d = -nrm.dot(a);

      std::size_t count = 0;
      for (std::size_t id : remaining) {
        if (std::abs(nrm.dot(pts[id]) + d) <= cfg.ransac_threshold) ++count;
      }
      if (count <= best_score) continue;  // a piece is never larger than the whole
      const std::size_t score = components.enabled() ? collect(nrm, d).size() : count;
      if (score > best_score) {
        best_score = score;
        best_n = nrm;
        best_d = d;
      }
    }
    if (best_score < cfg.min_inliers || best_score < 3) break;

    std::vector<std::size_t> inliers = collect(best_n, best_d);
    std::vector<Vec3> inlier_pts;
    auto gather = [&] {
      inlier_pts.clear();
      for (std::size_t id : inliers) inlier_pts.push_back(pts[id]);
    };
    gather();
    geometry::PlaneParams plane;
    try {
      plane = geometry::fit_plane_lsq(inlier_pts);
      auto refined = collect(plane.normal, plane.offset);
      if (refined.size() >= inliers.size()) {
        inliers = std::move(refined);
        gather();
        plane = geometry::fit_plane_lsq(inlier_pts);
      }
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateGeometry) throw;
      break;  // consensus set is a line; nothing planar left to extract
    }
    ++out.m_actual;
    out.planes.push_back(plane);
    for (std::size_t id : inliers) out.labels[id] = static_cast<int>(out.m_actual);
    std::vector<std::size_t> rest;
    rest.reserve(remaining.size() - inliers.size());
    for (std::size_t id : remaining)
      if (out.labels[id] == kClutter) rest.push_back(id);
    remaining = std::move(rest);
  }
  return out;
}

}  // namespace pptr::primitives
