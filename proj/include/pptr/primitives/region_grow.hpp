#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>

#include "pptr/geometry/plane.hpp"
#include "pptr/primitives/normalize.hpp"

namespace pptr::primitives {

/// Region growing over the k-NN graph.
///
/// Seeds are taken flattest-first (smallest local fit residual, then id).
/// A neighbour joins when its (unoriented) normal is within
/// `rg_angle_threshold` of the current point's and it lies within
/// `rg_distance_threshold` of the region's running plane. The running plane
/// is refit whenever the region doubles in size. Regions smaller than
/// `min_inliers` dissolve into clutter; the result is normalized to
/// `m_target`.
inline PrimitiveAssignment region_grow(const PointFrame& frame, const FitConfig& cfg) {
  if (!frame.normals) throw Error(Errc::MissingNormals, "region growing needs per-point normals");
  if (frame.size() == 0) throw Error(Errc::EmptyFrame, "region growing on an empty frame");
  validate(cfg);
  const auto& pts = frame.positions;
  const auto& nrm = *frame.normals;
  const std::size_t n = pts.size();
  const std::size_t k = std::min(cfg.knn_k, n);

  const geometry::NeighborIndex index(pts);
  std::vector<std::vector<std::size_t>> knn(n);
  std::vector<double> residual(n, std::numeric_limits<double>::infinity());
  std::vector<Vec3> local;
  for (std::size_t i = 0; i < n; ++i) {
    knn[i] = index.k_nearest(pts[i], k);
    if (knn[i].size() < 3) continue;
    local.clear();
    for (std::size_t j : knn[i]) local.push_back(pts[j]);
    try {
      residual[i] = geometry::fit_plane_lsq(local).rms_residual;
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateGeometry) throw;
    }
  }

  std::vector<std::size_t> seeds(n);
  std::iota(seeds.begin(), seeds.end(), std::size_t{0});
  std::stable_sort(seeds.begin(), seeds.end(),
                   [&](std::size_t a, std::size_t b) { return residual[a] < residual[b]; });

  const double cos_thr = std::cos(cfg.rg_angle_threshold * std::numbers::pi / 180.0) - 1e-12;
  constexpr int kUnvisited = -1;
  std::vector<int> label(n, kUnvisited);

  PrimitiveAssignment raw;
  raw.m_target = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> region;
  std::vector<Vec3> region_pts;
  std::deque<std::size_t> queue;
  int next_id = 1;

  for (std::size_t seed : seeds) {
    if (label[seed] != kUnvisited) continue;
    region.assign(1, seed);
    label[seed] = next_id;
    PlaneParams plane{nrm[seed], -nrm[seed].dot(pts[seed]), 0.0};
    std::size_t last_fit = 1;
    queue.assign(1, seed);

    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (std::size_t q : knn[p]) {
        if (label[q] != kUnvisited) continue;
        if (std::abs(nrm[p].dot(nrm[q])) < cos_thr) continue;
        if (plane.distance(pts[q]) > cfg.rg_distance_threshold) continue;
        label[q] = next_id;
        region.push_back(q);
        queue.push_back(q);
        if (region.size() >= 3 && region.size() >= 2 * last_fit) {
          region_pts.clear();
          for (std::size_t r : region) region_pts.push_back(pts[r]);
          try {
            plane = geometry::fit_plane_lsq(region_pts);
          } catch (const Error& e) {
            if (e.code() != Errc::DegenerateGeometry) throw;
          }
          last_fit = region.size();
        }
      }
    }

    if (region.size() < std::max<std::size_t>(cfg.min_inliers, 1)) {
      for (std::size_t r : region) label[r] = kClutter;
      continue;
    }
    region_pts.clear();
    for (std::size_t r : region) region_pts.push_back(pts[r]);
    try {
      plane = geometry::fit_plane_lsq(region_pts);
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateGeometry) throw;
    }
    raw.planes.push_back(plane);
    ++raw.m_actual;
    ++next_id;
  }

  raw.labels.assign(label.begin(), label.end());
  return normalize_to_m(raw, cfg.m_target);
}

}  // namespace pptr::primitives
