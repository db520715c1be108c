#pragma once

#include <cmath>
#include <limits>

#include "pptr/common/random.hpp"
#include "pptr/geometry/plane.hpp"
#include "pptr/primitives/assignment.hpp"

namespace pptr::primitives {

namespace detail {

inline std::size_t nearest_centroid(const Vec3& p, const std::vector<Vec3>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = geometry::squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

/// LSQ plane, or a +z plane through the centroid when the cluster is too
/// small or degenerate. The residual is recorded either way.
inline PlaneParams cluster_plane(const std::vector<Vec3>& pts) {
  try {
    return geometry::fit_plane_lsq(pts);
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateGeometry) throw;
  }
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  PlaneParams plane{Vec3::UnitZ(), -c.z(), 0.0};
  double ss = 0.0;
  for (const auto& p : pts) ss += plane.signed_distance(p) * plane.signed_distance(p);
  plane.rms_residual = std::sqrt(ss / static_cast<double>(pts.size()));
  return plane;
}

}  // namespace detail

/// Lloyd's k-means on xyz with k-means++ seeding. Every point gets a real
/// primitive id (no clutter). Used as the non-geometric partition baseline.
inline PrimitiveAssignment kmeans_partition(const PointFrame& frame, std::size_t m,
                                            std::uint64_t seed) {
  const auto& pts = frame.positions;
  const std::size_t n = pts.size();
  if (n == 0) throw Error(Errc::EmptyFrame, "k-means on an empty frame");
  if (m < 1 || m > n) throw Error(Errc::InvalidConfig, "k-means needs 1 <= m <= N");

  Rng rng(seed);
  std::vector<Vec3> centroids;
  centroids.reserve(m);
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.index(n);
  centroids.push_back(pts[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = geometry::squared_distance(pts[i], pts[first]);

  while (centroids.size() < m) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > r) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    centroids.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], geometry::squared_distance(pts[i], pts[pick]));
  }

  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = detail::nearest_centroid(pts[i], centroids);
    std::vector<Vec3> sum(m, Vec3::Zero());
    std::vector<std::size_t> cnt(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += pts[i];
      ++cnt[assign[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      if (cnt[c] == 0) continue;
      const Vec3 next = sum[c] / static_cast<double>(cnt[c]);
      shift = std::max(shift, (next - centroids[c]).norm());
      centroids[c] = next;
    }
    if (shift < 1e-8) break;
  }
  for (std::size_t i = 0; i < n; ++i) assign[i] = detail::nearest_centroid(pts[i], centroids);

  // Dense ids in centroid order, skipping clusters that ended up empty.
  std::vector<std::vector<Vec3>> cluster_pts(m);
  for (std::size_t i = 0; i < n; ++i) cluster_pts[assign[i]].push_back(pts[i]);
  std::vector<int> id_of(m, 0);
  PrimitiveAssignment out;
  out.m_target = m;
  for (std::size_t c = 0; c < m; ++c) {
    if (cluster_pts[c].empty()) continue;
    id_of[c] = static_cast<int>(++out.m_actual);
    out.planes.push_back(detail::cluster_plane(cluster_pts[c]));
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = id_of[assign[i]];
  return out;
}

}  // namespace pptr::primitives
