#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "pptr/primitives/assignment.hpp"

namespace oracle {

/// Scores a fitted assignment against planted ground truth. Each planted
/// plane is matched to the fitted primitive holding most of its points, and
/// the match only counts if that primitive's own majority is the same
/// planted plane. A non-clutter point is recovered when it carries the
/// fitted id matched to its planted plane.
struct Recovery {
  std::size_t planted_points = 0;
  std::size_t recovered_points = 0;
  std::size_t planes = 0;
  std::size_t planes_within_tolerance = 0;
  std::vector<double> normal_errors_deg;  // per planted plane; 180 when unmatched

  double point_rate() const {
    return planted_points ? static_cast<double>(recovered_points) / static_cast<double>(planted_points) : 1.0;
  }
  double plane_rate() const {
    return planes ? static_cast<double>(planes_within_tolerance) / static_cast<double>(planes) : 1.0;
  }
};

inline double normal_angle_deg(const pptr::geometry::Vec3& a, const pptr::geometry::Vec3& b) {
  const double c = std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline Recovery score_recovery(const pptr::primitives::PrimitiveAssignment& truth,
                               const pptr::primitives::PrimitiveAssignment& fit, double tol_deg) {
  const std::size_t P = truth.m_actual, F = fit.m_actual;
  std::vector<std::vector<std::size_t>> overlap(P + 1, std::vector<std::size_t>(F + 1, 0));
  for (std::size_t i = 0; i < truth.labels.size(); ++i)
    ++overlap[static_cast<std::size_t>(truth.labels[i])][static_cast<std::size_t>(fit.labels[i])];

  std::vector<std::size_t> match(P + 1, 0);
  for (std::size_t p = 1; p <= P; ++p) {
    std::size_t best = 0, best_n = 0;
    for (std::size_t f = 1; f <= F; ++f)
      if (overlap[p][f] > best_n) best_n = overlap[p][f], best = f;
    if (best == 0) continue;
    std::size_t owner = 0, owner_n = 0;
    for (std::size_t q = 1; q <= P; ++q)
      if (overlap[q][best] > owner_n) owner_n = overlap[q][best], owner = q;
    if (owner == p) match[p] = best;
  }

  Recovery r;
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const auto p = static_cast<std::size_t>(truth.labels[i]);
    if (p == 0) continue;
    ++r.planted_points;
    if (match[p] != 0 && static_cast<std::size_t>(fit.labels[i]) == match[p]) ++r.recovered_points;
  }
  for (std::size_t p = 1; p <= P; ++p) {
    ++r.planes;
    const double err =
        match[p] ? normal_angle_deg(truth.planes[p - 1].normal, fit.planes[match[p] - 1].normal) : 180.0;
    r.normal_errors_deg.push_back(err);
    if (err <= tol_deg) ++r.planes_within_tolerance;
  }
  return r;
}

}  // namespace oracle
