#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pptr/geometry/types.hpp"

namespace pptr::primitives {

using geometry::PlaneParams;
using geometry::PointFrame;
using geometry::Vec3;

/// Label value of points no primitive claims.
inline constexpr int kClutter = 0;

/// Per-point primitive ids for one frame. Ids 1..m_actual are real
/// primitives and `planes[id - 1]` holds the plane of primitive `id`.
struct PrimitiveAssignment {
  std::vector<int> labels;
  std::vector<PlaneParams> planes;
  std::size_t m_actual = 0;
  std::size_t m_target = 0;

  std::size_t size() const { return labels.size(); }
};

enum class FitMethod { Ransac, RegionGrow, KMeans };

inline std::string to_string(FitMethod m) {
  switch (m) {
    case FitMethod::Ransac: return "ransac";
    case FitMethod::RegionGrow: return "region-grow";
    case FitMethod::KMeans: return "kmeans";
  }
  return "?";
}

inline FitMethod parse_fit_method(const std::string& s) {
  if (s == "ransac") return FitMethod::Ransac;
  if (s == "region-grow" || s == "region_grow") return FitMethod::RegionGrow;
  if (s == "kmeans") return FitMethod::KMeans;
  throw Error(Errc::InvalidConfig, "unknown fit method '" + s + "'");
}

struct FitConfig {
  FitMethod method = FitMethod::Ransac;
  std::size_t m_target = 8;
  double ransac_threshold = 0.02;
  std::size_t ransac_iters = 200;
  std::size_t min_inliers = 10;
  /// Radius of the graph used to split a RANSAC consensus set into
  /// connected pieces. Negative: derived from point density. Zero: off.
  double ransac_cluster_eps = -1.0;
  double rg_angle_threshold = 20.0;  // degrees
  double rg_distance_threshold = 0.05;
  std::size_t knn_k = 10;
  std::uint64_t seed = 0;
};

inline void validate(const FitConfig& cfg) {
  if (cfg.m_target < 1) throw Error(Errc::InvalidConfig, "m_target must be >= 1");
  if (!(cfg.ransac_threshold > 0.0)) throw Error(Errc::InvalidConfig, "ransac_threshold must be > 0");
  if (!(cfg.rg_distance_threshold > 0.0))
    throw Error(Errc::InvalidConfig, "rg_distance_threshold must be > 0");
  if (!(cfg.rg_angle_threshold >= 0.0))
    throw Error(Errc::InvalidConfig, "rg_angle_threshold must be >= 0");
  if (cfg.knn_k < 3) throw Error(Errc::InvalidConfig, "knn_k must be >= 3");
}

/// Throws InvalidConfig if `a` breaks any structural invariant.
inline void check_invariants(const PrimitiveAssignment& a) {
  if (a.planes.size() != a.m_actual) throw Error(Errc::InvalidConfig, "planes size != m_actual");
  if (a.m_actual > a.m_target) throw Error(Errc::InvalidConfig, "m_actual exceeds m_target");
  std::vector<std::size_t> count(a.m_actual + 1, 0);
  for (int id : a.labels) {
    if (id < 0 || static_cast<std::size_t>(id) > a.m_actual)
      throw Error(Errc::InvalidConfig, "primitive id out of range");
    ++count[static_cast<std::size_t>(id)];
  }
  for (std::size_t j = 1; j <= a.m_actual; ++j) {
    if (count[j] == 0) throw Error(Errc::InvalidConfig, "primitive " + std::to_string(j) + " is empty");
  }
}

/// Member point ids per primitive; entry 0 is the clutter bucket.
inline std::vector<std::vector<std::size_t>> members(const PrimitiveAssignment& a) {
  std::vector<std::vector<std::size_t>> out(a.m_actual + 1);
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    out[static_cast<std::size_t>(a.labels[i])].push_back(i);
  return out;
}

}  // namespace pptr::primitives
