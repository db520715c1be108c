#pragma once

#include "pptr/primitives/kmeans.hpp"
#include "pptr/primitives/normalize.hpp"
#include "pptr/primitives/ransac.hpp"
#include "pptr/primitives/region_grow.hpp"

namespace pptr::primitives {

/// Dispatch on `cfg.method`. Region growing estimates normals first when the
/// frame carries none.
inline PrimitiveAssignment fit_primitives(const PointFrame& frame, const FitConfig& cfg) {
  switch (cfg.method) {
    case FitMethod::Ransac:
      return ransac_planes(frame, cfg);
    case FitMethod::RegionGrow:
      if (frame.has_normals()) return region_grow(frame, cfg);
      return region_grow(geometry::estimate_normals(frame, std::min(cfg.knn_k, frame.size())).frame, cfg);
    case FitMethod::KMeans:
      return kmeans_partition(frame, std::min(cfg.m_target, frame.size()), cfg.seed);
  }
  throw Error(Errc::InvalidConfig, "unknown fit method");
}

}  // namespace pptr::primitives
