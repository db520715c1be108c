#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pptr/common/error.hpp"

namespace pptr::geometry {

using Vec3 = Eigen::Vector3d;

/// Squared Euclidean distance with a fixed evaluation order. Every distance
/// comparison in the library goes through here so ties resolve identically
/// everywhere.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// One frame of a point-cloud video.
struct PointFrame {
  std::vector<Vec3> positions;
  std::optional<std::vector<Vec3>> normals;
  std::optional<std::vector<int>> labels;
  int frame_index = 0;

  std::size_t size() const { return positions.size(); }
  bool has_normals() const { return normals.has_value(); }
  bool has_labels() const { return labels.has_value(); }
};

/// Throws on non-finite coordinates, non-unit normals or length mismatches.
inline void validate(const PointFrame& frame) {
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (!frame.positions[i].allFinite())
      throw Error(Errc::NonFiniteInput, "point " + std::to_string(i) + " is not finite");
  }
  if (frame.normals) {
    if (frame.normals->size() != frame.size())
      throw Error(Errc::LengthMismatch, "normals length differs from point count");
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (std::abs((*frame.normals)[i].norm() - 1.0) > 1e-6)
        throw Error(Errc::InvalidConfig, "normal " + std::to_string(i) + " is not unit length");
    }
  }
  if (frame.labels && frame.labels->size() != frame.size())
    throw Error(Errc::LengthMismatch, "labels length differs from point count");
}

struct PointSequence {
  std::vector<PointFrame> frames;

  std::size_t length() const { return frames.size(); }
};

inline void validate(const PointSequence& seq) {
  if (seq.frames.empty()) throw Error(Errc::InvalidConfig, "sequence has no frames");
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    if (seq.frames[t].frame_index != static_cast<int>(t))
      throw Error(Errc::InvalidConfig, "frame_index must count up from 0");
    validate(seq.frames[t]);
  }
}

/// Plane n.x + d = 0 with unit n and canonical sign.
struct PlaneParams {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  double rms_residual = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }
  double distance(const Vec3& p) const { return std::abs(signed_distance(p)); }
};

/// Flip so that the first nonzero component is positive.
inline Vec3 canonical_sign(Vec3 n) {
  for (int i = 0; i < 3; ++i) {
    if (n[i] > 0.0) return n;
    if (n[i] < 0.0) return -n;
  }
  return n;
}

}  // namespace pptr::geometry
