#pragma once

#include <span>
#include <vector>

#include "pptr/geometry/neighbor_index.hpp"
#include "pptr/model/config.hpp"
#include "pptr/primitives/assignment.hpp"
#include "pptr/tensor/ops.hpp"

namespace pptr::model {

using geometry::PointFrame;
using geometry::Vec3;
using primitives::PrimitiveAssignment;

/// Neighbourhoods of the 4D convolution, fixed by geometry alone.
/// For anchor a, slots [anchor_begin[a], anchor_begin[a+1]) are its
/// non-empty temporal offsets; slot s lists entries
/// [slot_begin[s], slot_begin[s+1]) of (neighbour row, offset).
struct ConvGraph {
  std::vector<std::size_t> anchors;  // point rows
  std::vector<std::size_t> anchor_begin;
  std::vector<std::size_t> slot_begin;
  std::vector<std::size_t> neighbor;
  std::vector<std::array<double, 4>> delta;  // (dx, dy, dz, dt) = neighbour - anchor
  std::vector<std::size_t> upsample;  // point row -> anchor index; empty when every point anchors

  std::size_t num_anchors() const { return anchors.size(); }
};

/// Everything about a clip that does not depend on the weights.
struct Clip {
  std::size_t length = 0;
  std::vector<std::size_t> offset;  // first row of each frame; offset[length] = total points
  std::vector<Vec3> positions;      // all frames, frame-major
  std::vector<PrimitiveAssignment> prims;
  ad::Tensor input;                 // points x input_dim
  ConvGraph graph;

  // Attention groups: one per (frame, primitive id) that has points,
  // clutter included.
  std::vector<std::vector<std::size_t>> groups;

  // Primitive tokens: slot t*M + (m-1) is real when primitive m exists in frame t.
  std::size_t m_target = 0;
  std::vector<bool> mask;
  std::vector<std::size_t> real_slots;       // ascending
  std::vector<std::size_t> member_rows;      // non-clutter point rows
  std::vector<std::size_t> member_token;     // index into real_slots, per member row

  std::size_t points() const { return positions.size(); }
  std::size_t frame_points(std::size_t t) const { return offset[t + 1] - offset[t]; }
};

namespace detail {

inline std::vector<std::size_t> neighbors_of(const geometry::NeighborIndex& index, const Vec3& p, double r,
                                             std::size_t cap, std::size_t self) {
  std::vector<std::size_t> ids = index.within_radius(p, r);
  if (cap == 0 || ids.size() <= cap) return ids;
  std::vector<std::size_t> near = index.k_nearest(p, cap);
  if (self != SIZE_MAX && std::find(near.begin(), near.end(), self) == near.end()) near.back() = self;
  std::sort(near.begin(), near.end());
  return near;
}

}  // namespace detail

inline ConvGraph build_conv_graph(const std::vector<std::vector<Vec3>>& frames,
                                  const std::vector<std::size_t>& offset, const PPTrConfig& cfg) {
  const std::size_t L = frames.size();
  std::vector<geometry::NeighborIndex> index;
  index.reserve(L);
  for (const auto& f : frames) index.emplace_back(f);

  ConvGraph g;
  std::vector<std::vector<std::size_t>> frame_anchors(L);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t i = 0; i < frames[t].size(); i += cfg.conv_stride) {
      frame_anchors[t].push_back(i);
      g.anchors.push_back(offset[t] + i);
    }
  g.anchor_begin.push_back(0);
  g.slot_begin.push_back(0);
  const auto rt = static_cast<long>(cfg.temporal_radius);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t i : frame_anchors[t]) {
      const Vec3& p = frames[t][i];
      for (long dt = -rt; dt <= rt; ++dt) {
        const long tt = static_cast<long>(t) + dt;
        if (tt < 0 || tt >= static_cast<long>(L)) continue;
        const auto u = static_cast<std::size_t>(tt);
        const auto ids = detail::neighbors_of(index[u], p, cfg.spatial_radius, cfg.max_neighbors,
                                              dt == 0 ? i : SIZE_MAX);
        if (ids.empty()) continue;
        for (std::size_t j : ids) {
          const Vec3& q = frames[u][j];
          g.neighbor.push_back(offset[u] + j);
          g.delta.push_back({q.x() - p.x(), q.y() - p.y(), q.z() - p.z(), static_cast<double>(dt)});
        }
        g.slot_begin.push_back(g.neighbor.size());
      }
      g.anchor_begin.push_back(g.slot_begin.size() - 1);
    }
  }
  if (cfg.conv_stride > 1) {
    g.upsample.resize(offset[L]);
    std::size_t base = 0;
    for (std::size_t t = 0; t < L; ++t) {
      std::vector<Vec3> pts;
      for (std::size_t i : frame_anchors[t]) pts.push_back(frames[t][i]);
      const geometry::NeighborIndex aidx(pts);
      for (std::size_t i = 0; i < frames[t].size(); ++i)
        g.upsample[offset[t] + i] = base + aidx.k_nearest(frames[t][i], 1).front();
      base += pts.size();
    }
  }
  return g;
}

/// Per-point input features: a constant 1, followed by the normal when
/// `use_normals` is set. No absolute coordinates enter the network.
inline ad::Tensor input_features(std::span<const PointFrame> frames, const PPTrConfig& cfg) {
  std::size_t total = 0;
  for (const auto& f : frames) total += f.size();
  ad::Tensor x = ad::Tensor::matrix(total, cfg.input_dim());
  std::size_t r = 0;
  for (const auto& f : frames) {
    if (cfg.use_normals && !f.has_normals()) throw Error(Errc::MissingNormals, "config uses normals; frame has none");
    for (std::size_t i = 0; i < f.size(); ++i, ++r) {
      x(r, 0) = 1.0;
      if (cfg.use_normals)
        for (int d = 0; d < 3; ++d) x(r, 1 + static_cast<std::size_t>(d)) = (*f.normals)[i][d];
    }
  }
  return x;
}

/// Prepare a clip of exactly cfg.clip_length frames with their primitive
/// assignments (already normalized to at most cfg.m_target primitives).
inline Clip prepare_clip(std::span<const PointFrame> frames, std::span<const PrimitiveAssignment> prims,
                         const PPTrConfig& cfg) {
  validate(cfg);
  if (frames.size() != cfg.clip_length)
    throw Error(Errc::InvalidConfig, "clip has " + std::to_string(frames.size()) + " frames, config expects " +
                                         std::to_string(cfg.clip_length));
  if (prims.size() != frames.size()) throw Error(Errc::LengthMismatch, "one assignment per frame required");
  Clip c;
  c.length = frames.size();
  c.m_target = cfg.m_target;
  c.offset.push_back(0);
  std::vector<std::vector<Vec3>> pos;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.size() == 0) throw Error(Errc::EmptyFrame, "clip frame " + std::to_string(t) + " is empty");
    geometry::validate(f);
    if (prims[t].size() != f.size()) throw Error(Errc::LengthMismatch, "assignment size differs from frame size");
    primitives::check_invariants(prims[t]);
    if (prims[t].m_actual > cfg.m_target)
      throw Error(Errc::InvalidConfig, "assignment has more primitives than m_target; normalize first");
    pos.push_back(f.positions);
    c.positions.insert(c.positions.end(), f.positions.begin(), f.positions.end());
    c.offset.push_back(c.positions.size());
    c.prims.push_back(prims[t]);
  }
  c.input = input_features(frames, cfg);
  c.graph = build_conv_graph(pos, c.offset, cfg);

  const std::size_t M = cfg.m_target;
  c.mask.assign(c.length * M, false);
  std::vector<std::size_t> slot_to_real(c.length * M, SIZE_MAX);
  for (std::size_t t = 0; t < c.length; ++t)
    for (std::size_t m = 0; m < c.prims[t].m_actual; ++m) c.mask[t * M + m] = true;
  for (std::size_t s = 0; s < c.mask.size(); ++s)
    if (c.mask[s]) {
      slot_to_real[s] = c.real_slots.size();
      c.real_slots.push_back(s);
    }

  for (std::size_t t = 0; t < c.length; ++t) {
    const auto members = primitives::members(c.prims[t]);
    for (std::size_t id = 0; id < members.size(); ++id) {
      if (members[id].empty()) continue;
      std::vector<std::size_t> rows;
      for (std::size_t i : members[id]) rows.push_back(c.offset[t] + i);
      c.groups.push_back(rows);
    }
    for (std::size_t i = 0; i < c.prims[t].size(); ++i) {
      const int id = c.prims[t].labels[i];
      if (id == primitives::kClutter) continue;
      c.member_rows.push_back(c.offset[t] + i);
      c.member_token.push_back(slot_to_real[t * M + static_cast<std::size_t>(id) - 1]);
    }
  }
  return c;
}

}  // namespace pptr::model
