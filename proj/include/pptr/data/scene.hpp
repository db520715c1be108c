#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Geometry>

#include "pptr/common/keyvalue.hpp"
#include "pptr/common/random.hpp"
#include "pptr/geometry/types.hpp"
#include "pptr/primitives/assignment.hpp"

namespace pptr::data {

using geometry::PlaneParams;
using geometry::PointFrame;
using geometry::PointSequence;
using geometry::Vec3;
using primitives::PrimitiveAssignment;

/// How patches are placed.
///
/// Random: independent square patches on random planes, placed so that no
/// patch comes within `plane_clearance` of another patch's plane.
///
/// ContextTiles: the synthetic segmentation task. Seven tiles sit on three
/// horizontal shelves (tiles on a shelf are coplanar); the eighth "context"
/// patch is a horizontal tile in scene type 0 and a vertical wall in scene
/// type 1. A tile's class is 2 * scene_type + k, where k = 1 marks a
/// corrugated surface. The context patch can be hidden in a window of
/// frames, which hides the scene type there.
enum class Layout { Random, ContextTiles };

struct SceneSpec {
  Layout layout = Layout::Random;
  std::size_t num_patches = 3;
  std::size_t points_per_patch = 500;
  double patch_size = 1.0;
  double noise_sigma = 0.005;
  std::vector<int> patch_classes;  // empty: patch index mod num_classes
  std::size_t num_classes = 4;

  // Per-frame rigid motion, used when action_class < 0.
  Vec3 rotation_axis = Vec3::UnitZ();
  double rotation_deg_per_frame = 0.0;
  Vec3 translation_per_frame = Vec3::Zero();
  /// >= 0 selects a canned motion pattern (see motion_at).
  int action_class = -1;

  double clutter_fraction = 0.0;
  int clutter_class = 0;
  std::size_t num_frames = 1;
  std::uint64_t seed = 0;

  double plane_clearance = 0.2;

  double corrugation_amplitude = 0.03;
  double corrugation_wavelength = 0.25;
  int scene_type = -1;  // -1: drawn from the seed
  bool occlude_context = false;
  std::size_t occlusion_center = 0;
  std::size_t occlusion_radius = 1;
};

inline constexpr int kNumMotionPatterns = 4;

inline void validate(const SceneSpec& s) {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidSpec, m); };
  if (s.num_frames < 1) fail("num_frames must be >= 1");
  if (s.num_patches < 1) fail("num_patches must be >= 1");
  if (s.points_per_patch < 1) fail("points_per_patch must be >= 1");
  if (!(s.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(s.clutter_fraction >= 0.0 && s.clutter_fraction < 1.0)) fail("clutter_fraction must be in [0, 1)");
  if (!(s.patch_size > 0.0)) fail("patch_size must be > 0");
  if (s.num_classes < 1) fail("num_classes must be >= 1");
  if (!s.patch_classes.empty() && s.patch_classes.size() != s.num_patches)
    fail("patch_classes must list one class per patch");
  for (int c : s.patch_classes)
    if (c < 0 || static_cast<std::size_t>(c) >= s.num_classes) fail("patch class out of range");
  if (s.clutter_class < 0 || static_cast<std::size_t>(s.clutter_class) >= s.num_classes)
    fail("clutter_class out of range");
  if (s.action_class >= kNumMotionPatterns) fail("unknown action_class");
  if (s.layout == Layout::ContextTiles) {
    if (s.num_patches != 8) fail("context-tiles layout has exactly 8 patches");
    if (s.num_classes < 4) fail("context-tiles layout needs 4 classes");
    if (s.scene_type > 1) fail("scene_type must be -1, 0 or 1");
  }
  if (s.rotation_axis.norm() == 0.0) fail("rotation_axis must be nonzero");
}

struct RigidMotion {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Scene motion at frame t (applied about the scene origin).
/// Patterns: 0 translate along +x, 1 rotate about z, 2 bob along z, 3 static.
inline RigidMotion motion_at(const SceneSpec& s, std::size_t t) {
  RigidMotion m;
  const double tt = static_cast<double>(t);
  auto rot = [](const Vec3& axis, double deg) {
    return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
  };
  switch (s.action_class) {
    case 0: m.translation = Vec3(0.15 * tt, 0, 0); break;
    case 1: m.rotation = rot(Vec3::UnitZ(), 12.0 * tt); break;
    case 2: m.translation = Vec3(0, 0, 0.2 * std::sin(0.5 * std::numbers::pi * tt)); break;
    case 3: break;
    default:
      m.rotation = rot(s.rotation_axis, s.rotation_deg_per_frame * tt);
      m.translation = s.translation_per_frame * tt;
  }
  return m;
}

struct GeneratedSequence {
  PointSequence sequence;                 // labels hold per-point class ids
  std::vector<PrimitiveAssignment> truth;  // planted patch id + 1, clutter 0
  int action_class = -1;
  int scene_type = -1;
};

namespace detail {

struct Patch {
  Vec3 center, u, v, normal;
  double half = 0.5;
  double amplitude = 0.0;  // corrugation along the normal
  int cls = 0;
  bool is_context = false;
};

inline Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-9) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

inline void basis_for(const Vec3& n, Vec3& u, Vec3& v) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  u = n.cross(helper).normalized();
  v = n.cross(u);
}

/// True when all of `a` lies on one side of the plane of `b`, at least
/// `clearance` away from it.
inline bool clear_of(const Patch& a, const Patch& b, double clearance) {
  int side = 0;
  for (int su : {-1, 1})
    for (int sv : {-1, 1}) {
      const Vec3 corner = a.center + su * a.half * a.u + sv * a.half * a.v;
      const double d = b.normal.dot(corner - b.center);
      if (std::abs(d) < clearance) return false;
      const int s = d > 0 ? 1 : -1;
      if (side != 0 && s != side) return false;
      side = s;
    }
  return true;
}

inline std::vector<Patch> random_layout(const SceneSpec& s, Rng& rng) {
  const double extent = s.patch_size * (2.0 + static_cast<double>(s.num_patches));
  const double clearance = s.plane_clearance + 4.0 * s.noise_sigma;
  for (int restart = 0; restart < 1000; ++restart) {
    std::vector<Patch> patches;
    for (std::size_t j = 0; j < s.num_patches; ++j) {
      bool placed = false;
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        Patch p;
        p.normal = random_unit(rng);
        basis_for(p.normal, p.u, p.v);
        p.half = 0.5 * s.patch_size;
        p.center = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                        rng.uniform(-extent, extent)) * 0.5;
        bool ok = true;
        for (const auto& q : patches) {
          if ((p.center - q.center).norm() < 2.0 * s.patch_size || !clear_of(p, q, clearance) ||
              !clear_of(q, p, clearance)) {
            ok = false;
            break;
          }
        }
        if (ok) {
          patches.push_back(p);
          placed = true;
        }
      }
      if (!placed) break;
    }
    if (patches.size() == s.num_patches) return patches;
  }
  throw Error(Errc::InvalidSpec, "could not place patches with the requested clearance");
}

inline std::vector<Patch> context_tiles_layout(const SceneSpec& s, Rng& rng, int scene_type) {
  const double size = s.patch_size, half = 0.5 * size;
  const double pitch = size + 0.1;  // tiles on a shelf are separated by a 0.1 gap
  const double row = size + 0.4;
  std::vector<Patch> patches;
  auto tile = [&](double x, double y, double z) {
    Patch p;
    p.center = Vec3(x, y, z);
    p.normal = Vec3::UnitZ();
    p.u = Vec3::UnitX();
    p.v = Vec3::UnitY();
    p.half = half;
    patches.push_back(p);
  };
  for (int i = 0; i < 3; ++i) tile(i * pitch, 0.0, 0.0);
  for (int i = 0; i < 2; ++i) tile(i * pitch, row, 0.5);
  for (int i = 0; i < 2; ++i) tile(i * pitch, 2 * row, 1.0);
  if (scene_type == 0) {
    tile(2 * pitch, row, 1.5);
  } else {
    Patch wall;
    wall.center = Vec3(2 * pitch + half, 2 * row, half + 0.1);
    wall.normal = Vec3::UnitX();
    wall.u = Vec3::UnitY();
    wall.v = Vec3::UnitZ();
    wall.half = half;
    patches.push_back(wall);
  }
  patches.back().is_context = true;
  for (auto& p : patches) {
    const int k = rng.uniform() < 0.5 ? 1 : 0;
    p.amplitude = k ? s.corrugation_amplitude : 0.0;
    p.cls = 2 * scene_type + k;
  }
  return patches;
}

}  // namespace detail

/// Sample a scene and move it rigidly through `num_frames` frames. Patch
/// samples (and clutter) are drawn once, so point i of a patch corresponds
/// across frames; sensor noise is redrawn per frame.
inline GeneratedSequence generate(const SceneSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  GeneratedSequence out;
  out.action_class = spec.action_class;

  std::vector<detail::Patch> patches;
  if (spec.layout == Layout::Random) {
    patches = detail::random_layout(spec, rng);
    for (std::size_t j = 0; j < patches.size(); ++j)
      patches[j].cls = spec.patch_classes.empty() ? static_cast<int>(j % spec.num_classes)
                                                  : spec.patch_classes[j];
  } else {
    out.scene_type = spec.scene_type >= 0 ? spec.scene_type : (rng.uniform() < 0.5 ? 0 : 1);
    patches = detail::context_tiles_layout(spec, rng, out.scene_type);
    // Random heading for the whole scene.
    const Eigen::Matrix3d yaw =
        Eigen::AngleAxisd(rng.uniform(0.0, 2.0 * std::numbers::pi), Vec3::UnitZ()).toRotationMatrix();
    for (auto& p : patches) {
      p.center = yaw * p.center;
      p.u = yaw * p.u;
      p.v = yaw * p.v;
      p.normal = yaw * p.normal;
    }
  }

  // Base samples in patch coordinates.
  struct Sample {
    std::size_t patch;
    Vec3 local;  // scene coordinates before motion and noise
  };
  std::vector<Sample> samples;
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const auto& p = patches[j];
    for (std::size_t i = 0; i < spec.points_per_patch; ++i) {
      const double a = rng.uniform(-p.half, p.half), b = rng.uniform(-p.half, p.half);
      const double bump =
          p.amplitude * std::sin(2.0 * std::numbers::pi * a / spec.corrugation_wavelength);
      samples.push_back({j, p.center + a * p.u + b * p.v + bump * p.normal});
    }
  }
  const std::size_t planted = samples.size();
  std::size_t n_clutter = 0;
  if (spec.clutter_fraction > 0.0) {
    n_clutter = static_cast<std::size_t>(
        std::llround(spec.clutter_fraction / (1.0 - spec.clutter_fraction) * static_cast<double>(planted)));
  }
  if (n_clutter > 0) {
    Vec3 lo = samples.front().local, hi = lo;
    for (const auto& s : samples) {
      lo = lo.cwiseMin(s.local);
      hi = hi.cwiseMax(s.local);
    }
    lo.array() -= 0.25;
    hi.array() += 0.25;
    for (std::size_t i = 0; i < n_clutter; ++i) {
      Vec3 q;
      for (int d = 0; d < 3; ++d) q[d] = rng.uniform(lo[d], hi[d]);
      samples.push_back({SIZE_MAX, q});
    }
  }

  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    const RigidMotion m = motion_at(spec, t);
    const bool hide_context = spec.occlude_context && spec.layout == Layout::ContextTiles &&
                              t + spec.occlusion_radius >= spec.occlusion_center &&
                              t <= spec.occlusion_center + spec.occlusion_radius;
    PointFrame frame;
    frame.frame_index = static_cast<int>(t);
    std::vector<int> classes;
    PrimitiveAssignment truth;
    truth.m_target = spec.num_patches;
    std::vector<bool> present(patches.size(), false);
    for (const auto& s : samples) {
      Vec3 noise(rng.normal(0.0, spec.noise_sigma), rng.normal(0.0, spec.noise_sigma),
                 rng.normal(0.0, spec.noise_sigma));
      if (s.patch != SIZE_MAX && hide_context && patches[s.patch].is_context) continue;
      frame.positions.push_back(m.rotation * s.local + m.translation + noise);
      if (s.patch == SIZE_MAX) {
        classes.push_back(spec.clutter_class);
        truth.labels.push_back(primitives::kClutter);
      } else {
        classes.push_back(patches[s.patch].cls);
        truth.labels.push_back(static_cast<int>(s.patch + 1));
        present[s.patch] = true;
      }
    }
    for (std::size_t j = 0; j < patches.size(); ++j) {
      if (!present[j]) continue;  // only the last (context) patch can be absent
      const Vec3 n = m.rotation * patches[j].normal;
      const Vec3 c = m.rotation * patches[j].center + m.translation;
      PlaneParams plane;
      plane.normal = geometry::canonical_sign(n);
      plane.offset = -plane.normal.dot(c);
      truth.planes.push_back(plane);
      ++truth.m_actual;
    }
    frame.labels = std::move(classes);
    out.sequence.frames.push_back(std::move(frame));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

/// Scene spec from flat key=value text. Keys that are not scene fields are ignored.
inline SceneSpec scene_spec_from(const KeyValue& kv) try {
  SceneSpec s;
  auto vec3 = [](const std::string& key, const std::string& v) {
    std::istringstream in(v);
    std::string a, b, c;
    if (!std::getline(in, a, ',') || !std::getline(in, b, ',') || !std::getline(in, c, ','))
      throw Error(Errc::InvalidSpec, key + ": expected x,y,z");
    return Vec3(KeyValue::to_double(key, trim(a)), KeyValue::to_double(key, trim(b)),
                KeyValue::to_double(key, trim(c)));
  };
  for (const auto& [k, v] : kv.entries()) {
    if (k == "layout") {
      if (v == "random") s.layout = Layout::Random;
      else if (v == "context-tiles") s.layout = Layout::ContextTiles;
      else throw Error(Errc::InvalidSpec, "unknown layout '" + v + "'");
    } else if (k == "patch_classes") {
      std::istringstream in(v);
      std::string tok;
      while (std::getline(in, tok, ','))
        s.patch_classes.push_back(static_cast<int>(KeyValue::to_int(k, trim(tok))));
    } else if (k == "rotation_axis") {
      s.rotation_axis = vec3(k, v);
    } else if (k == "translation_per_frame") {
      s.translation_per_frame = vec3(k, v);
    } else if (k == "num_patches") s.num_patches = static_cast<std::size_t>(KeyValue::to_int(k, v));
    else if (k == "points_per_patch") s.points_per_patch = static_cast<std::size_t>(KeyValue::to_int(k, v));
    else if (k == "patch_size") s.patch_size = KeyValue::to_double(k, v);
    else if (k == "noise_sigma") s.noise_sigma = KeyValue::to_double(k, v);
    else if (k == "num_classes") s.num_classes = static_cast<std::size_t>(KeyValue::to_int(k, v));
    else if (k == "rotation_deg_per_frame") s.rotation_deg_per_frame = KeyValue::to_double(k, v);
    else if (k == "action_class") s.action_class = static_cast<int>(KeyValue::to_int(k, v));
    else if (k == "clutter_fraction") s.clutter_fraction = KeyValue::to_double(k, v);
    else if (k == "clutter_class") s.clutter_class = static_cast<int>(KeyValue::to_int(k, v));
    else if (k == "num_frames") s.num_frames = static_cast<std::size_t>(KeyValue::to_int(k, v));
    else if (k == "seed") s.seed = static_cast<std::uint64_t>(KeyValue::to_int(k, v));
    else if (k == "plane_clearance") s.plane_clearance = KeyValue::to_double(k, v);
    else if (k == "corrugation_amplitude") s.corrugation_amplitude = KeyValue::to_double(k, v);
    else if (k == "corrugation_wavelength") s.corrugation_wavelength = KeyValue::to_double(k, v);
    else if (k == "scene_type") s.scene_type = static_cast<int>(KeyValue::to_int(k, v));
    else if (k == "occlude_context") s.occlude_context = KeyValue::to_int(k, v) != 0;
    else if (k == "occlusion_center") s.occlusion_center = static_cast<std::size_t>(KeyValue::to_int(k, v));
    else if (k == "occlusion_radius") s.occlusion_radius = static_cast<std::size_t>(KeyValue::to_int(k, v));
  }
  return s;
} catch (const Error& e) {
  if (e.code() == Errc::InvalidSpec) throw;
  throw Error(Errc::InvalidSpec, e.what());
}

}  // namespace pptr::data
