#pragma once

// Finite-difference verification of every learnable block on small
// generated scenes. Each block is checked on the first instance (by seed)
// whose central differences are trustworthy according to ad::fd_screen;
// screening never looks at tape gradients.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pptr/data/scene.hpp"
#include "pptr/geometry/plane.hpp"
#include "pptr/model/pptr.hpp"
#include "pptr/tensor/grad_check.hpp"

namespace pptr::model {

struct GradInstance {
  std::vector<PointFrame> frames;
  std::vector<PrimitiveAssignment> prims;
  std::vector<int> seg_labels;  // centre frame
  int cls_label = 0;
};

/// A short sequence of planar patches (ground-truth primitives) sized for
/// finite differences: min(M, 4) patches sharing `points_per_frame` points.
inline GradInstance grad_instance(const PPTrConfig& cfg, std::uint64_t seed, std::size_t points_per_frame = 64) {
  data::SceneSpec sp;
  sp.num_patches = std::clamp<std::size_t>(cfg.m_target, 1, 4);
  sp.points_per_patch = std::max<std::size_t>(points_per_frame / sp.num_patches, 1);
  sp.patch_size = 0.5;
  sp.plane_clearance = 0.1;
  sp.num_classes = cfg.num_classes;
  sp.num_frames = cfg.clip_length;
  sp.rotation_deg_per_frame = 10.0;
  sp.translation_per_frame = Vec3(0.05, 0.0, 0.0);
  sp.seed = seed;
  auto g = data::generate(sp);
  GradInstance inst;
  for (auto& f : g.sequence.frames)
    inst.frames.push_back(cfg.use_normals ? geometry::estimate_normals(f, 8).frame : f);
  inst.prims = g.truth;
  for (auto& p : inst.prims) p.m_target = cfg.m_target;
  inst.seg_labels = *inst.frames[cfg.center_frame()].labels;
  inst.cls_label = static_cast<int>(seed % cfg.num_classes);
  return inst;
}

/// One block's scalar objective and the tensors it is checked against.
struct GradProblem {
  ad::Objective f;
  std::vector<Tensor> params;
  double tolerance = 1e-5;
};

namespace detail {

struct GradState {
  PPTrConfig cfg;
  GradInstance inst;
  Clip clip;
  MemoryPool pool;
  ParameterStore w;
  Tensor point, intra, tokens, tokens_out;
  std::vector<bool> mask;
  Rng rng{0};
};

inline Tensor projection(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor r = Tensor::matrix(rows, cols);
  for (double& v : r.values()) v = rng.uniform(-1.0, 1.0);
  return r;
}

/// Bind vars[first..] to the names starting with any of `prefixes` (in
/// store order); every other weight is a constant.
inline BoundWeights bind_subset(Tape& tape, const ParameterStore& w, const std::vector<std::string>& prefixes,
                                const std::vector<Var>& vars, std::size_t first) {
  std::vector<std::string> names;
  std::vector<Var> bound;
  std::size_t k = first;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::string& n = w.names()[i];
    bool checked = false;
    for (const auto& p : prefixes) checked = checked || n.rfind(p, 0) == 0;
    names.push_back(n);
    bound.push_back(checked ? vars.at(k++) : tape.constant(w.at(i)));
  }
  return BoundWeights(tape, names, bound);
}

inline std::vector<Tensor> subset(const ParameterStore& w, const std::vector<std::string>& prefixes) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < w.size(); ++i)
    for (const auto& p : prefixes)
      if (w.names()[i].rfind(p, 0) == 0) {
        out.push_back(w.at(i));
        break;
      }
  return out;
}

inline Var project(Var out, const Tensor& r) { return ad::sum(ad::mul(out, out.tape->constant(r))); }

}  // namespace detail

/// Blocks the configuration actually contains.
inline std::vector<std::string> grad_blocks(const PPTrConfig& cfg) {
  std::vector<std::string> b = {"conv4d"};
  if (cfg.intra_blocks > 0) b.push_back("intra_block");
  if (cfg.primitive_blocks > 0) b.push_back("primitive_transformer");
  b.insert(b.end(), {"segmentation_head", "action_head", "pptr_seg", "pptr_cls"});
  return b;
}

inline GradProblem grad_problem(const std::string& block, const PPTrConfig& base, std::uint64_t seed,
                                std::size_t points_per_frame = 64) {
  auto st = std::make_shared<detail::GradState>();
  st->cfg = base;
  st->cfg.seed = seed;
  const PPTrConfig& cfg = st->cfg;
  st->inst = grad_instance(cfg, seed, points_per_frame);
  st->clip = prepare_clip(st->inst.frames, st->inst.prims, cfg);
  st->w = init_weights(cfg);
  st->rng = Rng(seed ^ 0x5eedULL);
  if (cfg.memory_length > 0) {
    PPTrConfig ec = extractor_config(cfg);
    ec.seed = seed + 1;
    st->pool = build_memory_pool(st->inst.frames, st->inst.prims, init_weights(ec), ec, cfg);
  }
  {
    Tape tape(false);
    const BoundWeights bw(tape, st->w, false);
    const ForwardTrace tr = pptr_forward(st->clip, st->pool, bw, cfg, Task::Segmentation);
    st->point = tr.point_feats.value();
    st->intra = tr.intra_feats.value();
    st->tokens = tr.tokens.values.value();
    st->tokens_out = tr.tokens_out.values.value();
    st->mask = tr.tokens.mask;
  }
  const std::size_t P = st->clip.points(), C = cfg.feature_dim, S = st->mask.size();
  GradProblem g;
  if (block == "conv4d") {
    const Tensor r = detail::projection(st->rng, P, conv_out_dim(cfg, 0));
    g.params = {st->clip.input, st->w.at("conv.0.wd"), st->w.at("conv.0.wf")};
    g.f = [st, r](Tape&, const std::vector<Var>& v) {
      return detail::project(point4d_conv(v[0], v[1], v[2], st->clip.graph), r);
    };
  } else if (block == "intra_block") {
    const Tensor r = detail::projection(st->rng, P, C);
    g.params = {st->point};
    for (auto& t : detail::subset(st->w, {"intra.0."})) g.params.push_back(t);
    g.f = [st, r](Tape& tape, const std::vector<Var>& v) {
      const BoundWeights bw = detail::bind_subset(tape, st->w, {"intra.0."}, v, 1);
      return detail::project(intra_primitive_block(v[0], st->clip, bw, "intra.0"), r);
    };
  } else if (block == "primitive_transformer") {
    const Tensor r = detail::projection(st->rng, S, C);
    g.params = {st->tokens};
    for (auto& t : detail::subset(st->w, {"prim.0."})) g.params.push_back(t);
    g.f = [st, r](Tape& tape, const std::vector<Var>& v) {
      const BoundWeights bw = detail::bind_subset(tape, st->w, {"prim.0."}, v, 1);
      return detail::project(primitive_transformer({v[0], st->mask}, st->pool, bw, 1).values, r);
    };
  } else if (block == "segmentation_head") {
    const Tensor r = detail::projection(st->rng, st->clip.frame_points(cfg.center_frame()), cfg.num_classes);
    g.params = {st->point, st->intra, st->tokens_out};
    for (auto& t : detail::subset(st->w, {"seg."})) g.params.push_back(t);
    g.f = [st, r](Tape& tape, const std::vector<Var>& v) {
      const BoundWeights bw = detail::bind_subset(tape, st->w, {"seg."}, v, 3);
      ForwardTrace tr;
      tr.point_feats = v[0];
      tr.intra_feats = v[1];
      tr.tokens_out = {v[2], st->mask};
      return detail::project(segmentation_head(tr, st->clip, bw, st->cfg), r);
    };
  } else if (block == "action_head") {
    const Tensor r = detail::projection(st->rng, 1, cfg.num_classes);
    g.params = {st->tokens_out};
    for (auto& t : detail::subset(st->w, {"cls."})) g.params.push_back(t);
    g.f = [st, r](Tape& tape, const std::vector<Var>& v) {
      const BoundWeights bw = detail::bind_subset(tape, st->w, {"cls."}, v, 1);
      return detail::project(action_head({v[0], st->mask}, bw), r);
    };
  } else if (block == "pptr_seg" || block == "pptr_cls") {
    const Task task = block == "pptr_seg" ? Task::Segmentation : Task::Classification;
    const std::vector<std::string> prefixes = {"conv.", "intra.", "prim.",
                                               task == Task::Segmentation ? "seg." : "cls."};
    g.params = detail::subset(st->w, prefixes);
    g.tolerance = 1e-4;
    g.f = [st, prefixes, task](Tape& tape, const std::vector<Var>& v) {
      const BoundWeights bw = detail::bind_subset(tape, st->w, prefixes, v, 0);
      const std::vector<int> one = {st->inst.cls_label};
      return ad::cross_entropy(pptr_forward(st->clip, st->pool, bw, st->cfg, task).logits,
                               task == Task::Segmentation ? st->inst.seg_labels : one);
    };
  } else {
    throw Error(Errc::InvalidConfig, "unknown block '" + block + "'");
  }
  return g;
}

struct GradCase {
  std::string block;
  double tolerance = 0.0;
  double max_rel_error = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;       // instance that was checked
  std::size_t rejected = 0;     // earlier instances failing the screen
  std::size_t coords = 0;
  bool checked = false;

  bool pass() const { return checked && max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  double eps = 1e-5;
  std::uint64_t first_seed = 1;
  std::size_t max_instances = 12;
  std::size_t points_per_frame = 64;
};

inline GradCase run_grad_case(const std::string& block, const PPTrConfig& cfg, const GradSuiteOptions& o = {}) {
  GradCase c;
  c.block = block;
  for (std::size_t k = 0; k < o.max_instances; ++k) {
    const std::uint64_t seed = o.first_seed + k;
    const GradProblem g = grad_problem(block, cfg, seed, o.points_per_frame);
    c.tolerance = g.tolerance;
    const ad::FdScreen screen = ad::fd_screen(g.f, g.params, o.eps, g.tolerance);
    c.coords = screen.coords;
    if (!screen.admissible) {
      ++c.rejected;
      continue;
    }
    c.seed = seed;
    c.max_rel_error = ad::grad_check(g.f, g.params, o.eps).max_rel_error;
    c.checked = true;
    break;
  }
  return c;
}

}  // namespace pptr::model
