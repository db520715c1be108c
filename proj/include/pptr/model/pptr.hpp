#pragma once

#include <span>

#include "pptr/common/task.hpp"
#include "pptr/model/attention.hpp"
#include "pptr/model/conv4d.hpp"
#include "pptr/model/weights.hpp"

namespace pptr::model {

/// Intermediate results of one forward pass.
struct ForwardTrace {
  Var point_feats;  // conv backbone output, points x C
  Var intra_feats;  // after the intra-primitive blocks, points x C
  PrimitiveTokens tokens;      // pooled from intra_feats
  PrimitiveTokens tokens_out;  // after the primitive transformer
  Var logits;
};

/// Backbone, intra-primitive blocks and token pooling.
inline ForwardTrace encode(const Clip& clip, const BoundWeights& w, const PPTrConfig& cfg) {
  ForwardTrace tr;
  Tape& tape = w.tape();
  tr.point_feats = conv_stack(tape.constant(clip.input), clip, w, cfg);
  Var h = tr.point_feats;
  for (std::size_t b = 0; b < cfg.intra_blocks; ++b) h = intra_primitive_block(h, clip, w, "intra." + std::to_string(b));
  tr.intra_feats = h;
  tr.tokens = pool_primitive_tokens(h, clip);
  return tr;
}

/// Per-point logits for the clip's centre frame. Each point sees
/// [point feature | intra feature | token of its primitive]; clutter points
/// get the mean of the real clip tokens (zeros if there are none).
inline Var segmentation_head(const ForwardTrace& tr, const Clip& clip, const BoundWeights& w,
                             const PPTrConfig& cfg) {
  Tape& tape = w.tape();
  const std::size_t c = cfg.center_frame();
  const std::size_t begin = clip.offset[c], end = clip.offset[c + 1];
  const std::size_t slots = clip.mask.size(), M = clip.m_target;
  const std::size_t C = tr.tokens_out.values.value().cols();
  const auto real = tr.tokens_out.real();
  Var mean_tok = real.empty() ? tape.constant(Tensor::matrix(1, C))
                              : ad::mean_rows(ad::gather_rows(tr.tokens_out.values, real));
  Var table = ad::concat({tr.tokens_out.values, mean_tok}, 0);
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int id = clip.prims[c].labels[i];
    idx[i] = id == primitives::kClutter ? slots : c * M + static_cast<std::size_t>(id) - 1;
  }
  Var z = ad::concat({ad::slice(tr.point_feats, 0, begin, end), ad::slice(tr.intra_feats, 0, begin, end),
                      ad::gather_rows(table, idx)},
                     1);
  z = ad::gelu(ad::linear(z, w["seg.w1"], w["seg.b1"]));
  z = ad::gelu(ad::linear(z, w["seg.w2"], w["seg.b2"]));
  return ad::linear(z, w["seg.w3"], w["seg.b3"]);
}

/// Clip logits (1 x classes): channel-wise max over real tokens, then a
/// two-layer MLP.
inline Var action_head(const PrimitiveTokens& tokens, const BoundWeights& w) {
  const auto real = tokens.real();
  if (real.empty()) throw Error(Errc::AllMasked, "action head needs at least one real token");
  Var rows = ad::gather_rows(tokens.values, real);
  Var pooled = ad::group_max_pool(rows, ad::GroupSpec(std::vector<std::size_t>(real.size(), 0), 1));
  return ad::linear(ad::gelu(ad::linear(pooled, w["cls.w1"], w["cls.b1"])), w["cls.w2"], w["cls.b2"]);
}

inline void check_pool(const MemoryPool& pool, const PPTrConfig& cfg) {
  if (pool.empty()) return;
  if (pool.slots() != cfg.memory_length * cfg.m_target)
    throw Error(Errc::ConfigMismatch, "memory pool has " + std::to_string(pool.slots()) + " slots, config expects " +
                                          std::to_string(cfg.memory_length * cfg.m_target));
  if (pool.values.cols() != cfg.feature_dim) throw Error(Errc::ConfigMismatch, "memory pool width differs from C");
}

/// Full network. Segmentation returns centre-frame logits (points x
/// classes); classification returns 1 x classes.
inline ForwardTrace pptr_forward(const Clip& clip, const MemoryPool& pool, const BoundWeights& w,
                                 const PPTrConfig& cfg, Task task) {
  check_pool(pool, cfg);
  ForwardTrace tr = encode(clip, w, cfg);
  tr.tokens_out = primitive_transformer(tr.tokens, pool, w, cfg.primitive_blocks);
  tr.logits = task == Task::Segmentation ? segmentation_head(tr, clip, w, cfg) : action_head(tr.tokens_out, w);
  return tr;
}

/// Frames sampled for an L'-slot memory over a sequence of `length` frames:
/// k * length / L' for k = 0..L'-1.
inline std::vector<std::size_t> memory_frames(std::size_t length, std::size_t memory_length) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < memory_length; ++k) out.push_back(k * length / memory_length);
  return out;
}

/// Run the single-frame extractor on the sampled frames (inference only)
/// and stack its primitive tokens into an (L' * M) x C pool.
inline MemoryPool build_memory_pool(std::span<const PointFrame> frames, std::span<const PrimitiveAssignment> prims,
                                    const ParameterStore& extractor, const PPTrConfig& extractor_cfg,
                                    const PPTrConfig& cfg, std::string source = {}) {
  if (extractor_cfg.feature_dim != cfg.feature_dim)
    throw Error(Errc::ConfigMismatch, "extractor C " + std::to_string(extractor_cfg.feature_dim) +
                                          " differs from model C " + std::to_string(cfg.feature_dim));
  if (extractor_cfg.m_target != cfg.m_target) throw Error(Errc::ConfigMismatch, "extractor M differs from model M");
  if (extractor_cfg.clip_length != 1 || extractor_cfg.temporal_radius != 0 || extractor_cfg.memory_length != 0)
    throw Error(Errc::ConfigMismatch, "extractor must be single-frame (L=1, r_t=0, L'=0)");
  if (frames.size() != prims.size()) throw Error(Errc::LengthMismatch, "one assignment per frame required");
  MemoryPool pool;
  pool.source = std::move(source);
  if (cfg.memory_length == 0) return pool;
  if (frames.empty()) throw Error(Errc::InvalidConfig, "memory pool over an empty sequence");
  const std::size_t M = cfg.m_target, C = cfg.feature_dim;
  pool.values = Tensor::matrix(cfg.memory_length * M, C);
  pool.mask.assign(cfg.memory_length * M, false);
  const auto picks = memory_frames(frames.size(), cfg.memory_length);
  for (std::size_t k = 0; k < picks.size(); ++k) {
    const std::size_t t = picks[k];
    const Clip clip = prepare_clip(frames.subspan(t, 1), prims.subspan(t, 1), extractor_cfg);
    Tape tape(false);
    const BoundWeights w(tape, extractor, false);
    const ForwardTrace tr = encode(clip, w, extractor_cfg);
    const Tensor& tok = tr.tokens.values.value();
    for (std::size_t m = 0; m < M; ++m) {
      pool.mask[k * M + m] = tr.tokens.mask[m];
      std::copy_n(tok.row(m).begin(), C, pool.values.row(k * M + m).begin());
    }
  }
  return pool;
}

/// Store a pool as arrays `<key>.values` and `<key>.mask` (0/1). An empty
/// pool stores nothing.
inline void add_pool(Checkpoint& ck, const std::string& key, const MemoryPool& pool) {
  if (pool.empty()) return;
  Tensor mask({pool.slots()});
  for (std::size_t s = 0; s < pool.slots(); ++s) mask[s] = pool.mask[s] ? 1.0 : 0.0;
  ck.add(key + ".values", pool.values);
  ck.add(key + ".mask", std::move(mask));
}

inline MemoryPool pool_from(const Checkpoint& ck, const std::string& key) {
  MemoryPool pool;
  pool.source = key;
  if (!ck.has(key + ".mask")) return pool;
  const Tensor& mask = ck.get(key + ".mask");
  pool.values = ck.get(key + ".values");
  if (pool.values.rank() != 2 || pool.values.rows() != mask.size())
    throw Error(Errc::MalformedManifest, "pool " + key + ": values and mask disagree");
  for (double v : mask.values()) {
    if (v != 0.0 && v != 1.0) throw Error(Errc::MalformedManifest, "pool " + key + ": mask must be 0/1");
    pool.mask.push_back(v == 1.0);
  }
  return pool;
}

}  // namespace pptr::model
