#pragma once

#include <cmath>
#include <vector>

#include "pptr/model/clip.hpp"
#include "pptr/model/weights.hpp"

namespace pptr::model {

/// Single-head scaled dot-product attention applied to each row group
/// independently: rows outside a group never see each other. Output rows
/// are W_v-projected values mixed within their group.
inline Var grouped_attention(Var x, Var wq, Var wk, Var wv, const std::vector<std::vector<std::size_t>>& groups) {
  const std::size_t rows = x.value().rows();
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(wq.value().rows()));
  Var q = ad::matmul(x, ad::transpose(wq));
  Var k = ad::matmul(x, ad::transpose(wk));
  Var v = ad::matmul(x, ad::transpose(wv));
  std::vector<Var> parts;
  parts.reserve(groups.size());
  for (const auto& g : groups) {
    Var qg = ad::gather_rows(q, g), kg = ad::gather_rows(k, g), vg = ad::gather_rows(v, g);
    Var logits = ad::scale(ad::matmul(qg, ad::transpose(kg)), inv_sqrt_k);
    parts.push_back(ad::matmul(ad::row_softmax(logits), vg));
  }
  return ad::scatter_rows(parts, groups, rows);
}

/// Attention restricted to each (frame, primitive) region of the clip;
/// clutter is one more region per frame.
inline Var intra_primitive_attention(Var feats, const Clip& clip, const BoundWeights& w, const std::string& p) {
  return grouped_attention(feats, w[p + ".wq"], w[p + ".wk"], w[p + ".wv"], clip.groups);
}

/// Pre-LN transformer block: x + Attn(LN(x)), then y + FFN(LN(y)) with a
/// two-layer GELU MLP.
inline Var transformer_block(Var x, const std::vector<std::vector<std::size_t>>& groups, const BoundWeights& w,
                             const std::string& p) {
  Var h = ad::layer_norm(x, w[p + ".ln1.gain"], w[p + ".ln1.bias"]);
  Var y = ad::add(x, grouped_attention(h, w[p + ".wq"], w[p + ".wk"], w[p + ".wv"], groups));
  Var h2 = ad::layer_norm(y, w[p + ".ln2.gain"], w[p + ".ln2.bias"]);
  Var ffn = ad::linear(ad::gelu(ad::linear(h2, w[p + ".ffn.w1"], w[p + ".ffn.b1"])), w[p + ".ffn.w2"],
                       w[p + ".ffn.b2"]);
  return ad::add(y, ffn);
}

inline Var intra_primitive_block(Var feats, const Clip& clip, const BoundWeights& w, const std::string& p) {
  return transformer_block(feats, clip.groups, w, p);
}

/// Token set of one clip (or of a memory pool). Row s of `values` is slot s
/// = frame * M + (primitive - 1); rows whose mask is false are padding and
/// are never read.
struct PrimitiveTokens {
  Var values;
  std::vector<bool> mask;

  std::vector<std::size_t> real() const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < mask.size(); ++s)
      if (mask[s]) out.push_back(s);
    return out;
  }
};

/// Offline memory: tokens of a single-frame extractor over L' frames.
struct MemoryPool {
  Tensor values;  // (L' * M) x C, padding rows zero; empty when L' = 0
  std::vector<bool> mask;
  std::string source;

  std::size_t slots() const { return mask.size(); }
  bool empty() const { return mask.empty(); }
};

/// Per-(frame, slot) max over member points; padding slots are zero rows.
inline PrimitiveTokens pool_primitive_tokens(Var feats, const Clip& clip) {
  const std::size_t C = feats.value().cols();
  PrimitiveTokens tok;
  tok.mask = clip.mask;
  if (clip.real_slots.empty()) {
    tok.values = feats.tape->constant(Tensor::matrix(clip.mask.size(), C));
    return tok;
  }
  Var members = ad::gather_rows(feats, clip.member_rows);
  Var pooled = ad::group_max_pool(members, ad::GroupSpec(clip.member_token, clip.real_slots.size()));
  tok.values = ad::scatter_rows({pooled}, {clip.real_slots}, clip.mask.size());
  return tok;
}

/// Self-attention over the real clip tokens and the real memory tokens
/// together; returns updated clip tokens (memory outputs are dropped).
/// Padding slots are excluded from attention entirely, which is the same as
/// giving them -inf logits.
inline PrimitiveTokens primitive_transformer(const PrimitiveTokens& clip_tokens, const MemoryPool& pool,
                                             const BoundWeights& w, std::size_t blocks) {
  const auto clip_real = clip_tokens.real();
  std::vector<std::size_t> pool_real;
  for (std::size_t s = 0; s < pool.mask.size(); ++s)
    if (pool.mask[s]) pool_real.push_back(s);
  if (clip_real.empty() && pool_real.empty()) throw Error(Errc::AllMasked, "no real primitive token");
  if (blocks == 0) return clip_tokens;
  if (clip_real.empty()) return clip_tokens;  // nothing to update

  Tape& tape = *clip_tokens.values.tape;
  std::vector<Var> parts = {ad::gather_rows(clip_tokens.values, clip_real)};
  if (!pool_real.empty()) {
    if (pool.values.cols() != clip_tokens.values.value().cols())
      throw Error(Errc::ConfigMismatch, "memory pool width differs from token width");
    Tensor mem = Tensor::matrix(pool_real.size(), pool.values.cols());
    for (std::size_t i = 0; i < pool_real.size(); ++i)
      std::copy_n(pool.values.row(pool_real[i]).begin(), pool.values.cols(), mem.row(i).begin());
    parts.push_back(tape.constant(std::move(mem)));
  }
  Var x = parts.size() == 1 ? parts[0] : ad::concat(parts, 0);
  std::vector<std::size_t> all(clip_real.size() + pool_real.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const std::vector<std::vector<std::size_t>> one_group = {all};
  for (std::size_t b = 0; b < blocks; ++b) x = transformer_block(x, one_group, w, "prim." + std::to_string(b));
  if (!pool_real.empty()) x = ad::slice(x, 0, 0, clip_real.size());
  PrimitiveTokens out;
  out.mask = clip_tokens.mask;
  out.values = ad::scatter_rows({x}, {clip_real}, clip_tokens.mask.size());
  return out;
}

}  // namespace pptr::model
