#pragma once

#include <cstdint>
#include <string>

#include "pptr/common/keyvalue.hpp"

namespace pptr::model {

/// Hyper-parameters of the network. Token values stay at width C through
/// every residual path, so the attention value width must equal C.
struct PPTrConfig {
  std::size_t feature_dim = 16;  // C
  std::size_t conv_dim = 16;     // C'
  std::size_t key_dim = 16;      // C^k
  std::size_t value_dim = 16;    // C^v
  std::size_t ffn_dim = 32;
  std::size_t head_dim = 32;
  double spatial_radius = 0.15;  // r_s
  std::size_t temporal_radius = 1;  // r_t
  std::size_t conv_layers = 2;
  std::size_t conv_stride = 1;     // 1: every point is an anchor
  std::size_t max_neighbors = 0;   // 0: every neighbour within r_s
  std::size_t intra_blocks = 1;
  std::size_t primitive_blocks = 1;
  std::size_t m_target = 8;   // M
  std::size_t clip_length = 3;  // L
  std::size_t memory_length = 0;  // L'
  std::size_t num_classes = 4;
  bool use_normals = false;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return use_normals ? 4 : 1; }
  std::size_t center_frame() const { return clip_length / 2; }
};

inline void validate(const PPTrConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (c.feature_dim < 1 || c.conv_dim < 1 || c.key_dim < 1 || c.value_dim < 1 || c.ffn_dim < 1 ||
      c.head_dim < 1)
    fail("all dimensions must be >= 1");
  if (c.value_dim != c.feature_dim) fail("value_dim must equal feature_dim (residual paths)");
  if (!(c.spatial_radius > 0.0)) fail("spatial_radius must be > 0");
  if (c.clip_length < 1) fail("clip_length must be >= 1");
  if (c.temporal_radius >= c.clip_length) fail("temporal_radius must be < clip_length");
  if (c.conv_layers < 1) fail("conv_layers must be >= 1");
  if (c.conv_stride < 1) fail("conv_stride must be >= 1");
  if (c.m_target < 1) fail("m_target must be >= 1");
  if (c.num_classes < 1) fail("num_classes must be >= 1");
}

inline KeyValue to_keyvalue(const PPTrConfig& c) {
  KeyValue kv;
  kv.set_num("feature_dim", c.feature_dim);
  kv.set_num("conv_dim", c.conv_dim);
  kv.set_num("key_dim", c.key_dim);
  kv.set_num("value_dim", c.value_dim);
  kv.set_num("ffn_dim", c.ffn_dim);
  kv.set_num("head_dim", c.head_dim);
  kv.set_num("spatial_radius", c.spatial_radius);
  kv.set_num("temporal_radius", c.temporal_radius);
  kv.set_num("conv_layers", c.conv_layers);
  kv.set_num("conv_stride", c.conv_stride);
  kv.set_num("max_neighbors", c.max_neighbors);
  kv.set_num("intra_blocks", c.intra_blocks);
  kv.set_num("primitive_blocks", c.primitive_blocks);
  kv.set_num("m_target", c.m_target);
  kv.set_num("clip_length", c.clip_length);
  kv.set_num("memory_length", c.memory_length);
  kv.set_num("num_classes", c.num_classes);
  kv.set("use_normals", c.use_normals ? "1" : "0");
  kv.set_num("seed", c.seed);
  return kv;
}

/// Reads the keys it knows; anything else in `kv` is left for other readers.
inline PPTrConfig config_from(const KeyValue& kv, PPTrConfig c = {}) {
  auto sz = [&](const char* key, std::size_t& field) {
    if (!kv.has(key)) return;
    const auto v = kv.get_int(key);
    if (v < 0) throw Error(Errc::InvalidConfig, std::string(key) + " must be >= 0");
    field = static_cast<std::size_t>(v);
  };
  sz("feature_dim", c.feature_dim);
  sz("conv_dim", c.conv_dim);
  sz("key_dim", c.key_dim);
  sz("value_dim", c.value_dim);
  sz("ffn_dim", c.ffn_dim);
  sz("head_dim", c.head_dim);
  if (kv.has("spatial_radius")) c.spatial_radius = kv.get_double("spatial_radius");
  sz("temporal_radius", c.temporal_radius);
  sz("conv_layers", c.conv_layers);
  sz("conv_stride", c.conv_stride);
  sz("max_neighbors", c.max_neighbors);
  sz("intra_blocks", c.intra_blocks);
  sz("primitive_blocks", c.primitive_blocks);
  sz("m_target", c.m_target);
  sz("clip_length", c.clip_length);
  sz("memory_length", c.memory_length);
  sz("num_classes", c.num_classes);
  if (kv.has("use_normals")) c.use_normals = kv.get_int("use_normals") != 0;
  if (kv.has("seed")) c.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  return c;
}

/// The single-frame extractor used to fill the memory pool: same widths,
/// one frame, no temporal reach, no primitive-level blocks.
inline PPTrConfig extractor_config(PPTrConfig c) {
  c.clip_length = 1;
  c.temporal_radius = 0;
  c.memory_length = 0;
  c.primitive_blocks = 0;
  return c;
}

}  // namespace pptr::model
