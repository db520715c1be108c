#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pptr/common/error.hpp"
#include "pptr/common/keyvalue.hpp"
#include "pptr/model/config.hpp"

namespace pptr::analysis {

/// Attention cost of one clip for flat attention over all L*N points versus
/// the two-level hierarchy (intra-primitive, then primitive tokens of the
/// clip plus L' memory frames).
struct CostRow {
  std::uint64_t L = 0, N = 0, M = 0, memory = 0;
  std::uint64_t flat_interactions = 0;
  std::uint64_t hier_intra_interactions = 0;
  std::uint64_t hier_primitive_interactions = 0;
  std::uint64_t hier_total = 0;
  std::uint64_t flat_activation_proxy = 0;
  std::uint64_t hier_activation_proxy = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
};

namespace detail {

inline std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw Error(Errc::InvalidConfig, "cost exceeds 64-bit range");
  return r;
}

inline std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw Error(Errc::InvalidConfig, "cost exceeds 64-bit range");
  return r;
}

}  // namespace detail

/// Points per primitive, ceil(N / M): every primitive is charged as if it
/// held the largest equal share.
inline std::uint64_t points_per_primitive(std::uint64_t N, std::uint64_t M) { return (N + M - 1) / M; }

/// Per-token activations kept by one pre-LN block: input, query, key,
/// value and the hidden FFN layer.
inline std::uint64_t block_width(const model::PPTrConfig& c) {
  return c.feature_dim + 2 * c.key_dim + c.value_dim + c.ffn_dim;
}

inline CostRow cost_row(std::uint64_t L, std::uint64_t N, std::uint64_t M, std::uint64_t memory,
                        const model::PPTrConfig& cfg) {
  using detail::add;
  using detail::mul;
  if (M < 1 || N < M) throw Error(Errc::InvalidConfig, "cost model needs N >= M >= 1");
  if (L < 1) throw Error(Errc::InvalidConfig, "L must be >= 1");
  CostRow r{L, N, M, memory};
  const std::uint64_t points = mul(L, N), share = points_per_primitive(N, M);
  const std::uint64_t tokens = mul(add(L, memory), M);
  r.flat_interactions = mul(points, points);
  r.hier_intra_interactions = mul(mul(L, M), mul(share, share));
  r.hier_primitive_interactions = mul(tokens, tokens);
  r.hier_total = add(r.hier_intra_interactions, r.hier_primitive_interactions);

  const std::uint64_t conv = mul(mul(cfg.conv_layers, points), cfg.conv_dim);
  const std::uint64_t width = block_width(cfg), blocks = cfg.intra_blocks + cfg.primitive_blocks;
  r.flat_activation_proxy = add(conv, mul(blocks, add(mul(points, width), r.flat_interactions)));
  r.hier_activation_proxy =
      add(add(conv, mul(cfg.intra_blocks, add(mul(points, width), r.hier_intra_interactions))),
          mul(cfg.primitive_blocks, add(mul(tokens, width), r.hier_primitive_interactions)));
  return r;
}

inline CostReport cost_sweep(std::uint64_t N, std::uint64_t M, std::uint64_t memory,
                             std::span<const std::uint64_t> L_values, const model::PPTrConfig& cfg = {}) {
  model::validate(cfg);
  CostReport rep;
  for (std::uint64_t L : L_values) rep.rows.push_back(cost_row(L, N, M, memory, cfg));
  return rep;
}

/// "a..b" (inclusive) or a single value.
inline std::vector<std::uint64_t> parse_range(const std::string& s) {
  auto num = [&](const std::string& t) {
    const auto v = KeyValue::to_int("range", trim(t));
    if (v < 1) throw Error(Errc::InvalidConfig, "range bounds must be >= 1");
    return static_cast<std::uint64_t>(v);
  };
  const auto dots = s.find("..");
  const std::uint64_t a = num(s.substr(0, dots)), b = dots == std::string::npos ? a : num(s.substr(dots + 2));
  if (b < a) throw Error(Errc::InvalidConfig, "empty range '" + s + "'");
  std::vector<std::uint64_t> out;
  for (std::uint64_t v = a; v <= b; ++v) out.push_back(v);
  return out;
}

inline void write_csv(const CostReport& rep, std::ostream& out) {
  out << "L,N,M,L_mem,flat_interactions,hier_intra_interactions,hier_primitive_interactions,hier_total,"
         "flat_activation_proxy,hier_activation_proxy\n";
  for (const auto& r : rep.rows)
    out << r.L << ',' << r.N << ',' << r.M << ',' << r.memory << ',' << r.flat_interactions << ','
        << r.hier_intra_interactions << ',' << r.hier_primitive_interactions << ',' << r.hier_total << ','
        << r.flat_activation_proxy << ',' << r.hier_activation_proxy << '\n';
}

}  // namespace pptr::analysis
