#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pptr/common/random.hpp"
#include "pptr/model/config.hpp"
#include "pptr/tensor/tape.hpp"

namespace pptr::model {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

/// Named parameter tensors in a fixed creation order. The order defines the
/// initialisation sequence, the checkpoint layout and optimizer state.
class ParameterStore {
 public:
  void add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw Error(Errc::InvalidConfig, "duplicate parameter " + name);
    index_[name] = tensors_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name) { return tensors_[find(name)]; }
  const Tensor& at(const std::string& name) const { return tensors_[find(name)]; }
  Tensor& at(std::size_t i) { return tensors_[i]; }
  const Tensor& at(std::size_t i) const { return tensors_[i]; }

  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(Errc::InvalidConfig, "unknown parameter " + name);
    return it->second;
  }

  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Parameters placed on a tape for one forward pass.
class BoundWeights {
 public:
  BoundWeights(Tape& tape, const ParameterStore& store, bool trainable) : tape_(&tape) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      Var v = trainable ? tape.parameter(store.at(i)) : tape.constant(store.at(i));
      vars_.emplace(store.names()[i], v);
      order_.push_back(v);
    }
  }

  /// Bind vars created elsewhere (e.g. by a gradient checker).
  BoundWeights(Tape& tape, const std::vector<std::string>& names, const std::vector<Var>& vars) : tape_(&tape) {
    if (names.size() != vars.size()) throw Error(Errc::LengthMismatch, "one var per parameter name");
    for (std::size_t i = 0; i < names.size(); ++i) vars_.emplace(names[i], vars[i]);
    order_ = vars;
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw Error(Errc::InvalidConfig, "unknown parameter " + name);
    return it->second;
  }

  /// Vars in store order (for reading gradients back).
  const std::vector<Var>& ordered() const { return order_; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
  std::vector<Var> order_;
};

namespace detail {

inline Tensor uniform_init(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

inline void add_block(ParameterStore& s, Rng& rng, const std::string& p, const PPTrConfig& c) {
  const std::size_t C = c.feature_dim;
  s.add(p + ".ln1.gain", Tensor({C}, 1.0));
  s.add(p + ".ln1.bias", Tensor({C}, 0.0));
  s.add(p + ".wq", uniform_init(rng, c.key_dim, C));
  s.add(p + ".wk", uniform_init(rng, c.key_dim, C));
  s.add(p + ".wv", uniform_init(rng, c.value_dim, C));
  s.add(p + ".ln2.gain", Tensor({C}, 1.0));
  s.add(p + ".ln2.bias", Tensor({C}, 0.0));
  s.add(p + ".ffn.w1", uniform_init(rng, c.ffn_dim, C));
  s.add(p + ".ffn.b1", Tensor({c.ffn_dim}, 0.0));
  s.add(p + ".ffn.w2", uniform_init(rng, C, c.ffn_dim));
  s.add(p + ".ffn.b2", Tensor({C}, 0.0));
}

}  // namespace detail

/// Output width of conv layer l: C' for all but the last layer, C for the last.
inline std::size_t conv_out_dim(const PPTrConfig& c, std::size_t l) {
  return l + 1 == c.conv_layers ? c.feature_dim : c.conv_dim;
}

inline std::size_t conv_in_dim(const PPTrConfig& c, std::size_t l) {
  return l == 0 ? c.input_dim() : c.conv_dim;
}

/// Fresh weights: matrices uniform in +-1/sqrt(fan_in), biases 0, layer-norm
/// gains 1. Both task heads are always present.
inline ParameterStore init_weights(const PPTrConfig& c) {
  validate(c);
  Rng rng(c.seed);
  ParameterStore s;
  for (std::size_t l = 0; l < c.conv_layers; ++l) {
    const std::string p = "conv." + std::to_string(l);
    s.add(p + ".wd", detail::uniform_init(rng, conv_out_dim(c, l), 4));
    s.add(p + ".wf", detail::uniform_init(rng, conv_out_dim(c, l), conv_in_dim(c, l)));
  }
  for (std::size_t b = 0; b < c.intra_blocks; ++b) detail::add_block(s, rng, "intra." + std::to_string(b), c);
  for (std::size_t b = 0; b < c.primitive_blocks; ++b) detail::add_block(s, rng, "prim." + std::to_string(b), c);
  const std::size_t C = c.feature_dim, H = c.head_dim, K = c.num_classes;
  s.add("seg.w1", detail::uniform_init(rng, H, 3 * C));
  s.add("seg.b1", Tensor({H}, 0.0));
  s.add("seg.w2", detail::uniform_init(rng, H, H));
  s.add("seg.b2", Tensor({H}, 0.0));
  s.add("seg.w3", detail::uniform_init(rng, K, H));
  s.add("seg.b3", Tensor({K}, 0.0));
  s.add("cls.w1", detail::uniform_init(rng, H, C));
  s.add("cls.b1", Tensor({H}, 0.0));
  s.add("cls.w2", detail::uniform_init(rng, K, H));
  s.add("cls.b2", Tensor({K}, 0.0));
  return s;
}

/// Copy every tensor whose name and shape also exist in `src`. Returns the
/// number copied.
inline std::size_t copy_matching(ParameterStore& dst, const ParameterStore& src) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::string& name = dst.names()[i];
    if (src.has(name) && src.at(name).shape() == dst.at(i).shape()) {
      dst.at(i) = src.at(name);
      ++n;
    }
  }
  return n;
}

// ---- checkpoint container -------------------------------------------------
//
//   PPTR-CHECKPOINT
//   format_version=1
//   [config]
//   key=value            (one per line)
//   [manifest]
//   name rank d0 d1 ...  (one per array, in data order)
//   [data]
//   <raw little-endian f64 values of every array, back to back>

inline constexpr const char* kCheckpointMagic = "PPTR-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  KeyValue config;
  std::vector<std::string> names;
  std::vector<Tensor> arrays;

  void add(const std::string& name, Tensor t) {
    names.push_back(name);
    arrays.push_back(std::move(t));
  }

  const Tensor& get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return arrays[i];
    throw Error(Errc::MalformedManifest, "checkpoint has no array " + name);
  }

  bool has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }
};

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ostringstream head;
  head << kCheckpointMagic << "\nformat_version=" << kCheckpointVersion << "\n[config]\n";
  ck.config.write(head);
  head << "[manifest]\n";
  for (std::size_t i = 0; i < ck.names.size(); ++i) {
    if (ck.names[i].find_first_of(" \t\n") != std::string::npos)
      throw Error(Errc::InvalidConfig, "array names cannot contain whitespace");
    head << ck.names[i] << ' ' << ck.arrays[i].rank();
    for (std::size_t d : ck.arrays[i].shape()) head << ' ' << d;
    head << '\n';
  }
  head << "[data]\n";
  std::string bytes = head.str();
  for (const auto& t : ck.arrays)
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  auto bad = [&](const std::string& m) { return Error(Errc::MalformedManifest, path.filename().string() + ": " + m); };
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw bad("not a checkpoint");
  if (!std::getline(in, line) || line != "format_version=" + std::to_string(kCheckpointVersion))
    throw bad("unsupported format version");
  if (!std::getline(in, line) || line != "[config]") throw bad("missing [config]");
  Checkpoint ck;
  std::string config_text;
  while (std::getline(in, line) && line != "[manifest]") config_text += line + "\n";
  if (line != "[manifest]") throw bad("missing [manifest]");
  {
    std::istringstream cs(config_text);
    ck.config = KeyValue::parse(cs, Errc::MalformedManifest);
  }
  std::vector<Shape> shapes;
  while (std::getline(in, line) && line != "[data]") {
    std::istringstream ls(line);
    std::string name;
    std::size_t rank = 0;
    if (!(ls >> name >> rank) || rank == 0) throw bad("bad manifest line '" + line + "'");
    Shape s(rank);
    for (auto& d : s)
      if (!(ls >> d) || d == 0) throw bad("bad shape for " + name);
    ck.names.push_back(name);
    shapes.push_back(s);
  }
  if (line != "[data]") throw bad("missing [data]");
  for (const auto& s : shapes) {
    std::vector<double> values(ad::shape_size(s));
    for (double& v : values) {
      unsigned char b[8];
      if (!in.read(reinterpret_cast<char*>(b), 8)) throw bad("truncated data");
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
      v = std::bit_cast<double>(bits);
    }
    ck.arrays.emplace_back(s, std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw bad("trailing bytes after data");
  return ck;
}

inline Checkpoint weights_checkpoint(const PPTrConfig& cfg, const ParameterStore& w, const KeyValue& extra = {}) {
  Checkpoint ck;
  ck.config = to_keyvalue(cfg);
  for (const auto& [k, v] : extra.entries()) ck.config.set(k, v);
  for (std::size_t i = 0; i < w.size(); ++i) ck.add(w.names()[i], w.at(i));
  return ck;
}

/// Weights and config from a checkpoint. The leading arrays must match the
/// layout the stored config implies; arrays after them (memory pools) are
/// left to other readers.
inline std::pair<PPTrConfig, ParameterStore> weights_from(const Checkpoint& ck) {
  const PPTrConfig cfg = config_from(ck.config);
  ParameterStore w = init_weights(cfg);
  if (ck.names.size() < w.size()) throw Error(Errc::ConfigMismatch, "checkpoint has fewer arrays than the config needs");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (ck.names[i] != w.names()[i] || ck.arrays[i].shape() != w.at(i).shape())
      throw Error(Errc::ConfigMismatch, "checkpoint array " + ck.names[i] + " does not match config");
    w.at(i) = ck.arrays[i];
  }
  return {cfg, std::move(w)};
}

}  // namespace pptr::model
