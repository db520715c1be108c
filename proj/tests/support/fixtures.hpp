#pragma once

// Random instances shared by the model tests and the acceptance run.

#include <string>
#include <vector>

#include "pptr/model/weights.hpp"
#include "pptr/model/clip.hpp"
#include "support/model_oracle.hpp"
#include "support/oracles.hpp"

namespace fixture {

using namespace pptr;
using namespace pptr::model;
using ad::Tensor;
using geometry::PointFrame;
using geometry::Vec3;
using primitives::PrimitiveAssignment;

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

inline Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  return random_tensor(rng, {r, c}, scale);
}

inline PrimitiveAssignment random_assignment(Rng& rng, std::size_t n, std::size_t m_actual, std::size_t m_target,
                                      double clutter = 0.2) {
  PrimitiveAssignment a;
  a.m_actual = m_actual;
  a.m_target = m_target;
  a.planes.resize(m_actual);
  a.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < m_actual) a.labels[i] = static_cast<int>(i) + 1;
    else if (rng.uniform() < clutter) a.labels[i] = 0;
    else a.labels[i] = 1 + static_cast<int>(rng.index(m_actual));
  }
  return a;
}

struct Sample {
  std::vector<PointFrame> frames;
  std::vector<PrimitiveAssignment> prims;
};

inline Sample random_sample(Rng& rng, std::size_t L, std::size_t n, double extent, std::size_t m_target,
                     bool quantize = false, double clutter = 0.2) {
  Sample s;
  for (std::size_t t = 0; t < L; ++t) {
    PointFrame f;
    f.positions = oracle::random_cloud(rng, n, extent);
    if (quantize)
      for (auto& p : f.positions) p = (p * 1024.0).array().round() / 1024.0;
    f.frame_index = static_cast<int>(t);
    s.frames.push_back(std::move(f));
    const std::size_t m = 1 + rng.index(m_target);
    s.prims.push_back(random_assignment(rng, n, m, m_target, clutter));
  }
  return s;
}

/// Every weight replaced by a random value, so that gains, biases and
/// zero-initialised tensors are exercised too.
inline ParameterStore random_store(const PPTrConfig& cfg, Rng& rng, double scale = 0.5) {
  ParameterStore s = init_weights(cfg);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (double& v : s.at(i).values()) v = rng.uniform(-scale, scale);
  return s;
}

inline std::vector<oracle::Mat> frame_rows(const Tensor& all, const Clip& clip) {
  std::vector<oracle::Mat> out(clip.length);
  for (std::size_t t = 0; t < clip.length; ++t)
    for (std::size_t r = clip.offset[t]; r < clip.offset[t + 1]; ++r)
      out[t].emplace_back(all.row(r).begin(), all.row(r).end());
  return out;
}

inline std::vector<std::vector<Vec3>> positions(const Sample& s) {
  std::vector<std::vector<Vec3>> out;
  for (const auto& f : s.frames) out.push_back(f.positions);
  return out;
}

inline oracle::BlockWeights block_weights(const ParameterStore& s, const std::string& p) {
  auto vec = [&](const std::string& n) { return s.at(p + n).values(); };
  auto mat = [&](const std::string& n) { return oracle::to_mat(s.at(p + n)); };
  return {vec(".ln1.gain"), vec(".ln1.bias"), vec(".ln2.gain"), vec(".ln2.bias"), vec(".ffn.b1"),
          vec(".ffn.b2"),   mat(".wq"),       mat(".wk"),       mat(".wv"),       mat(".ffn.w1"),
          mat(".ffn.w2")};
}

}  // namespace fixture
