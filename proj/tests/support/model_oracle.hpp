#pragma once

// Naive loop implementations of the network pieces on plain nested vectors.
// They share no code with the tape ops.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "pptr/geometry/types.hpp"
#include "pptr/tensor/tensor.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const pptr::ad::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t[r * t.cols() + c];
  return m;
}

inline std::vector<double> to_vec(const pptr::ad::Tensor& t) { return t.values(); }

inline double max_abs_diff(const Mat& a, const pptr::ad::Tensor& b) {
  double worst = 0.0;
  if (a.size() != b.rows()) return std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != b.cols()) return std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b(r, c)));
  }
  return worst;
}

/// y = W x (+ b), W given row-major out x in.
inline std::vector<double> affine(const Mat& w, const std::vector<double>& x, const std::vector<double>* b = nullptr) {
  std::vector<double> y(w.size(), 0.0);
  for (std::size_t o = 0; o < w.size(); ++o) {
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += w[o][i] * x[i];
    if (b) y[o] += (*b)[o];
  }
  return y;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); }

inline std::vector<double> gelu(std::vector<double> v) {
  for (double& x : v) x = gelu(x);
  return v;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b, double eps = 1e-5) {
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
  return y;
}

/// Quadruple loop over (anchor, temporal offset, neighbour, channel).
/// frames[t][i] positions, feats[t][i] features.
inline std::vector<Mat> conv4d(const std::vector<std::vector<pptr::geometry::Vec3>>& frames,
                               const std::vector<Mat>& feats, const Mat& wd, const Mat& wf, double r,
                               long rt) {
  const long L = static_cast<long>(frames.size());
  std::vector<Mat> out(frames.size());
  for (long t = 0; t < L; ++t) {
    for (std::size_t i = 0; i < frames[t].size(); ++i) {
      const auto& p = frames[t][i];
      std::vector<double> acc(wf.size(), 0.0);
      for (long dt = -rt; dt <= rt; ++dt) {
        const long u = t + dt;
        if (u < 0 || u >= L) continue;
        std::vector<double> best(wf.size(), -std::numeric_limits<double>::infinity());
        bool any = false;
        for (std::size_t j = 0; j < frames[u].size(); ++j) {
          const auto& q = frames[u][j];
          const double d[4] = {q.x() - p.x(), q.y() - p.y(), q.z() - p.z(), static_cast<double>(dt)};
          if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] > r * r) continue;
          any = true;
          for (std::size_t c = 0; c < wf.size(); ++c) {
            double v = 0.0;
            for (int k = 0; k < 4; ++k) v += wd[c][k] * d[k];
            double f = 0.0;
            for (std::size_t k = 0; k < wf[c].size(); ++k) f += wf[c][k] * feats[u][j][k];
            best[c] = std::max(best[c], v + f);
          }
        }
        if (any)
          for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += best[c];
      }
      out[t].push_back(acc);
    }
  }
  return out;
}

/// Softmax attention of every row in `rows` against keys `keys` of x;
/// returns one output per query row. Masked keys get -inf logits.
inline Mat attention(const Mat& x, const std::vector<bool>& key_mask, const Mat& wq, const Mat& wk, const Mat& wv) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.size()));
  Mat q, k, v;
  for (const auto& r : x) {
    q.push_back(affine(wq, r));
    k.push_back(affine(wk, r));
    v.push_back(affine(wv, r));
  }
  Mat out(x.size(), std::vector<double>(wv.size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> logit(x.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.size(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q[i].size(); ++c) s += q[i][c] * k[j][c];
      logit[j] = key_mask[j] ? s * scale : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, logit[j]);
    }
    double z = 0.0;
    for (double& l : logit) {
      l = std::exp(l - mx);
      z += l;
    }
    for (std::size_t j = 0; j < x.size(); ++j)
      for (std::size_t c = 0; c < wv.size(); ++c) out[i][c] += logit[j] / z * v[j][c];
  }
  return out;
}

struct BlockWeights {
  std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b, b1, b2;
  Mat wq, wk, wv, w1, w2;
};

/// Pre-LN block with dense masked attention over all rows of x.
inline Mat block(const Mat& x, const std::vector<bool>& key_mask, const BlockWeights& w) {
  Mat h;
  for (const auto& r : x) h.push_back(layer_norm(r, w.ln1_g, w.ln1_b));
  const Mat a = attention(h, key_mask, w.wq, w.wk, w.wv);
  Mat out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> y(x[i].size());
    for (std::size_t c = 0; c < y.size(); ++c) y[c] = x[i][c] + a[i][c];
    const auto f = affine(w.w2, gelu(affine(w.w1, layer_norm(y, w.ln2_g, w.ln2_b), &w.b1)), &w.b2);
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += f[c];
    out[i] = y;
  }
  return out;
}

}  // namespace oracle
