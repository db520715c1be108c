#pragma once

// Differentiable operations. Every op computes its forward value eagerly
// and, on a recording tape, registers a closure that maps the output
// gradient to its inputs. Matrices are rank-2 row-major; scalars have
// shape [1].

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <span>
#include <vector>

#include "pptr/tensor/tape.hpp"

namespace pptr::ad {

/// Partition of tokens (rows) into groups 0..num_groups-1.
struct GroupSpec {
  std::vector<std::size_t> group_of;
  std::size_t num_groups = 0;

  GroupSpec() = default;
  GroupSpec(std::vector<std::size_t> ids, std::size_t groups)
      : group_of(std::move(ids)), num_groups(groups) {
    for (std::size_t g : group_of)
      if (g >= num_groups) throw Error(Errc::InvalidConfig, "group id out of range");
  }

  std::size_t tokens() const { return group_of.size(); }

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(num_groups);
    for (std::size_t i = 0; i < group_of.size(); ++i) out[group_of[i]].push_back(i);
    return out;
  }
};

namespace detail {

inline Tape& same_tape(std::initializer_list<Var> vs) {
  Tape* t = vs.begin()->tape;
  for (const Var& v : vs)
    if (v.tape != t) throw Error(Errc::InvalidConfig, "operands live on different tapes");
  return *t;
}

inline bool any_grad(std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (v.requires_grad()) return true;
  return false;
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw Error(Errc::LengthMismatch, std::string(op) + " expects a matrix");
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape({a, b});
  detail::require_matrix(a.value(), "matmul");
  detail::require_matrix(b.value(), "matmul");
  Tensor out = kernel::gemm(a.value(), false, b.value(), false);
  return tape.push(std::move(out), detail::any_grad({a, b}), [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, kernel::gemm(g, false, b.value(), true));
    if (b.requires_grad()) t.accumulate(b, kernel::gemm(a.value(), true, g, false));
  });
}

/// x * W^T + bias, with W shaped out x in and bias shaped [out].
inline Var linear(Var x, Var w, Var bias) {
  Tape& tape = detail::same_tape({x, w, bias});
  detail::require_matrix(x.value(), "linear");
  detail::require_matrix(w.value(), "linear");
  const std::size_t out_dim = w.value().rows();
  if (bias.value().size() != out_dim) throw Error(Errc::LengthMismatch, "linear bias size");
  Tensor out = kernel::gemm(x.value(), false, w.value(), true);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out_dim; ++c) out(r, c) += bias.value()[c];
  return tape.push(std::move(out), detail::any_grad({x, w, bias}),
                   [x, w, bias](Tape& t, const Tensor& g) {
                     if (x.requires_grad()) t.accumulate(x, kernel::gemm(g, false, w.value(), false));
                     if (w.requires_grad()) t.accumulate(w, kernel::gemm(g, true, x.value(), false));
                     if (bias.requires_grad()) {
                       Tensor gb(bias.value().shape());
                       for (std::size_t r = 0; r < g.rows(); ++r)
                         for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                       t.accumulate(bias, gb);
                     }
                   });
}

inline Var add(Var a, Var b) {
  Tape& tape = detail::same_tape({a, b});
  if (!a.value().same_shape(b.value())) throw Error(Errc::LengthMismatch, "add shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.push(std::move(out), detail::any_grad({a, b}), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& tape = detail::same_tape({a, b});
  if (!a.value().same_shape(b.value())) throw Error(Errc::LengthMismatch, "mul shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.push(std::move(out), detail::any_grad({a, b}), [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
      t.accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
      t.accumulate(b, gb);
    }
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return a.tape->push(std::move(out), a.requires_grad(), [a, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (double& v : ga.values()) v *= s;
    t.accumulate(a, ga);
  });
}

/// Row-broadcast add of a [cols] bias.
inline Var add_bias(Var x, Var bias) {
  Tape& tape = detail::same_tape({x, bias});
  detail::require_matrix(x.value(), "add_bias");
  const std::size_t cols = x.value().cols();
  if (bias.value().size() != cols) throw Error(Errc::LengthMismatch, "bias size");
  Tensor out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += bias.value()[c];
  return tape.push(std::move(out), detail::any_grad({x, bias}), [x, bias](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    if (bias.requires_grad()) {
      Tensor gb(bias.value().shape());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      t.accumulate(bias, gb);
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& v = a.value();
  detail::require_matrix(v, "transpose");
  Tensor out = Tensor::matrix(v.cols(), v.rows());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(c, r) = v(r, c);
  return a.tape->push(std::move(out), a.requires_grad(), [a](Tape& t, const Tensor& g) {
    Tensor ga = Tensor::matrix(g.cols(), g.rows());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) = g(r, c);
    t.accumulate(a, ga);
  });
}

/// Concatenate matrices along axis 0 (rows) or 1 (columns).
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(Errc::InvalidConfig, "concat of nothing");
  if (axis > 1) throw Error(Errc::InvalidConfig, "concat axis must be 0 or 1");
  Tape& tape = *parts.front().tape;
  bool grad = false;
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    if (p.tape != &tape) throw Error(Errc::InvalidConfig, "operands live on different tapes");
    detail::require_matrix(p.value(), "concat");
    grad = grad || p.requires_grad();
    if (axis == 0) {
      if (cols == 0) cols = p.value().cols();
      if (p.value().cols() != cols) throw Error(Errc::LengthMismatch, "concat column mismatch");
      rows += p.value().rows();
    } else {
      if (rows == 0) rows = p.value().rows();
      if (p.value().rows() != rows) throw Error(Errc::LengthMismatch, "concat row mismatch");
      cols += p.value().cols();
    }
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out(offset + r, c) = v(r, c);
        else out(r, offset + c) = v(r, c);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  return tape.push(std::move(out), grad, [parts, axis](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const Tensor& v = p.value();
      if (p.requires_grad()) {
        Tensor gp(v.shape());
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c)
            gp(r, c) = axis == 0 ? g(off + r, c) : g(r, off + c);
        t.accumulate(p, gp);
      }
      off += axis == 0 ? v.rows() : v.cols();
    }
  });
}

/// Rows or columns [begin, end) of a matrix.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  detail::require_matrix(v, "slice");
  const std::size_t extent = axis == 0 ? v.rows() : v.cols();
  if (axis > 1 || begin >= end || end > extent) throw Error(Errc::InvalidConfig, "bad slice range");
  const std::size_t rows = axis == 0 ? end - begin : v.rows();
  const std::size_t cols = axis == 1 ? end - begin : v.cols();
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out(r, c) = axis == 0 ? v(begin + r, c) : v(r, begin + c);
  return a.tape->push(std::move(out), a.requires_grad(), [a, axis, begin](Tape& t, const Tensor& g) {
    Tensor ga(a.value().shape());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        if (axis == 0) ga(begin + r, c) = g(r, c);
        else ga(r, begin + c) = g(r, c);
      }
    t.accumulate(a, ga);
  });
}

/// Exact GELU: x * Phi(x).
inline Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return a.tape->push(std::move(out), a.requires_grad(), [a](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor ga = g;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double xi = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xi * xi);
      ga[i] *= cdf + xi * pdf;
    }
    t.accumulate(a, ga);
  });
}

/// Softmax along each row, with the row max subtracted first.
inline Var row_softmax(Var a) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "row_softmax");
  if (!x.all_finite()) throw Error(Errc::NonFiniteInput, "row_softmax input is not finite");
  Tensor out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = x(r, 0);
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, x(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out(r, c) = std::exp(x(r, c) - mx);
      s += out(r, c);
    }
    for (std::size_t c = 0; c < n; ++c) out(r, c) /= s;
  }
  Tensor p = a.requires_grad() ? out : Tensor();
  return a.tape->push(std::move(out), a.requires_grad(), [a, p = std::move(p)](Tape& t, const Tensor& g) {
    Tensor ga(p.shape());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) dot += g(r, c) * p(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) ga(r, c) = p(r, c) * (g(r, c) - dot);
    }
    t.accumulate(a, ga);
  });
}

/// Layer normalisation over the last axis with learnable gain and bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  Tape& tape = detail::same_tape({x, gain, bias});
  const Tensor& v = x.value();
  detail::require_matrix(v, "layer_norm");
  const std::size_t n = v.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    throw Error(Errc::LengthMismatch, "layer_norm gain/bias size");
  Tensor xhat(v.shape());
  std::vector<double> inv_std(v.rows());
  Tensor out(v.shape());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += v(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (v(r, c) - mean) * (v(r, c) - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (v(r, c) - mean) * inv_std[r];
      out(r, c) = gain.value()[c] * xhat(r, c) + bias.value()[c];
    }
  }
  return tape.push(std::move(out), detail::any_grad({x, gain, bias}),
                   [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                       Tape& t, const Tensor& g) {
                     const std::size_t rows = g.rows(), n = g.cols();
                     if (gain.requires_grad() || bias.requires_grad()) {
                       Tensor gg(gain.value().shape()), gb(bias.value().shape());
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < n; ++c) {
                           gg[c] += g(r, c) * xhat(r, c);
                           gb[c] += g(r, c);
                         }
                       t.accumulate(gain, gg);
                       t.accumulate(bias, gb);
                     }
                     if (x.requires_grad()) {
                       Tensor gx(g.shape());
                       std::vector<double> dxhat(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double m1 = 0.0, m2 = 0.0;
                         for (std::size_t c = 0; c < n; ++c) {
                           dxhat[c] = g(r, c) * gain.value()[c];
                           m1 += dxhat[c];
                           m2 += dxhat[c] * xhat(r, c);
                         }
                         m1 /= static_cast<double>(n);
                         m2 /= static_cast<double>(n);
                         for (std::size_t c = 0; c < n; ++c)
                           gx(r, c) = inv_std[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
                       }
                       t.accumulate(x, gx);
                     }
                   });
}

/// Per-group, per-channel maximum over the rows of x. The gradient goes to
/// the arg-max row only; ties resolve to the lowest row index.
inline Var group_max_pool(Var x, const GroupSpec& groups) {
  const Tensor& v = x.value();
  detail::require_matrix(v, "group_max_pool");
  if (groups.tokens() != v.rows()) throw Error(Errc::LengthMismatch, "group spec size != rows");
  const std::size_t cols = v.cols();
  std::vector<std::size_t> argmax(groups.num_groups * cols, SIZE_MAX);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const std::size_t g = groups.group_of[r];
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t& best = argmax[g * cols + c];
      if (best == SIZE_MAX || v(r, c) > v(best, c)) best = r;
    }
  }
  Tensor out = Tensor::matrix(groups.num_groups, cols);
  for (std::size_t g = 0; g < groups.num_groups; ++g) {
    if (argmax[g * cols] == SIZE_MAX)
      throw Error(Errc::EmptyGroup, "group " + std::to_string(g) + " has no tokens");
    for (std::size_t c = 0; c < cols; ++c) out(g, c) = v(argmax[g * cols + c], c);
  }
  return x.tape->push(std::move(out), x.requires_grad(),
                      [x, cols, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                        Tensor gx(x.value().shape());
                        for (std::size_t k = 0; k < argmax.size(); ++k)
                          gx(argmax[k], k % cols) += g[k];
                        t.accumulate(x, gx);
                      });
}

/// Row i of the result is row idx[i] of x.
inline Var gather_rows(Var x, std::vector<std::size_t> idx) {
  const Tensor& v = x.value();
  detail::require_matrix(v, "gather_rows");
  if (idx.empty()) throw Error(Errc::InvalidConfig, "gather of zero rows");
  const std::size_t cols = v.cols();
  Tensor out = Tensor::matrix(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= v.rows()) throw Error(Errc::InvalidConfig, "gather index out of range");
    std::copy_n(v.row(idx[i]).begin(), cols, out.row(i).begin());
  }
  return x.tape->push(std::move(out), x.requires_grad(),
                      [x, idx = std::move(idx)](Tape& t, const Tensor& g) {
                        Tensor gx(x.value().shape());
                        const std::size_t cols = g.cols();
                        for (std::size_t i = 0; i < idx.size(); ++i)
                          for (std::size_t c = 0; c < cols; ++c) gx(idx[i], c) += g(i, c);
                        t.accumulate(x, gx);
                      });
}

/// Token i receives the row of its group.
inline Var group_broadcast(Var x, const GroupSpec& groups) {
  if (x.value().rows() != groups.num_groups)
    throw Error(Errc::LengthMismatch, "group_broadcast expects one row per group");
  return gather_rows(x, groups.group_of);
}

/// Assemble a total x C matrix where row rows[k][i] is row i of parts[k].
/// Unlisted rows are zero; each destination row may be written once.
inline Var scatter_rows(const std::vector<Var>& parts,
                        const std::vector<std::vector<std::size_t>>& rows, std::size_t total) {
  if (parts.empty() || parts.size() != rows.size())
    throw Error(Errc::InvalidConfig, "scatter_rows needs one index list per part");
  Tape& tape = *parts.front().tape;
  const std::size_t cols = parts.front().value().cols();
  Tensor out = Tensor::matrix(total, cols);
  std::vector<bool> written(total, false);
  bool grad = false;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    if (parts[k].tape != &tape) throw Error(Errc::InvalidConfig, "operands live on different tapes");
    if (v.cols() != cols || v.rows() != rows[k].size())
      throw Error(Errc::LengthMismatch, "scatter part shape mismatch");
    grad = grad || parts[k].requires_grad();
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      const std::size_t dst = rows[k][i];
      if (dst >= total || written[dst]) throw Error(Errc::InvalidConfig, "bad scatter row");
      written[dst] = true;
      std::copy_n(v.row(i).begin(), cols, out.row(dst).begin());
    }
  }
  return tape.push(std::move(out), grad, [parts, rows](Tape& t, const Tensor& g) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!parts[k].requires_grad()) continue;
      Tensor gp(parts[k].value().shape());
      const std::size_t cols = g.cols();
      for (std::size_t i = 0; i < rows[k].size(); ++i)
        std::copy_n(g.row(rows[k][i]).begin(), cols, gp.row(i).begin());
      t.accumulate(parts[k], gp);
    }
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->push(Tensor::scalar(s), a.requires_grad(), [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor(a.value().shape(), g[0]));
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->push(Tensor::scalar(s / n), a.requires_grad(), [a, n](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor(a.value().shape(), g[0] / n));
  });
}

/// Column means: [rows x cols] -> [1 x cols].
inline Var mean_rows(Var a) {
  const Tensor& v = a.value();
  detail::require_matrix(v, "mean_rows");
  const double n = static_cast<double>(v.rows());
  Tensor out = Tensor::matrix(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(0, c) += v(r, c);
  for (double& x : out.values()) x /= n;
  return a.tape->push(std::move(out), a.requires_grad(), [a, n](Tape& t, const Tensor& g) {
    Tensor ga(a.value().shape());
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) = g(0, c) / n;
    t.accumulate(a, ga);
  });
}

/// Mean over rows of -log softmax(logits)[label].
inline Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  detail::require_matrix(z, "cross_entropy");
  if (labels.size() != z.rows()) throw Error(Errc::LengthMismatch, "label count != logit rows");
  const std::size_t k = z.cols();
  Tensor prob(z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
      throw Error(Errc::InvalidConfig, "class label out of range");
    double mx = z(r, 0);
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      prob(r, c) = std::exp(z(r, c) - mx);
      s += prob(r, c);
    }
    for (std::size_t c = 0; c < k; ++c) prob(r, c) /= s;
    loss += (mx + std::log(s)) - z(r, static_cast<std::size_t>(labels[r]));
  }
  const double n = static_cast<double>(z.rows());
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape->push(Tensor::scalar(loss / n), logits.requires_grad(),
                           [logits, prob = std::move(prob), lab = std::move(lab), n](
                               Tape& t, const Tensor& g) {
                             Tensor gz = prob;
                             for (std::size_t r = 0; r < gz.rows(); ++r)
                               gz(r, static_cast<std::size_t>(lab[r])) -= 1.0;
                             for (double& v : gz.values()) v *= g[0] / n;
                             t.accumulate(logits, gz);
                           });
}

}  // namespace pptr::ad
