#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pptr/common/random.hpp"
#include "pptr/tensor/grad_check.hpp"
#include "pptr/tensor/ops.hpp"

using namespace pptr;
using namespace pptr::ad;

namespace {

Tensor rand_t(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

std::size_t dim(Rng& rng) { return 1 + rng.index(8); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Random linear functional of an op's output, so every output coordinate
/// contributes a distinct weight to the checked gradient.
Var probe(Var out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(out.shape());
  for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(out, out.tape->constant(w)));
}

GroupSpec random_groups(Rng& rng, std::size_t tokens, std::size_t groups) {
  std::vector<std::size_t> ids(tokens);
  for (std::size_t i = 0; i < tokens; ++i) ids[i] = i < groups ? i : rng.index(groups);
  for (std::size_t i = tokens; i-- > 1;) std::swap(ids[i], ids[rng.index(i + 1)]);
  return GroupSpec(ids, groups);
}

constexpr double kTol = 1e-12;
constexpr double kGradTol = 1e-5;

}  // namespace

// ---- forward references -------------------------------------------------

TEST(TensorForward, MatmulAndLinear) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const Tensor a = rand_t(rng, {m, k}), b = rand_t(rng, {k, n}), w = rand_t(rng, {n, k}),
                 bias = rand_t(rng, {n});
    Tape tape;
    const Tensor mm = matmul(tape.constant(a), tape.constant(b)).value();
    const Tensor lin = linear(tape.constant(a), tape.constant(w), tape.constant(bias)).value();
    Tensor ref_mm = Tensor::matrix(m, n), ref_lin = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0, t = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          s += a(i, p) * b(p, j);
          t += a(i, p) * w(j, p);
        }
        ref_mm(i, j) = s;
        ref_lin(i, j) = t + bias[j];
      }
    EXPECT_LE(max_abs_diff(mm, ref_mm), kTol);
    EXPECT_LE(max_abs_diff(lin, ref_lin), kTol);
  }
}

TEST(TensorForward, ElementwiseAndShapeOps) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    const Tensor a = rand_t(rng, {r, c}), b = rand_t(rng, {r, c}), bias = rand_t(rng, {c});
    Tape tape;
    Var va = tape.constant(a), vb = tape.constant(b);
    const Tensor s = add(va, vb).value(), p = mul(va, vb).value(), sc = scale(va, -2.5).value();
    const Tensor ab = add_bias(va, tape.constant(bias)).value();
    const Tensor tr = transpose(va).value();
    const Tensor ge = gelu(va).value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_LE(std::abs(s(i, j) - (a(i, j) + b(i, j))), kTol);
        EXPECT_LE(std::abs(p(i, j) - a(i, j) * b(i, j)), kTol);
        EXPECT_LE(std::abs(sc(i, j) - (-2.5 * a(i, j))), kTol);
        EXPECT_LE(std::abs(ab(i, j) - (a(i, j) + bias[j])), kTol);
        EXPECT_EQ(tr(j, i), a(i, j));
        const double x = a(i, j);
        EXPECT_LE(std::abs(ge(i, j) - x * 0.5 * std::erfc(-x / std::numbers::sqrt2)), kTol);
      }
  }
}

TEST(TensorForward, ConcatAndSlice) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = dim(rng), c1 = dim(rng), c2 = dim(rng);
    const Tensor a = rand_t(rng, {r, c1}), b = rand_t(rng, {r, c2});
    Tape tape;
    const Tensor cat1 = concat({tape.constant(a), tape.constant(b)}, 1).value();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c1; ++j) EXPECT_EQ(cat1(i, j), a(i, j));
      for (std::size_t j = 0; j < c2; ++j) EXPECT_EQ(cat1(i, c1 + j), b(i, j));
    }
    const Tensor at = rand_t(rng, {c1, r}), bt = rand_t(rng, {c2, r});
    const Tensor cat0 = concat({tape.constant(at), tape.constant(bt)}, 0).value();
    for (std::size_t j = 0; j < r; ++j) {
      for (std::size_t i = 0; i < c1; ++i) EXPECT_EQ(cat0(i, j), at(i, j));
      for (std::size_t i = 0; i < c2; ++i) EXPECT_EQ(cat0(c1 + i, j), bt(i, j));
    }
    const std::size_t lo = rng.index(c1 + c2), hi = lo + 1 + rng.index(c1 + c2 - lo);
    const Tensor sl = slice(tape.constant(cat1), 1, lo, hi).value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = lo; j < hi; ++j) EXPECT_EQ(sl(i, j - lo), cat1(i, j));
  }
}

TEST(TensorForward, SoftmaxLayerNormReductions) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    const Tensor a = rand_t(rng, {r, c}, -3, 3), gain = rand_t(rng, {c}), bias = rand_t(rng, {c});
    Tape tape;
    Var va = tape.constant(a);
    const Tensor sm = row_softmax(va).value();
    const Tensor ln = layer_norm(va, tape.constant(gain), tape.constant(bias)).value();
    const Tensor mr = mean_rows(va).value();
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      double mx = -1e300, z = 0.0, mu = 0.0, var = 0.0;
      for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, a(i, j));
      for (std::size_t j = 0; j < c; ++j) z += std::exp(a(i, j) - mx);
      for (std::size_t j = 0; j < c; ++j) mu += a(i, j) / static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) var += (a(i, j) - mu) * (a(i, j) - mu) / static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_LE(std::abs(sm(i, j) - std::exp(a(i, j) - mx) / z), kTol);
        EXPECT_LE(std::abs(ln(i, j) - (gain[j] * (a(i, j) - mu) / std::sqrt(var + 1e-5) + bias[j])), kTol);
        total += a(i, j);
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < r; ++i) s += a(i, j);
      EXPECT_LE(std::abs(mr(0, j) - s / static_cast<double>(r)), kTol);
    }
    EXPECT_LE(std::abs(sum(va).value()[0] - total), kTol);
    EXPECT_LE(std::abs(mean(va).value()[0] - total / static_cast<double>(r * c)), kTol);
  }
}

TEST(TensorForward, GroupOps) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t tokens = dim(rng), c = dim(rng);
    const std::size_t groups = 1 + rng.index(tokens);
    const GroupSpec g = random_groups(rng, tokens, groups);
    const Tensor a = rand_t(rng, {tokens, c});
    Tape tape;
    const Tensor pooled = group_max_pool(tape.constant(a), g).value();
    for (std::size_t k = 0; k < groups; ++k)
      for (std::size_t j = 0; j < c; ++j) {
        double m = -1e300;
        for (std::size_t i = 0; i < tokens; ++i)
          if (g.group_of[i] == k) m = std::max(m, a(i, j));
        EXPECT_EQ(pooled(k, j), m);
      }
    const Tensor bc = group_broadcast(tape.constant(pooled), g).value();
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(bc(i, j), pooled(g.group_of[i], j));
  }
}

TEST(TensorForward, ScatterRows) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor({1, 2}, {5, 6}));
  const Tensor out = scatter_rows({a, b}, {{3, 0}, {1}}, 4).value();
  EXPECT_EQ(out, Tensor({4, 2}, {3, 4, 5, 6, 0, 0, 1, 2}));
  EXPECT_THROW(scatter_rows({a, b}, {{1, 0}, {1}}, 4), Error);
}

TEST(TensorForward, CrossEntropy) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = dim(rng), c = 1 + dim(rng);
    const Tensor z = rand_t(rng, {r, c}, -4, 4);
    std::vector<int> y(r);
    for (auto& v : y) v = static_cast<int>(rng.index(c));
    Tape tape;
    double ref = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += std::exp(z(i, j));
      ref += std::log(s) - z(i, static_cast<std::size_t>(y[i]));
    }
    EXPECT_LE(std::abs(cross_entropy(tape.constant(z), y).value()[0] - ref / static_cast<double>(r)), kTol);
  }
}

// ---- stated examples ----------------------------------------------------

TEST(RowSoftmax, Examples) {
  Tape tape;
  const Tensor eq = row_softmax(tape.constant(Tensor({1, 5}, 3.7))).value();
  for (double v : eq.values()) EXPECT_LE(std::abs(v - 0.2), kTol);
  const Tensor two = row_softmax(tape.constant(Tensor({1, 2}, {0.0, std::log(2.0)}))).value();
  EXPECT_LE(std::abs(two[0] - 1.0 / 3.0), kTol);
  EXPECT_LE(std::abs(two[1] - 2.0 / 3.0), kTol);
  const Tensor big = row_softmax(tape.constant(Tensor({1, 2}, {1000.0, 0.0}))).value();
  EXPECT_TRUE(big.all_finite());
}

TEST(RowSoftmax, RowsAreDistributions) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    const Tensor p = row_softmax(tape.constant(rand_t(rng, {dim(rng), dim(rng)}, -20, 20))).value();
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) {
        EXPECT_GE(p(i, j), 0.0);
        s += p(i, j);
      }
      EXPECT_LE(std::abs(s - 1.0), 1e-12);
    }
  }
}

TEST(RowSoftmax, GradientVsFiniteDifferences) {
  Rng rng(8);
  const Tensor x = rand_t(rng, {4, 4}, -2, 2);
  const auto r = grad_check([](Tape&, const std::vector<Var>& p) { return probe(row_softmax(p[0]), 9); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GroupMaxPool, Examples) {
  Tape tape;
  Var x = tape.parameter(Tensor({3, 1}, {1, 5, 3}));
  Var out = group_max_pool(x, GroupSpec({0, 0, 0}, 1));
  EXPECT_EQ(out.value()[0], 5.0);
  tape.backward(sum(out));
  EXPECT_EQ(tape.grad(x), Tensor({3, 1}, {0, 1, 0}));

  Rng rng(10);
  const Tensor a = rand_t(rng, {5, 3});
  Tape t2;
  EXPECT_EQ(group_max_pool(t2.constant(a), GroupSpec({0, 1, 2, 3, 4}, 5)).value(), a);
}

TEST(GroupMaxPool, TiesRouteToLowestIndex) {
  Tape tape;
  Var x = tape.parameter(Tensor({4, 1}, {2, 7, 7, 1}));
  tape.backward(sum(group_max_pool(x, GroupSpec({0, 0, 0, 0}, 1))));
  EXPECT_EQ(tape.grad(x), Tensor({4, 1}, {0, 1, 0, 0}));
}

TEST(GroupMaxPool, PermutationInvariance) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(7), c = dim(rng);
    const Tensor a = rand_t(rng, {n, c});
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.index(i + 1)]);
    Tape tape;
    const Tensor p1 = group_max_pool(tape.constant(a), GroupSpec(std::vector<std::size_t>(n, 0), 1)).value();
    const Tensor p2 = group_max_pool(gather_rows(tape.constant(a), perm), GroupSpec(std::vector<std::size_t>(n, 0), 1)).value();
    EXPECT_EQ(p1, p2);
  }
}

TEST(GroupMaxPool, EmptyGroupThrows) {
  Tape tape;
  try {
    group_max_pool(tape.constant(Tensor({2, 1}, {1, 2})), GroupSpec({0, 0}, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyGroup);
  }
}

TEST(LayerNorm, NormalizedRows) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = dim(rng), c = 2 + rng.index(7);
    const Tensor a = rand_t(rng, {r, c}, -5, 5);
    Tape tape;
    const Tensor ln =
        layer_norm(tape.constant(a), tape.constant(Tensor({c}, 1.0)), tape.constant(Tensor({c}, 0.0)), 0.0).value();
    for (std::size_t i = 0; i < r; ++i) {
      double mu = 0.0, var = 0.0;
      for (std::size_t j = 0; j < c; ++j) mu += ln(i, j);
      mu /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) var += (ln(i, j) - mu) * (ln(i, j) - mu);
      var /= static_cast<double>(c);
      EXPECT_LT(std::abs(mu), 1e-10);
      EXPECT_LT(std::abs(var - 1.0), 1e-6);
    }
  }
}

// ---- gradients ----------------------------------------------------------

TEST(GradCheck, SumOfSquares) {
  Rng rng(13);
  const auto r = grad_check([](Tape&, const std::vector<Var>& p) { return sum(mul(p[0], p[0])); },
                            {rand_t(rng, {5, 3})});
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, EpsRange) {
  const Objective f = [](Tape&, const std::vector<Var>& p) { return sum(p[0]); };
  EXPECT_THROW(grad_check(f, {Tensor({1}, 1.0)}, 1e-8), Error);
  EXPECT_THROW(grad_check(f, {Tensor({1}, 1.0)}, 1e-2), Error);
}

TEST(FdScreen, SmoothIsAdmissible) {
  Rng rng(15);
  const Objective f = [](Tape&, const std::vector<Var>& p) { return sum(gelu(mul(p[0], p[0]))); };
  const FdScreen s = fd_screen(f, {rand_t(rng, {4, 3})}, 1e-5, 1e-5);
  EXPECT_TRUE(s.admissible);
  EXPECT_EQ(s.coords, 12u);
}

TEST(FdScreen, KinkInsideStepIsDetected) {
  // max(x, k) + 0.3 x with the switch at k - x = a * eps
  const double eps = 1e-5, k = 0.25;
  for (double a : {0.02, 0.1, 0.33, 0.5, 0.9, -0.15, -0.7}) {
    const Objective f = [k](Tape& tape, const std::vector<Var>& p) {
      const Var m = group_max_pool(concat({p[0], tape.constant(Tensor::matrix(1, 1, k))}, 0), GroupSpec({0, 0}, 1));
      return sum(add(m, scale(p[0], 0.3)));
    };
    const FdScreen s = fd_screen(f, {Tensor::matrix(1, 1, k - a * eps)}, eps, 1e-5);
    EXPECT_FALSE(s.admissible) << a;
    EXPECT_EQ(s.kinks, 1u) << a;
  }
}

TEST(FdScreen, KinkOutsideStepIsIgnored) {
  const double eps = 1e-5;
  const Objective f = [](Tape& tape, const std::vector<Var>& p) {
    return sum(group_max_pool(concat({p[0], tape.constant(Tensor::matrix(1, 1, 0.0))}, 0), GroupSpec({0, 0}, 1)));
  };
  EXPECT_TRUE(fd_screen(f, {Tensor::matrix(1, 1, 3 * eps)}, eps, 1e-5).admissible);
}

TEST(FdScreen, TinySlopeIsUnresolved) {
  const Objective f = [](Tape& tape, const std::vector<Var>& p) {
    return sum(add(tape.constant(Tensor::matrix(1, 1, 1e3)), scale(p[0], 1e-9)));
  };
  const FdScreen s = fd_screen(f, {Tensor::matrix(1, 1, 0.4)}, 1e-5, 1e-5);
  EXPECT_FALSE(s.admissible);
  EXPECT_EQ(s.unresolved + s.kinks, 1u);
}

TEST(FdScreen, ExactlyFlatIsAdmissible) {
  const Objective f = [](Tape& tape, const std::vector<Var>& p) {
    return sum(add(tape.constant(Tensor::matrix(1, 1, 2.0)), scale(p[1], 0.0)));
  };
  const FdScreen s = fd_screen(f, {Tensor::matrix(2, 2, 1.0), Tensor::matrix(1, 1, 1.0)}, 1e-5, 1e-5);
  EXPECT_TRUE(s.admissible);
  EXPECT_EQ(s.coords, 5u);
}

TEST(GradCheck, EveryOp) {
  Rng rng(14);
  struct Case {
    const char* name;
    std::vector<Tensor> params;
    Objective f;
  };
  const GroupSpec groups({0, 1, 0, 2, 1, 2, 0}, 3);
  const std::vector<int> labels = {0, 2, 1, 1, 3, 0, 2};
  std::vector<Case> cases = {
      {"matmul", {rand_t(rng, {3, 4}), rand_t(rng, {4, 5})},
       [](Tape&, const std::vector<Var>& p) { return probe(matmul(p[0], p[1]), 1); }},
      {"linear", {rand_t(rng, {3, 4}), rand_t(rng, {5, 4}), rand_t(rng, {5})},
       [](Tape&, const std::vector<Var>& p) { return probe(linear(p[0], p[1], p[2]), 2); }},
      {"add", {rand_t(rng, {3, 4}), rand_t(rng, {3, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(add(p[0], p[1]), 3); }},
      {"mul", {rand_t(rng, {3, 4}), rand_t(rng, {3, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(mul(p[0], p[1]), 4); }},
      {"scale", {rand_t(rng, {3, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(scale(p[0], 0.7), 5); }},
      {"add_bias", {rand_t(rng, {3, 4}), rand_t(rng, {4})},
       [](Tape&, const std::vector<Var>& p) { return probe(add_bias(p[0], p[1]), 6); }},
      {"transpose", {rand_t(rng, {3, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(transpose(p[0]), 7); }},
      {"concat0", {rand_t(rng, {2, 3}), rand_t(rng, {4, 3})},
       [](Tape&, const std::vector<Var>& p) { return probe(concat({p[0], p[1]}, 0), 8); }},
      {"concat1", {rand_t(rng, {3, 2}), rand_t(rng, {3, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(concat({p[0], p[1], p[0]}, 1), 9); }},
      {"slice", {rand_t(rng, {5, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(add(slice(p[0], 0, 1, 3), slice(p[0], 0, 2, 4)), 10); }},
      {"gelu", {rand_t(rng, {3, 4}, -3, 3)},
       [](Tape&, const std::vector<Var>& p) { return probe(gelu(p[0]), 11); }},
      {"row_softmax", {rand_t(rng, {3, 5}, -2, 2)},
       [](Tape&, const std::vector<Var>& p) { return probe(row_softmax(p[0]), 12); }},
      {"layer_norm", {rand_t(rng, {3, 5}, -2, 2), rand_t(rng, {5}), rand_t(rng, {5})},
       [](Tape&, const std::vector<Var>& p) { return probe(layer_norm(p[0], p[1], p[2]), 13); }},
      {"group_max_pool", {rand_t(rng, {7, 3})},
       [groups](Tape&, const std::vector<Var>& p) { return probe(group_max_pool(p[0], groups), 14); }},
      {"group_broadcast", {rand_t(rng, {3, 4})},
       [groups](Tape&, const std::vector<Var>& p) { return probe(group_broadcast(p[0], groups), 15); }},
      {"gather_rows", {rand_t(rng, {4, 3})},
       [](Tape&, const std::vector<Var>& p) { return probe(gather_rows(p[0], {3, 0, 0, 2}), 16); }},
      {"scatter_rows", {rand_t(rng, {2, 3}), rand_t(rng, {2, 3})},
       [](Tape&, const std::vector<Var>& p) { return probe(scatter_rows({p[0], p[1]}, {{4, 1}, {0, 2}}, 5), 17); }},
      {"mean", {rand_t(rng, {3, 4})}, [](Tape&, const std::vector<Var>& p) { return mean(mul(p[0], p[0])); }},
      {"mean_rows", {rand_t(rng, {3, 4})},
       [](Tape&, const std::vector<Var>& p) { return probe(mean_rows(p[0]), 18); }},
      {"cross_entropy", {rand_t(rng, {7, 4}, -2, 2)},
       [labels](Tape&, const std::vector<Var>& p) { return cross_entropy(p[0], labels); }},
  };
  for (const auto& c : cases) {
    const auto r = grad_check(c.f, c.params);
    EXPECT_LT(r.max_rel_error, kGradTol) << c.name << " param " << r.worst_param << " index " << r.worst_index
                                         << " analytic " << r.analytic << " numeric " << r.numeric;
  }
}

TEST(GradCheck, ChainedComposite) {
  Rng rng(15);
  const Objective f = [](Tape&, const std::vector<Var>& p) {
    Var h = gelu(linear(p[0], p[1], p[2]));
    Var a = row_softmax(matmul(h, transpose(h)));
    return probe(layer_norm(matmul(a, h), p[3], p[4]), 21);
  };
  const auto r = grad_check(f, {rand_t(rng, {5, 3}), rand_t(rng, {4, 3}), rand_t(rng, {4}), rand_t(rng, {4}),
                                rand_t(rng, {4})});
  EXPECT_LT(r.max_rel_error, kGradTol);
}

// ---- tape behaviour -----------------------------------------------------

TEST(Tape, NonFiniteTrips) {
  Tape tape;
  Var x = tape.constant(Tensor({2}, {1.0, 2.0}));
  try {
    scale(x, std::numeric_limits<double>::infinity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteInput);
  }
  EXPECT_THROW(tape.constant(Tensor({1}, std::nan(""))), Error);
}

TEST(Tape, ZeroDimensionRejected) { EXPECT_THROW(Tensor({2, 0}), Error); }

TEST(Tape, GradAccumulatesOverReuse) {
  Tape tape;
  Var x = tape.parameter(Tensor({1}, 3.0));
  tape.backward(sum(mul(x, add(x, x))));  // 2x^2
  EXPECT_EQ(tape.grad(x)[0], 12.0);
  tape.backward(sum(x));  // a second backward starts from zero
  EXPECT_EQ(tape.grad(x)[0], 1.0);
}

TEST(Tape, InferenceTapeRecordsNoGradients) {
  Tape tape(false);
  Var x = tape.parameter(Tensor({1}, 3.0));
  EXPECT_FALSE(x.requires_grad());
  EXPECT_THROW(tape.backward(sum(x)), Error);
}

TEST(Tape, BitDeterministic) {
  Rng rng(16);
  const Tensor a = rand_t(rng, {6, 5}), w = rand_t(rng, {7, 5}), b = rand_t(rng, {7});
  auto run = [&] {
    Tape tape;
    Var pa = tape.parameter(a);
    Var out = sum(row_softmax(gelu(linear(pa, tape.constant(w), tape.constant(b)))));
    tape.backward(out);
    return std::make_pair(out.value(), tape.grad(pa));
  };
  EXPECT_EQ(run(), run());
}
