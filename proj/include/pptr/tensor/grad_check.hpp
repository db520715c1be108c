#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "pptr/tensor/tape.hpp"

namespace pptr::ad {

/// Scalar objective over a parameter list, evaluated on a fresh tape.
using Objective = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compare tape gradients with central differences over every coordinate.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult grad_check(const Objective& f, const std::vector<Tensor>& params,
                                  double eps = 1e-5) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw Error(Errc::InvalidConfig, "eps must lie in [1e-7, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    Var out = f(tape, vars);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  auto evaluate = [&](const std::vector<Tensor>& ps) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& p : ps) vars.push_back(tape.constant(p));
    const double v = f(tape, vars).value()[0];
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "objective is not finite");
    return v;
  };

  GradCheckResult res;
  std::vector<Tensor> work = params;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + eps;
      const double up = evaluate(work);
      work[p][i] = orig - eps;
      const double down = evaluate(work);
      work[p][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > res.max_rel_error) res = {rel, p, i, a, numeric};
    }
  }
  return res;
}

/// Whether central differences at step eps can certify a gradient to
/// relative tolerance `tol` at this point. Uses evaluations of f only.
/// Per coordinate, with S(h) = f(x+h) - 2f(x) + f(x-h), a max switch at
/// distance a*eps shows up in n(eps) - n(eps/2) (large unless a is near 0)
/// or in S(eps) - 4 S(eps/2) (large near a = 0); smooth curvature cancels in
/// both. A coordinate is flagged as a kink when either exceeds tol/4 of the
/// slope, and as unresolved when four times the f64 rounding floor of the
/// central difference exceeds tol of it.
struct FdScreen {
  bool admissible = true;
  std::size_t coords = 0;
  std::size_t kinks = 0;
  std::size_t unresolved = 0;
};

inline FdScreen fd_screen(const Objective& f, const std::vector<Tensor>& params, double eps, double tol) {
  auto evaluate = [&](const std::vector<Tensor>& ps) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& p : ps) vars.push_back(tape.constant(p));
    const double v = f(tape, vars).value()[0];
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "objective is not finite");
    return v;
  };
  constexpr double ulp = std::numeric_limits<double>::epsilon();
  FdScreen s;
  std::vector<Tensor> work = params;
  const double f0 = evaluate(work);
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      double v[4];
      const double steps[4] = {eps, -eps, eps / 2, -eps / 2};
      for (int k = 0; k < 4; ++k) {
        work[p][i] = orig + steps[k];
        v[k] = evaluate(work);
      }
      work[p][i] = orig;
      const double n1 = (v[0] - v[1]) / (2.0 * eps);
      const double n2 = (v[2] - v[3]) / eps;
      const double curv = ((v[0] - 2.0 * f0 + v[1]) - 4.0 * (v[2] - 2.0 * f0 + v[3])) / eps;
      const double scale = std::max({std::abs(f0), std::abs(v[0]), std::abs(v[1]), std::abs(v[2]), std::abs(v[3])});
      const double noise = ulp * scale / eps;  // rounding floor of n1
      ++s.coords;
      if (v[0] == f0 && v[1] == f0 && v[2] == f0 && v[3] == f0) continue;  // exactly flat
      const double slope = std::max(std::abs(n1), std::abs(n2));
      if (std::abs(n1 - n2) > 0.25 * tol * slope + 4.0 * noise || std::abs(curv) > 0.25 * tol * slope + 24.0 * noise)
        ++s.kinks;
      else if (4.0 * noise > tol * std::max(std::abs(n1), 1e-8))
        ++s.unresolved;
    }
  }
  s.admissible = s.kinks == 0 && s.unresolved == 0;
  return s;
}

}  // namespace pptr::ad
