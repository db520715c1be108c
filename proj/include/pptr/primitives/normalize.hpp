#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <span>

#include "pptr/primitives/assignment.hpp"

namespace pptr::primitives {

/// Keep the `m_target` largest primitives (ties: smaller id) and move the
/// rest to clutter; survivors are relabelled 1..m_target by decreasing size.
/// With fewer than `m_target` primitives the labels are left untouched.
inline PrimitiveAssignment normalize_to_m(const PrimitiveAssignment& a, std::size_t m_target) {
  if (m_target < 1) throw Error(Errc::InvalidConfig, "m_target must be >= 1");
  if (a.m_actual < m_target) {
    PrimitiveAssignment out = a;
    out.m_target = m_target;
    return out;
  }
  std::vector<std::size_t> count(a.m_actual + 1, 0);
  for (int id : a.labels) ++count[static_cast<std::size_t>(id)];

  std::vector<std::size_t> ids(a.m_actual);
  std::iota(ids.begin(), ids.end(), std::size_t{1});
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t x, std::size_t y) {
    return count[x] > count[y] || (count[x] == count[y] && x < y);
  });

  const std::size_t keep = std::min(m_target, a.m_actual);
  std::vector<int> remap(a.m_actual + 1, kClutter);
  PrimitiveAssignment out;
  out.m_target = m_target;
  out.m_actual = keep;
  for (std::size_t r = 0; r < keep; ++r) {
    remap[ids[r]] = static_cast<int>(r + 1);
    out.planes.push_back(a.planes[ids[r] - 1]);
  }
  out.labels.resize(a.labels.size());
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    out.labels[i] = remap[static_cast<std::size_t>(a.labels[i])];
  return out;
}

/// Every point of a real primitive takes the primitive's modal class
/// (ties: smallest class). Clutter points keep their own label.
inline std::vector<int> majority_vote_labels(const PrimitiveAssignment& a,
                                             std::span<const int> point_labels) {
  if (point_labels.size() != a.labels.size())
    throw Error(Errc::LengthMismatch, "point label count differs from assignment size");
  std::vector<std::map<int, std::size_t>> votes(a.m_actual + 1);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    if (a.labels[i] != kClutter) ++votes[static_cast<std::size_t>(a.labels[i])][point_labels[i]];
  }
  std::vector<int> winner(a.m_actual + 1, 0);
  for (std::size_t j = 1; j <= a.m_actual; ++j) {
    std::size_t best = 0;
    for (const auto& [cls, n] : votes[j]) {  // ascending class id, so '>' keeps the smallest on ties
      if (n > best) {
        best = n;
        winner[j] = cls;
      }
    }
  }
  std::vector<int> out(point_labels.begin(), point_labels.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.labels[i] != kClutter) out[i] = winner[static_cast<std::size_t>(a.labels[i])];
  }
  return out;
}

}  // namespace pptr::primitives
