#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pptr/geometry/neighbor_index.hpp"
#include "pptr/geometry/types.hpp"

namespace pptr::geometry {

/// Total-least-squares plane: normal is the eigenvector of the smallest
/// eigenvalue of the centered 3x3 covariance.
///
/// Throws DegenerateGeometry when fewer than 3 points are given or when the
/// two largest eigenvalues are not separated from zero (collinear or
/// coincident input, relative tolerance 1e-12).
inline PlaneParams fit_plane_lsq(std::span<const Vec3> points) {
  const std::size_t m = points.size();
  if (m < 3) throw Error(Errc::DegenerateGeometry, "plane fit needs at least 3 points");

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(m);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - centroid;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(m);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Vec3 evals = solver.eigenvalues();  // ascending
  if (!(evals[2] > 0.0) || evals[1] <= 1e-12 * evals[2])
    throw Error(Errc::DegenerateGeometry, "points are collinear or coincident");

  PlaneParams plane;
  plane.normal = canonical_sign(solver.eigenvectors().col(0).normalized());
  plane.offset = -plane.normal.dot(centroid);
  double ss = 0.0;
  for (const auto& p : points) {
    const double r = plane.normal.dot(p - centroid);
    ss += r * r;
  }
  plane.rms_residual = std::sqrt(ss / static_cast<double>(m));
  return plane;
}

/// Per-point result of normal estimation.
struct NormalEstimate {
  PointFrame frame;                     // copy of the input with normals filled
  std::vector<double> residuals;        // rms residual of each local fit
  std::vector<std::size_t> degenerate;  // points whose fit fell back to +z
};

/// Normal of each point from a plane fit over its k nearest neighbours
/// (the point itself included). Degenerate neighbourhoods get +z and are
/// listed in `degenerate`.
inline NormalEstimate estimate_normals(const PointFrame& frame, std::size_t k) {
  if (k < 3 || frame.size() < k)
    throw Error(Errc::InvalidConfig, "normal estimation needs N >= k >= 3");
  const NeighborIndex index = build_neighbor_index(frame);

  NormalEstimate out;
  out.frame = frame;
  std::vector<Vec3> normals(frame.size());
  out.residuals.assign(frame.size(), 0.0);
  std::vector<Vec3> local;
  local.reserve(k);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    local.clear();
    for (std::size_t j : index.k_nearest(frame.positions[i], k)) local.push_back(frame.positions[j]);
    try {
      const PlaneParams plane = fit_plane_lsq(local);
      normals[i] = plane.normal;
      out.residuals[i] = plane.rms_residual;
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateGeometry) throw;
      normals[i] = Vec3::UnitZ();
      out.residuals[i] = std::numeric_limits<double>::infinity();
      out.degenerate.push_back(i);
    }
  }
  out.frame.normals = std::move(normals);
  return out;
}

}  // namespace pptr::geometry
