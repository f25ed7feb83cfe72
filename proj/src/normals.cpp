// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/normals.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "jpcc/kdtree.hpp"

namespace jpcc {

std::vector<Vec3d> estimate_normals(std::span<const Vec3i> coords, size_t k) {
  if (coords.size() < 3) throw DomainError("normal estimation needs at least 3 points");
  const KdTree tree = KdTree::from_coords(coords);
  std::vector<Vec3d> out(coords.size());
  for (size_t i = 0; i < coords.size(); ++i) {
    const Vec3d p = to_vec3d(coords[i]);
    const auto nn = tree.knn(p, std::max<size_t>(k, 3));
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& [j, d] : nn) mean += Eigen::Vector3d(tree.point(j).data());
    mean /= double(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& [j, d] : nn) {
      const Eigen::Vector3d v = Eigen::Vector3d(tree.point(j).data()) - mean;
      cov += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const auto& ev = es.eigenvalues();  // ascending
    if (ev(1) <= 1e-12 * std::max(ev(2), 1e-300)) {
      out[i] = {0, 0, 1};
      continue;
    }
    Eigen::Vector3d n = es.eigenvectors().col(0).normalized();
    const Eigen::Vector3d away = Eigen::Vector3d(p.data()) - mean;
    const double s = n.dot(away);
    if (std::abs(s) > 1e-9 * (1 + away.norm())) {
      if (s < 0) n = -n;
    } else {
      int big = 0;
      for (int a = 1; a < 3; ++a)
        if (std::abs(n(a)) > std::abs(n(big)) + 1e-12) big = a;
      if (n(big) < 0) n = -n;
    }
    out[i] = {n(0), n(1), n(2)};
  }
  return out;
}

}  // namespace jpcc
