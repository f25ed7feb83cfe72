// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

// Exact 3-D kd-tree. Distance ties resolve to the smaller point index so
// every query is deterministic.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3d> points);
  static KdTree from_coords(std::span<const Vec3i> coords);

  size_t size() const { return pts_.size(); }
  const Vec3d& point(size_t i) const { return pts_[i]; }

  // (index, squared distance) of the nearest point.
  std::pair<size_t, double> nearest(const Vec3d& q) const;
  // k nearest, ascending by (distance, index). Returns min(k, size()) entries.
  std::vector<std::pair<size_t, double>> knn(const Vec3d& q, size_t k) const;
  // Points with squared distance <= r2.
  size_t count_within(const Vec3d& q, double r2) const;

 private:
  struct Node {
    uint32_t lo, hi;        // range in order_
    int32_t left = -1, right = -1;
    int dim = 0;
    double split = 0;
  };
  int32_t build(uint32_t lo, uint32_t hi);

  std::vector<Vec3d> pts_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
};

inline Vec3d to_vec3d(const Vec3i& c) { return {double(c.x), double(c.y), double(c.z)}; }

inline double dist2(const Vec3d& a, const Vec3d& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace jpcc
