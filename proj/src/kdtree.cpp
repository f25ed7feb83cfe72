// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace jpcc {
namespace {

constexpr uint32_t kLeafSize = 8;

// Ordering used by every query: distance first, then index.
struct Cand {
  double d2;
  size_t idx;
  bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && idx < o.idx); }
};

}  // namespace

KdTree::KdTree(std::vector<Vec3d> points) : pts_(std::move(points)) {
  order_.resize(pts_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(pts_.size() / kLeafSize * 2 + 2);
  if (!pts_.empty()) build(0, uint32_t(pts_.size()));
}

KdTree KdTree::from_coords(std::span<const Vec3i> coords) {
  std::vector<Vec3d> p;
  p.reserve(coords.size());
  for (const auto& c : coords) p.push_back(to_vec3d(c));
  return KdTree(std::move(p));
}

int32_t KdTree::build(uint32_t lo, uint32_t hi) {
  const int32_t id = int32_t(nodes_.size());
  nodes_.push_back(Node{lo, hi});
  if (hi - lo <= kLeafSize) return id;
  Vec3d mn{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
           std::numeric_limits<double>::max()};
  Vec3d mx{-mn[0], -mn[1], -mn[2]};
  for (uint32_t i = lo; i < hi; ++i)
    for (int a = 0; a < 3; ++a) {
      mn[size_t(a)] = std::min(mn[size_t(a)], pts_[order_[i]][size_t(a)]);
      mx[size_t(a)] = std::max(mx[size_t(a)], pts_[order_[i]][size_t(a)]);
    }
  int dim = 0;
  for (int a = 1; a < 3; ++a)
    if (mx[size_t(a)] - mn[size_t(a)] > mx[size_t(dim)] - mn[size_t(dim)]) dim = a;
  if (mx[size_t(dim)] == mn[size_t(dim)]) return id;  // all points identical
  const uint32_t mid = lo + (hi - lo) / 2;
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&](uint32_t a, uint32_t b) {
                     const double pa = pts_[a][size_t(dim)], pb = pts_[b][size_t(dim)];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = pts_[order_[mid]][size_t(dim)];
  const int32_t l = build(lo, mid);
  const int32_t r = build(mid, hi);
  nodes_[size_t(id)].left = l;
  nodes_[size_t(id)].right = r;
  nodes_[size_t(id)].dim = dim;
  nodes_[size_t(id)].split = split;
  return id;
}

std::pair<size_t, double> KdTree::nearest(const Vec3d& q) const {
  auto r = knn(q, 1);
  if (r.empty()) throw DomainError("nearest neighbour query on an empty set");
  return r[0];
}

std::vector<std::pair<size_t, double>> KdTree::knn(const Vec3d& q, size_t k) const {
  std::vector<std::pair<size_t, double>> out;
  if (pts_.empty() || k == 0) return out;
  k = std::min(k, pts_.size());
  std::priority_queue<Cand> heap;  // worst candidate on top
  auto visit = [&](auto&& self, int32_t id) -> void {
    const Node& n = nodes_[size_t(id)];
    if (n.left < 0) {
      for (uint32_t i = n.lo; i < n.hi; ++i) {
        Cand c{dist2(q, pts_[order_[i]]), order_[i]};
        if (heap.size() < k) heap.push(c);
        else if (c < heap.top()) {
          heap.pop();
          heap.push(c);
        }
      }
      return;
    }
    const double diff = q[size_t(n.dim)] - n.split;
    const int32_t first = diff < 0 ? n.left : n.right;
    const int32_t second = diff < 0 ? n.right : n.left;
    self(self, first);
    // "<=" keeps equal-distance points with smaller indices reachable.
    if (heap.size() < k || diff * diff <= heap.top().d2) self(self, second);
  };
  visit(visit, 0);
  out.resize(heap.size());
  for (size_t i = heap.size(); i-- > 0;) {
    out[i] = {heap.top().idx, heap.top().d2};
    heap.pop();
  }
  return out;
}

size_t KdTree::count_within(const Vec3d& q, double r2) const {
  if (pts_.empty()) return 0;
  size_t count = 0;
  auto visit = [&](auto&& self, int32_t id) -> void {
    const Node& n = nodes_[size_t(id)];
    if (n.left < 0) {
      for (uint32_t i = n.lo; i < n.hi; ++i)
        if (dist2(q, pts_[order_[i]]) <= r2) ++count;
      return;
    }
    const double diff = q[size_t(n.dim)] - n.split;
    const int32_t first = diff < 0 ? n.left : n.right;
    const int32_t second = diff < 0 ? n.right : n.left;
    self(self, first);
    if (diff * diff <= r2) self(self, second);
  };
  visit(visit, 0);
  return count;
}

}  // namespace jpcc
