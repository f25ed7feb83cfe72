// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

constexpr int kMaxOctreeDepth = 21;

// Smallest depth d with every coordinate < 2^d (0 for the empty set or {0}).
int octree_depth_for(std::span<const Vec3i> coords);

// Breadth-first occupancy bytes. Within a node, child index is
// 4*bx + 2*by + bz of the level's coordinate bits; bit i set iff child i exists.
std::vector<uint8_t> octree_occupancy(std::span<const Vec3i> coords, int depth);

// Stream: depth u8, point count u32, then the adaptively rANS-coded occupancy
// bytes (absent for an empty set).
std::vector<uint8_t> octree_encode(std::span<const Vec3i> coords, int depth);
// Returns coordinates sorted lexicographically.
std::vector<Vec3i> octree_decode(std::span<const uint8_t> bytes);

// Adaptive frequency model over the 255 non-zero occupancy bytes.
class AdaptiveByteModel {
 public:
  AdaptiveByteModel();
  // Quantized interval of sym (1..255) in a 2^16 total.
  void interval(uint8_t sym, uint32_t& start, uint32_t& freq) const;
  uint8_t lookup(uint32_t v) const;
  void update(uint8_t sym);

  static constexpr int kPrecision = 16;
  static constexpr uint32_t kIncrement = 32;
  static constexpr uint32_t kMaxTotal = 1u << 14;

 private:
  uint32_t prefix(int j) const;  // sum of counts of indices < j
  uint32_t cum_q(int j) const;
  void add(int j, int32_t delta);
  void rebuild();

  std::vector<uint32_t> count_;
  std::vector<uint32_t> tree_;  // Fenwick tree, 1-based
  uint32_t total_ = 0;
};

}  // namespace jpcc
