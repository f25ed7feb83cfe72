// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

// Voxelized point cloud. Coordinates are non-negative and below 2^bit_depth.
struct PointCloud {
  std::vector<Vec3i> coords;
  std::optional<std::vector<Rgb>> colors;
  std::optional<std::vector<Vec3d>> normals;
  int bit_depth = 0;

  size_t size() const { return coords.size(); }
  bool empty() const { return coords.empty(); }
  bool has_colors() const { return colors.has_value(); }

  // Throws DomainError when an invariant does not hold.
  void validate() const;
  // Lexicographic order, duplicates removed (first attribute kept).
  void canonicalize();
};

// Smallest d with max coordinate < 2^d (0 for an empty cloud or all-zero coords).
int infer_bit_depth(std::span<const Vec3i> coords);

struct Block {
  Vec3i origin;
  std::vector<Vec3i> local_coords;
  std::vector<Rgb> colors;  // empty when the source cloud has no colors
  int32_t size = 0;         // BS
};

// Blocks are returned in lexicographic origin order; local coordinates are sorted.
std::vector<Block> partition_blocks(const PointCloud& pc, int32_t block_size);
PointCloud merge_blocks(std::span<const Block> blocks);

// Round-half-up division per axis, deduplicated, sorted.
std::vector<Vec3i> downsample(std::span<const Vec3i> coords, int32_t factor);
std::vector<Vec3i> upsample(std::span<const Vec3i> coords, int32_t factor);

}  // namespace jpcc
