// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/point_cloud.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace jpcc {

void sort_unique(std::vector<Vec3i>& coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
}

void PointCloud::validate() const {
  if (colors && colors->size() != coords.size())
    throw DomainError("color count does not match point count");
  if (normals && normals->size() != coords.size())
    throw DomainError("normal count does not match point count");
  const int64_t limit = int64_t{1} << bit_depth;
  for (const auto& c : coords) {
    for (int a = 0; a < 3; ++a) {
      if (c[a] < 0) throw DomainError("negative coordinate");
      if (c[a] >= limit)
        throw DomainError("coordinate exceeds bit depth " + std::to_string(bit_depth));
    }
  }
}

void PointCloud::canonicalize() {
  std::vector<size_t> order(coords.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return coords[a] < coords[b]; });
  std::vector<Vec3i> c;
  std::vector<Rgb> col;
  std::vector<Vec3d> nrm;
  c.reserve(coords.size());
  for (size_t i : order) {
    if (!c.empty() && c.back() == coords[i]) continue;
    c.push_back(coords[i]);
    if (colors) col.push_back((*colors)[i]);
    if (normals) nrm.push_back((*normals)[i]);
  }
  coords = std::move(c);
  if (colors) colors = std::move(col);
  if (normals) normals = std::move(nrm);
}

int infer_bit_depth(std::span<const Vec3i> coords) {
  int32_t max_c = 0;
  for (const auto& c : coords) max_c = std::max({max_c, c.x, c.y, c.z});
  int d = 0;
  while (d < 31 && (int64_t{1} << d) <= max_c) ++d;
  // A single point at the origin still needs one bit of precision.
  return coords.empty() ? 0 : std::max(d, 1);
}

std::vector<Block> partition_blocks(const PointCloud& pc, int32_t block_size) {
  if (block_size < 1) throw ConfigError("block size must be >= 1");
  std::map<Vec3i, Block> by_origin;
  for (size_t i = 0; i < pc.coords.size(); ++i) {
    const Vec3i origin = floor_to_grid(pc.coords[i], block_size);
    auto [it, inserted] = by_origin.try_emplace(origin);
    Block& b = it->second;
    if (inserted) {
      b.origin = origin;
      b.size = block_size;
    }
    b.local_coords.push_back(pc.coords[i] - origin);
    if (pc.colors) b.colors.push_back((*pc.colors)[i]);
  }
  std::vector<Block> out;
  out.reserve(by_origin.size());
  for (auto& [origin, b] : by_origin) {
    // Sort local coords and keep colors aligned.
    std::vector<size_t> order(b.local_coords.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
      return b.local_coords[x] < b.local_coords[y];
    });
    Block sorted;
    sorted.origin = b.origin;
    sorted.size = b.size;
    for (size_t i : order) {
      if (!sorted.local_coords.empty() && sorted.local_coords.back() == b.local_coords[i])
        continue;
      sorted.local_coords.push_back(b.local_coords[i]);
      if (!b.colors.empty()) sorted.colors.push_back(b.colors[i]);
    }
    out.push_back(std::move(sorted));
  }
  return out;
}

PointCloud merge_blocks(std::span<const Block> blocks) {
  PointCloud pc;
  bool colored = !blocks.empty();
  for (const auto& b : blocks) colored = colored && b.colors.size() == b.local_coords.size();
  if (colored) pc.colors.emplace();
  for (const auto& b : blocks) {
    for (size_t i = 0; i < b.local_coords.size(); ++i) {
      pc.coords.push_back(b.origin + b.local_coords[i]);
      if (colored) pc.colors->push_back(b.colors[i]);
    }
  }
  pc.canonicalize();
  pc.bit_depth = infer_bit_depth(pc.coords);
  return pc;
}

std::vector<Vec3i> downsample(std::span<const Vec3i> coords, int32_t factor) {
  if (factor < 1) throw ConfigError("sampling factor must be >= 1");
  std::vector<Vec3i> out;
  out.reserve(coords.size());
  // round_half_up(c / f) == floor((2c + f) / (2f)) for integers.
  for (const auto& c : coords) {
    Vec3i d;
    for (int a = 0; a < 3; ++a) d[a] = floor_div(2 * c[a] + factor, 2 * factor);
    out.push_back(d);
  }
  sort_unique(out);
  return out;
}

std::vector<Vec3i> upsample(std::span<const Vec3i> coords, int32_t factor) {
  if (factor < 1) throw ConfigError("sampling factor must be >= 1");
  std::vector<Vec3i> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(c * factor);
  return out;
}

}  // namespace jpcc
