// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jpcc/byte_io.hpp"
#include "jpcc/image_codec.hpp"
#include "jpcc/point_cloud.hpp"

namespace jpcc {

// Exact copy for collocated targets, otherwise linear-kernel RBF over the
// 20 nearest reference points, rounded half up and clamped.
std::vector<Rgb> recolor(std::span<const Vec3i> reference, std::span<const Rgb> reference_colors,
                         std::span<const Vec3i> target, size_t neighbours = 20);
PointCloud recolor(const PointCloud& reference, std::span<const Vec3i> target);
// Colours for SR-generated points; same mechanism with the pre-SR points
// as reference.
PointCloud color_super_resolve(std::span<const Vec3i> decoded, const PointCloud& pre_sr);

// Axis directions in index order: +X, +Y, +Z, -X, -Y, -Z.
Vec3d axis_direction(int c);
std::vector<uint8_t> initial_segmentation(std::span<const Vec3d> normals);
std::vector<uint8_t> refine_segmentation(std::span<const Vec3i> coords,
                                         std::span<const Vec3d> normals,
                                         std::vector<uint8_t> clusters, int iterations, size_t k,
                                         double smoothing_weight);

enum class Layer : uint8_t { Near = 0, Far = 1, Unprojected = 2 };

struct Patch {
  int axis = 0;               // cluster index 0..5
  std::vector<uint32_t> points;
  Vec3i seed;                 // lexicographically smallest member
  int32_t u0 = 0, v0 = 0;     // bounding box on the projection plane
  int32_t width = 0, height = 0;
  // Per pixel (row-major over the box), -1 when empty.
  std::vector<int32_t> near_point, far_point;
  std::vector<int32_t> near_depth, far_depth;
  std::vector<uint32_t> unprojected;

  bool occupied(int32_t u, int32_t v) const { return near_point[size_t(v * width + u)] >= 0; }
};

// Depth and the two in-plane coordinates of c for a cluster.
int32_t patch_depth(const Vec3i& c, int axis);
std::pair<int32_t, int32_t> patch_uv(const Vec3i& c, int axis);

// 26-connected components per cluster, largest first, ties by seed.
std::vector<Patch> extract_patches(std::span<const Vec3i> coords, std::span<const uint8_t> clusters);
// Fills the per-pixel layers; thickness bounds far - near.
void project_patch(Patch& patch, std::span<const Vec3i> coords, int32_t surface_thickness);

struct Placement {
  int32_t x = 0, y = 0;
};
struct Packing {
  int32_t width = 0, height = 0;
  std::vector<Placement> placements;
};
// The sizes are (width, height) of each patch box in packing order.
Packing pack_patches(std::span<const std::pair<int32_t, int32_t>> sizes, int32_t width,
                     int32_t align = 1, int32_t initial_height = 0);

// Push-pull background fill followed by `smoothing_passes` 3x3 box passes
// over the background.
RgbImage pushpull_pad(const RgbImage& im, const std::vector<uint8_t>& occupancy,
                      int smoothing_passes = 2);

struct DiffFarLayer {
  RgbImage image;  // trimmed; empty when far == near everywhere
  int32_t x0 = 0, y0 = 0;
  size_t clamps = 0;
};
DiffFarLayer diff_far_layer(const RgbImage& near, const RgbImage& far,
                            const std::vector<uint8_t>& occupancy);
RgbImage undiff_far_layer(const RgbImage& near, const DiffFarLayer& diff);

struct ColorConfig {
  int32_t surface_thickness = 4;
  int refine_iterations = 10;
  size_t refine_k = 16;
  double smoothing_weight = 3.0;
  size_t normal_k = 16;
  int32_t pack_width = 1024;
  int32_t pack_align = 1;
  int pad_passes = 2;
};

// Everything regenerated identically at both ends from the geometry.
struct ProjectionSet {
  std::vector<Patch> patches;
  Packing packing;
  std::vector<uint8_t> occupancy;  // packed image, 1 = occupied
  // Per point: packed pixel index (y * width + x) and layer.
  std::vector<int64_t> pixel;
  std::vector<Layer> layer;

  size_t count(Layer l) const;
};
ProjectionSet build_projection(std::span<const Vec3i> coords, const ColorConfig& cfg = {});

struct ColorSection {
  uint8_t color_idx = 0;
  std::string plugin;
  uint16_t near_width = 0, near_height = 0;
  std::vector<uint8_t> near_bytes;
  uint16_t far_x = 0, far_y = 0, far_width = 0, far_height = 0;
  std::vector<uint8_t> far_bytes;

  std::vector<uint8_t> serialize() const;
  static ColorSection parse(ByteReader& r);
  friend bool operator==(const ColorSection&, const ColorSection&) = default;
};

struct ColorStats {
  size_t near = 0, far = 0, unprojected = 0;
  size_t far_clamps = 0;
  double unprojected_fraction() const {
    const size_t n = near + far + unprojected;
    return n ? double(unprojected) / double(n) : 0;
  }
};

// `geometry` is the projection-frame geometry (sorted, unique); its points
// sit at geometry * scale in the original cloud.
ColorSection encode_color(std::span<const Vec3i> geometry, int32_t scale, const PointCloud& original,
                          ImageCodec& codec, int color_idx, const ColorConfig& cfg = {},
                          ColorStats* stats = nullptr);
// Colours in the order of `geometry`.
std::vector<Rgb> decode_color(const ColorSection& section, std::span<const Vec3i> geometry,
                              ImageCodec& codec, const ColorConfig& cfg = {},
                              ColorStats* stats = nullptr);

}  // namespace jpcc
