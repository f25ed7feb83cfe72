// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jpcc/color.hpp"
#include "jpcc/geometry.hpp"
#include "jpcc/metrics.hpp"

namespace jpcc {

constexpr int kMaxColorIdx = 4;

// Geometry section, then the colour section when the geometry flags say so.
struct Container {
  GeometrySection geometry;
  std::optional<ColorSection> color;

  std::vector<uint8_t> serialize() const;
  static Container parse(std::span<const uint8_t> bytes);
};

struct CodecConfig {
  GeometryConfig geometry;
  bool color = true;  // ignored for colourless input
  int color_idx = 0;
  std::string image_codec = "builtin";
  ColorConfig color_config;

  void validate() const;
};

struct EncodeReport {
  size_t points = 0;
  size_t geometry_bytes = 0;
  size_t color_bytes = 0;
  size_t total_bytes = 0;
  RateReport rate;
  ColorStats color_stats;
  BlockEncodeStats block_stats;
  std::vector<std::string> warnings;
};

std::vector<uint8_t> encode_cloud(const PointCloud& pc, const CodecConfig& cfg, ModelStore& models,
                                  EncodeReport* report = nullptr);

// `image_codec` overrides the plugin named in the stream when non-empty.
// `color_config` must match the encoder's.
PointCloud decode_cloud(std::span<const uint8_t> bytes, ModelStore& models,
                        const ColorConfig& color_config = {}, const std::string& image_codec = "");

}  // namespace jpcc
