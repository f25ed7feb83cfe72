// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "jpcc/point_cloud.hpp"

namespace jpcc {

// Reads ASCII or binary little-endian PLY. Coordinates are rounded to the
// nearest integer; a "comment bit_depth N" header line overrides the
// inferred precision.
PointCloud load_ply(const std::string& path);
PointCloud parse_ply(const std::string& bytes);

// Writes points in canonical (lexicographic) order.
void save_ply(const PointCloud& pc, const std::string& path, bool binary);
std::string serialize_ply(const PointCloud& pc, bool binary);

}  // namespace jpcc
