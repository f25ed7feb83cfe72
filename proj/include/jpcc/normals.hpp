// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

// Unit normals from the k-nearest-neighbour covariance (the point itself
// included). Oriented away from the neighbourhood centroid; when that is
// ambiguous the largest component is made positive. Rank-deficient
// neighbourhoods get (0, 0, 1).
std::vector<Vec3d> estimate_normals(std::span<const Vec3i> coords, size_t k = 16);

}  // namespace jpcc
