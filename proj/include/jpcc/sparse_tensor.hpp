// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KernelMap;

// Sorted, unique coordinate list at a fixed tensor stride, with a hash index.
// Immutable once built, shared between tensors that live on the same grid.
class CoordSet {
 public:
  CoordSet(std::vector<Vec3i> coords, int32_t stride);

  const std::vector<Vec3i>& coords() const { return coords_; }
  int32_t stride() const { return stride_; }
  size_t size() const { return coords_.size(); }
  const Vec3i& operator[](size_t i) const { return coords_[i]; }

  // Index of c, or -1.
  int32_t find(const Vec3i& c) const {
    auto it = index_.find(c);
    return it == index_.end() ? -1 : it->second;
  }
  bool contains(const Vec3i& c) const { return index_.count(c) != 0; }

  // Same-grid neighbourhood map for the given kernel, memoized per kernel.
  std::shared_ptr<const KernelMap> self_map(Vec3i kernel) const;

 private:
  std::vector<Vec3i> coords_;
  int32_t stride_;
  std::unordered_map<Vec3i, int32_t, Vec3iHash> index_;
  mutable std::mutex cache_mutex_;
  mutable std::map<Vec3i, std::shared_ptr<const KernelMap>> self_cache_;
};

using CoordSetPtr = std::shared_ptr<const CoordSet>;

CoordSetPtr make_coords(std::vector<Vec3i> coords, int32_t stride);

// For every kernel offset, the (input row, output row) pairs it connects.
struct KernelMap {
  std::vector<Vec3i> offsets;
  std::vector<std::vector<int32_t>> in_rows;
  std::vector<std::vector<int32_t>> out_rows;

  size_t volume() const { return offsets.size(); }
  size_t pair_count() const;
};

// Odd kernels are centred ({-(m-1)/2..(m-1)/2}); even kernels start at 0.
std::vector<Vec3i> kernel_offsets(Vec3i kernel);
int32_t kernel_volume(Vec3i kernel);

// Output grid of a stride-s down-sampling: unique floor(c / (stride*s)) * (stride*s).
CoordSetPtr downsample_grid(const CoordSet& in, int32_t factor);

// Generated coordinates of a generative transposed convolution:
// union of c + o * (stride / up) over all kernel offsets o.
CoordSetPtr generate_grid(const CoordSet& in, Vec3i kernel, int32_t up);

// Forward (gather) map: in_coord == out_coord + offset * in.stride.
KernelMap forward_map(const CoordSet& in, const CoordSet& out, Vec3i kernel);
// Transposed (scatter) map: out_coord == in_coord + offset * out.stride.
KernelMap transposed_map(const CoordSet& in, const CoordSet& out, Vec3i kernel);

struct KernelMapResult {
  CoordSetPtr out;
  KernelMap map;
};
// Down-sampling convolution map: output grid plus the forward map onto it.
KernelMapResult build_kernel_map(const CoordSetPtr& in, Vec3i kernel, int32_t stride_down);

// Feature rows aligned with coords.
struct SparseTensor {
  CoordSetPtr coords;
  Matrix features;

  size_t size() const { return coords ? coords->size() : 0; }
  int channels() const { return int(features.cols()); }
};

SparseTensor make_tensor(CoordSetPtr coords, Matrix features);

// Keep coordinates that are inside [lo, hi] on every axis.
CoordSetPtr clip_grid(const CoordSet& in, Vec3i lo, Vec3i hi);
CoordSetPtr intersect_grid(const CoordSet& a, const CoordSet& b);

}  // namespace jpcc
