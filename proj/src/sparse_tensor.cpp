// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/sparse_tensor.hpp"

#include <algorithm>

namespace jpcc {

CoordSet::CoordSet(std::vector<Vec3i> coords, int32_t stride)
    : coords_(std::move(coords)), stride_(stride) {
  if (stride_ < 1) throw ShapeError("tensor stride must be positive");
  if (!std::is_sorted(coords_.begin(), coords_.end())) sort_unique(coords_);
  else coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
  index_.reserve(coords_.size() * 2);
  for (size_t i = 0; i < coords_.size(); ++i) {
    const Vec3i& c = coords_[i];
    if (c.x % stride_ || c.y % stride_ || c.z % stride_)
      throw ShapeError("coordinate not divisible by tensor stride " + std::to_string(stride_));
    index_.emplace(c, int32_t(i));
  }
}

std::shared_ptr<const KernelMap> CoordSet::self_map(Vec3i kernel) const {
  std::lock_guard lock(cache_mutex_);
  auto it = self_cache_.find(kernel);
  if (it != self_cache_.end()) return it->second;
  auto map = std::make_shared<const KernelMap>(forward_map(*this, *this, kernel));
  self_cache_.emplace(kernel, map);
  return map;
}

CoordSetPtr make_coords(std::vector<Vec3i> coords, int32_t stride) {
  return std::make_shared<const CoordSet>(std::move(coords), stride);
}

size_t KernelMap::pair_count() const {
  size_t n = 0;
  for (const auto& r : in_rows) n += r.size();
  return n;
}

std::vector<Vec3i> kernel_offsets(Vec3i kernel) {
  std::vector<Vec3i> out;
  int32_t lo[3];
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] < 1) throw ShapeError("kernel size must be >= 1");
    lo[a] = (kernel[a] % 2 == 1) ? -(kernel[a] - 1) / 2 : 0;
  }
  for (int32_t i = 0; i < kernel.x; ++i)
    for (int32_t j = 0; j < kernel.y; ++j)
      for (int32_t k = 0; k < kernel.z; ++k) out.push_back({lo[0] + i, lo[1] + j, lo[2] + k});
  return out;
}

int32_t kernel_volume(Vec3i kernel) { return kernel.x * kernel.y * kernel.z; }

CoordSetPtr downsample_grid(const CoordSet& in, int32_t factor) {
  if (factor < 1) throw ShapeError("down-sampling factor must be >= 1");
  const int32_t step = in.stride() * factor;
  std::vector<Vec3i> out;
  out.reserve(in.size());
  for (const auto& c : in.coords()) out.push_back(floor_to_grid(c, step));
  sort_unique(out);
  return make_coords(std::move(out), step);
}

CoordSetPtr generate_grid(const CoordSet& in, Vec3i kernel, int32_t up) {
  if (up < 1 || in.stride() % up != 0)
    throw ShapeError("up-sampling factor must divide the tensor stride");
  const int32_t step = in.stride() / up;
  const auto offsets = kernel_offsets(kernel);
  std::vector<Vec3i> out;
  out.reserve(in.size() * offsets.size());
  for (const auto& c : in.coords())
    for (const auto& o : offsets) out.push_back(c + o * step);
  sort_unique(out);
  return make_coords(std::move(out), step);
}

KernelMap forward_map(const CoordSet& in, const CoordSet& out, Vec3i kernel) {
  KernelMap m;
  m.offsets = kernel_offsets(kernel);
  m.in_rows.resize(m.offsets.size());
  m.out_rows.resize(m.offsets.size());
  const int32_t s = in.stride();
  for (size_t k = 0; k < m.offsets.size(); ++k) {
    const Vec3i delta = m.offsets[k] * s;
    auto& ir = m.in_rows[k];
    auto& orow = m.out_rows[k];
    for (size_t o = 0; o < out.size(); ++o) {
      const int32_t i = in.find(out[o] + delta);
      if (i >= 0) {
        ir.push_back(i);
        orow.push_back(int32_t(o));
      }
    }
  }
  return m;
}

KernelMap transposed_map(const CoordSet& in, const CoordSet& out, Vec3i kernel) {
  KernelMap m;
  m.offsets = kernel_offsets(kernel);
  m.in_rows.resize(m.offsets.size());
  m.out_rows.resize(m.offsets.size());
  const int32_t s = out.stride();
  for (size_t k = 0; k < m.offsets.size(); ++k) {
    const Vec3i delta = m.offsets[k] * s;
    auto& ir = m.in_rows[k];
    auto& orow = m.out_rows[k];
    for (size_t i = 0; i < in.size(); ++i) {
      const int32_t o = out.find(in[i] + delta);
      if (o >= 0) {
        ir.push_back(int32_t(i));
        orow.push_back(o);
      }
    }
  }
  return m;
}

KernelMapResult build_kernel_map(const CoordSetPtr& in, Vec3i kernel, int32_t stride_down) {
  KernelMapResult r;
  r.out = stride_down == 1 ? in : downsample_grid(*in, stride_down);
  r.map = forward_map(*in, *r.out, kernel);
  return r;
}

SparseTensor make_tensor(CoordSetPtr coords, Matrix features) {
  if (!coords) throw ShapeError("tensor without coordinates");
  if (size_t(features.rows()) != coords->size())
    throw ShapeError("feature rows (" + std::to_string(features.rows()) +
                     ") do not match coordinate count (" + std::to_string(coords->size()) + ")");
  return SparseTensor{std::move(coords), std::move(features)};
}

CoordSetPtr clip_grid(const CoordSet& in, Vec3i lo, Vec3i hi) {
  std::vector<Vec3i> out;
  out.reserve(in.size());
  for (const auto& c : in.coords()) {
    if (c.x < lo.x || c.y < lo.y || c.z < lo.z) continue;
    if (c.x > hi.x || c.y > hi.y || c.z > hi.z) continue;
    out.push_back(c);
  }
  return make_coords(std::move(out), in.stride());
}

CoordSetPtr intersect_grid(const CoordSet& a, const CoordSet& b) {
  std::vector<Vec3i> out;
  std::set_intersection(a.coords().begin(), a.coords().end(), b.coords().begin(),
                        b.coords().end(), std::back_inserter(out));
  return make_coords(std::move(out), a.stride());
}

}  // namespace jpcc
