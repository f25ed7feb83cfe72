// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/octree.hpp"

#include <algorithm>

#include "jpcc/byte_io.hpp"
#include "jpcc/entropy.hpp"

namespace jpcc {
namespace {

constexpr int kSymbols = 255;

uint64_t morton(const Vec3i& c, int depth) {
  uint64_t m = 0;
  for (int b = depth - 1; b >= 0; --b) {
    m = (m << 3) | (uint64_t((c.x >> b) & 1) << 2) | (uint64_t((c.y >> b) & 1) << 1) |
        uint64_t((c.z >> b) & 1);
  }
  return m;
}

Vec3i unmorton(uint64_t m, int depth) {
  Vec3i c;
  for (int b = 0; b < depth; ++b) {
    const uint64_t t = m >> (3 * b);
    c.x |= int32_t((t >> 2) & 1) << b;
    c.y |= int32_t((t >> 1) & 1) << b;
    c.z |= int32_t(t & 1) << b;
  }
  return c;
}

std::vector<uint64_t> sorted_codes(std::span<const Vec3i> coords, int depth) {
  if (depth < 0 || depth > kMaxOctreeDepth)
    throw DomainError("octree depth " + std::to_string(depth) + " out of range");
  const int64_t lim = int64_t(1) << depth;
  std::vector<uint64_t> codes;
  codes.reserve(coords.size());
  for (const auto& c : coords) {
    if (c.x < 0 || c.y < 0 || c.z < 0 || c.x >= lim || c.y >= lim || c.z >= lim)
      throw DomainError("octree: coordinate outside [0, 2^" + std::to_string(depth) + ")");
    codes.push_back(morton(c, depth));
  }
  std::sort(codes.begin(), codes.end());
  if (std::adjacent_find(codes.begin(), codes.end()) != codes.end())
    throw DomainError("octree: duplicate coordinates");
  return codes;
}

}  // namespace

int octree_depth_for(std::span<const Vec3i> coords) {
  int32_t mx = 0;
  for (const auto& c : coords) mx = std::max({mx, c.x, c.y, c.z});
  int d = 0;
  while (d < 31 && (int64_t(1) << d) <= mx) ++d;
  return d;
}

std::vector<uint8_t> octree_occupancy(std::span<const Vec3i> coords, int depth) {
  const auto codes = sorted_codes(coords, depth);
  std::vector<uint8_t> out;
  if (codes.empty()) return out;
  for (int l = 0; l < depth; ++l) {
    const int shift = 3 * (depth - l - 1);
    uint64_t node = codes[0] >> (shift + 3);
    uint8_t byte = 0;
    for (uint64_t m : codes) {
      const uint64_t p = m >> (shift + 3);
      if (p != node) {
        out.push_back(byte);
        byte = 0;
        node = p;
      }
      byte |= uint8_t(1u << ((m >> shift) & 7));
    }
    out.push_back(byte);
  }
  return out;
}

AdaptiveByteModel::AdaptiveByteModel() : count_(kSymbols, 1), tree_(kSymbols + 1, 0) { rebuild(); }

void AdaptiveByteModel::rebuild() {
  std::fill(tree_.begin(), tree_.end(), 0);
  total_ = 0;
  for (int j = 0; j < kSymbols; ++j) {
    total_ += count_[size_t(j)];
    for (int i = j + 1; i <= kSymbols; i += i & -i) tree_[size_t(i)] += count_[size_t(j)];
  }
}

void AdaptiveByteModel::add(int j, int32_t delta) {
  for (int i = j + 1; i <= kSymbols; i += i & -i) tree_[size_t(i)] += uint32_t(delta);
  total_ += uint32_t(delta);
}

uint32_t AdaptiveByteModel::prefix(int j) const {
  uint32_t s = 0;
  for (int i = j; i > 0; i -= i & -i) s += tree_[size_t(i)];
  return s;
}

uint32_t AdaptiveByteModel::cum_q(int j) const {
  if (j >= kSymbols) return 1u << kPrecision;
  constexpr uint64_t spare = (1u << kPrecision) - kSymbols;
  return uint32_t(j) + uint32_t(uint64_t(prefix(j)) * spare / total_);
}

void AdaptiveByteModel::interval(uint8_t sym, uint32_t& start, uint32_t& freq) const {
  const int j = int(sym) - 1;
  start = cum_q(j);
  freq = cum_q(j + 1) - start;
}

uint8_t AdaptiveByteModel::lookup(uint32_t v) const {
  int lo = 0, hi = kSymbols - 1;  // largest j with cum_q(j) <= v
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (cum_q(mid) <= v) lo = mid;
    else hi = mid - 1;
  }
  return uint8_t(lo + 1);
}

void AdaptiveByteModel::update(uint8_t sym) {
  const int j = int(sym) - 1;
  count_[size_t(j)] += kIncrement;
  add(j, int32_t(kIncrement));
  if (total_ > kMaxTotal) {
    for (auto& c : count_) c = (c + 1) / 2;
    rebuild();
  }
}

std::vector<uint8_t> octree_encode(std::span<const Vec3i> coords, int depth) {
  const auto occ = octree_occupancy(coords, depth);
  ByteWriter w;
  w.u8(uint8_t(depth));
  w.u32(uint32_t(coords.size()));
  if (coords.empty()) return w.take();
  std::vector<std::pair<uint32_t, uint32_t>> iv(occ.size());
  AdaptiveByteModel model;
  for (size_t i = 0; i < occ.size(); ++i) {
    model.interval(occ[i], iv[i].first, iv[i].second);
    model.update(occ[i]);
  }
  RansEncoder enc;
  for (size_t i = iv.size(); i-- > 0;) enc.put(iv[i].first, iv[i].second, AdaptiveByteModel::kPrecision);
  w.bytes(enc.finish());
  return w.take();
}

std::vector<Vec3i> octree_decode(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  const int depth = r.u8();
  const uint32_t count = r.u32();
  if (depth > kMaxOctreeDepth) throw DecodeError("octree: depth " + std::to_string(depth) + " too large");
  std::vector<Vec3i> out;
  if (count == 0) {
    if (!r.at_end()) throw DecodeError("octree: trailing bytes after empty set");
    return out;
  }
  RansDecoder dec(r.rest());
  AdaptiveByteModel model;
  std::vector<uint64_t> nodes{0}, next;
  for (int l = 0; l < depth; ++l) {
    next.clear();
    for (uint64_t n : nodes) {
      const uint8_t sym = model.lookup(dec.peek(AdaptiveByteModel::kPrecision));
      uint32_t start, freq;
      model.interval(sym, start, freq);
      dec.advance(start, freq, AdaptiveByteModel::kPrecision);
      model.update(sym);
      for (int c = 0; c < 8; ++c)
        if (sym & (1u << c)) next.push_back((n << 3) | uint64_t(c));
      if (next.size() > count) throw DecodeError("octree: more leaves than signalled points");
    }
    nodes.swap(next);
  }
  dec.finish();
  if (nodes.size() != count)
    throw DecodeError("octree: decoded " + std::to_string(nodes.size()) + " points, header says " +
                      std::to_string(count));
  out.reserve(nodes.size());
  for (uint64_t m : nodes) out.push_back(unmorton(m, depth));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace jpcc
