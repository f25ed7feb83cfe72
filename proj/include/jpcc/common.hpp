// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jpcc {

struct Vec3i {
  int32_t x = 0;
  int32_t y = 0;
  int32_t z = 0;

  constexpr int32_t& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr int32_t operator[](int i) const {
    return i == 0 ? x : (i == 1 ? y : z);
  }

  friend constexpr auto operator<=>(const Vec3i&, const Vec3i&) = default;
  friend constexpr bool operator==(const Vec3i&, const Vec3i&) = default;

  friend constexpr Vec3i operator+(Vec3i a, Vec3i b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend constexpr Vec3i operator-(Vec3i a, Vec3i b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend constexpr Vec3i operator*(Vec3i a, int32_t s) {
    return {a.x * s, a.y * s, a.z * s};
  }
};

struct Rgb {
  uint8_t r = 0;
  uint8_t g = 0;
  uint8_t b = 0;

  friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

using Vec3d = std::array<double, 3>;

// Floor division that is correct for negative numerators.
constexpr int32_t floor_div(int32_t a, int32_t b) {
  int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr Vec3i floor_to_grid(Vec3i c, int32_t step) {
  return {floor_div(c.x, step) * step, floor_div(c.y, step) * step,
          floor_div(c.z, step) * step};
}

// Packs a coordinate with |component| < 2^20 into one 64-bit key.
constexpr uint64_t pack_key(Vec3i c) {
  constexpr int64_t kBias = int64_t{1} << 20;
  return (uint64_t(c.x + kBias) << 42) | (uint64_t(c.y + kBias) << 21) |
         uint64_t(c.z + kBias);
}

struct Vec3iHash {
  size_t operator()(const Vec3i& c) const noexcept {
    uint64_t k = pack_key(c);
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    return size_t(k);
  }
};

// Error hierarchy. Every codec failure derives from Error so that front ends
// can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class DomainError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class EncodeError : public Error {
 public:
  using Error::Error;
};
class DecodeError : public Error {
 public:
  using Error::Error;
};
class IntegrityError : public Error {
 public:
  using Error::Error;
};
class OverflowError : public Error {
 public:
  using Error::Error;
};

void sort_unique(std::vector<Vec3i>& coords);

}  // namespace jpcc
