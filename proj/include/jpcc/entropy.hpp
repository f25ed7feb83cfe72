// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

constexpr int kCdfPrecision = 16;
constexpr int32_t kSymbolMin = -255;
constexpr int32_t kSymbolMax = 255;
constexpr double kSigmaMin = 0.05;

// Cumulative frequencies over [smin, smax]; cdf has (smax - smin + 2)
// entries, cdf.front() == 0 and cdf.back() == 2^precision.
struct QuantizedCdf {
  int32_t smin = 0;
  int32_t smax = 0;
  int precision = kCdfPrecision;
  std::vector<uint32_t> cdf;

  size_t alphabet_size() const { return size_t(smax - smin + 1); }
  uint32_t start(int32_t s) const { return cdf[size_t(s - smin)]; }
  uint32_t freq(int32_t s) const { return cdf[size_t(s - smin) + 1] - cdf[size_t(s - smin)]; }
  bool contains(int32_t s) const { return s >= smin && s <= smax; }
  // Symbol whose interval contains the cumulative value v.
  int32_t lookup(uint32_t v) const;
  // Throws DomainError if any invariant is broken.
  void validate() const;

  static QuantizedCdf from_frequencies(int32_t smin, const std::vector<uint32_t>& freqs,
                                       int precision = kCdfPrecision);
};

using CdfLookup = std::function<const QuantizedCdf&(size_t)>;

// 32-bit rANS with byte renormalization. The stream begins with the final
// encoder state (4 bytes, little-endian) followed by renormalization bytes in
// decode order.
class RansEncoder {
 public:
  // Symbols must be pushed in reverse decode order.
  void put(uint32_t start, uint32_t freq, int precision);
  std::vector<uint8_t> finish();

 private:
  uint32_t state_ = kLow;
  std::vector<uint8_t> rev_;
  static constexpr uint32_t kLow = 1u << 23;
};

class RansDecoder {
 public:
  explicit RansDecoder(std::span<const uint8_t> bytes);
  uint32_t peek(int precision) const { return state_ & ((1u << precision) - 1); }
  void advance(uint32_t start, uint32_t freq, int precision);
  // The state must be back at its initial value once every symbol is read.
  void finish() const;

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint32_t state_ = 0;
  static constexpr uint32_t kLow = 1u << 23;
};

std::vector<uint8_t> rans_encode(std::span<const int32_t> symbols, const CdfLookup& cdfs);
std::vector<int32_t> rans_decode(std::span<const uint8_t> bytes, size_t count, const CdfLookup& cdfs);

// Upper standard-normal tail from a tabulated Hermite interpolant; pure
// + and x so it is reproducible across platforms.
double normal_upper_tail(double x);
double normal_cdf(double x);

// Discretized zero-mean Gaussian; s gets Phi((s+.5)/sigma) - Phi((s-.5)/sigma)
// with the tails folded into the two end symbols.
double gaussian_mass(int32_t s, double sigma, int32_t smin, int32_t smax);
QuantizedCdf gaussian_cdf_table(double sigma, int32_t smin = kSymbolMin,
                                int32_t smax = kSymbolMax, int precision = kCdfPrecision);

// Tables keyed by the fixed-point scale code (sigma = code / 2^16).
class GaussianTableCache {
 public:
  const QuantizedCdf& get(int64_t code);
  static double sigma_of(int64_t code);
  static int64_t min_code();

 private:
  std::mutex mutex_;
  std::unordered_map<int64_t, std::unique_ptr<QuantizedCdf>> tables_;
};

// Discretized logistic: interval mass over [s-.5, s+.5] with tails folded.
double logistic_mass(int32_t s, double loc, double scale, int32_t smin, int32_t smax);
QuantizedCdf logistic_cdf_table(double loc, double scale, int32_t smin = kSymbolMin,
                                int32_t smax = kSymbolMax, int precision = kCdfPrecision);

// Per-channel quantized tables for the hyper latent.
struct FactorizedPrior {
  std::vector<QuantizedCdf> tables;

  size_t channels() const { return tables.size(); }
  const QuantizedCdf& factorized_cdf(size_t channel) const;
  static FactorizedPrior from_logistic(const std::vector<double>& loc,
                                       const std::vector<double>& scale);
};

// Ideal code length of the symbols under the given tables, in bits.
double model_bits(std::span<const int32_t> symbols, const CdfLookup& cdfs);
double empirical_entropy_bits(std::span<const int32_t> symbols);

// Clamps into [lo, hi]; returns how many values moved.
size_t clamp_symbols(std::vector<int32_t>& symbols, int32_t lo = kSymbolMin, int32_t hi = kSymbolMax);

}  // namespace jpcc
