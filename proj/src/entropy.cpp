// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

namespace jpcc {

#include "normal_table.inc"

int32_t QuantizedCdf::lookup(uint32_t v) const {
  // First cdf entry strictly greater than v, minus one.
  auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
  return smin + int32_t(it - cdf.begin()) - 1;
}

void QuantizedCdf::validate() const {
  if (smax < smin) throw DomainError("cdf: empty alphabet");
  if (cdf.size() != alphabet_size() + 1) throw DomainError("cdf: wrong table length");
  if (cdf.front() != 0) throw DomainError("cdf: first entry must be 0");
  if (cdf.back() != (1u << precision)) throw DomainError("cdf: total must be 2^precision");
  for (size_t i = 1; i < cdf.size(); ++i)
    if (cdf[i] <= cdf[i - 1]) throw DomainError("cdf: every symbol needs frequency >= 1");
}

QuantizedCdf QuantizedCdf::from_frequencies(int32_t smin, const std::vector<uint32_t>& freqs,
                                            int precision) {
  QuantizedCdf q;
  q.smin = smin;
  q.smax = smin + int32_t(freqs.size()) - 1;
  q.precision = precision;
  q.cdf.resize(freqs.size() + 1, 0);
  for (size_t i = 0; i < freqs.size(); ++i) q.cdf[i + 1] = q.cdf[i] + freqs[i];
  q.validate();
  return q;
}

void RansEncoder::put(uint32_t start, uint32_t freq, int precision) {
  if (freq == 0) throw EncodeError("rans: zero-frequency symbol");
  const uint32_t x_max = ((kLow >> precision) << 8) * freq;
  while (state_ >= x_max) {
    rev_.push_back(uint8_t(state_ & 0xff));
    state_ >>= 8;
  }
  state_ = ((state_ / freq) << precision) + (state_ % freq) + start;
}

std::vector<uint8_t> RansEncoder::finish() {
  std::vector<uint8_t> out;
  out.reserve(rev_.size() + 4);
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(state_ >> (8 * i)));
  out.insert(out.end(), rev_.rbegin(), rev_.rend());
  rev_.clear();
  state_ = kLow;
  return out;
}

RansDecoder::RansDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  if (bytes_.size() < 4) throw DecodeError("rans: stream shorter than its state header");
  for (int i = 0; i < 4; ++i) state_ |= uint32_t(bytes_[size_t(i)]) << (8 * i);
  pos_ = 4;
  if (state_ < kLow) throw DecodeError("rans: invalid initial state");
}

void RansDecoder::advance(uint32_t start, uint32_t freq, int precision) {
  const uint32_t mask = (1u << precision) - 1;
  state_ = freq * (state_ >> precision) + (state_ & mask) - start;
  while (state_ < kLow) {
    if (pos_ >= bytes_.size()) throw DecodeError("rans: truncated stream");
    state_ = (state_ << 8) | bytes_[pos_++];
  }
}

void RansDecoder::finish() const {
  if (state_ != kLow || pos_ != bytes_.size())
    throw DecodeError("rans: final state mismatch (stream corrupt or tables differ)");
}

std::vector<uint8_t> rans_encode(std::span<const int32_t> symbols, const CdfLookup& cdfs) {
  RansEncoder enc;
  for (size_t i = symbols.size(); i-- > 0;) {
    const QuantizedCdf& t = cdfs(i);
    const int32_t s = symbols[i];
    if (!t.contains(s))
      throw EncodeError("rans: symbol " + std::to_string(s) + " at " + std::to_string(i) +
                        " outside alphabet [" + std::to_string(t.smin) + ", " +
                        std::to_string(t.smax) + "]");
    enc.put(t.start(s), t.freq(s), t.precision);
  }
  return enc.finish();
}

std::vector<int32_t> rans_decode(std::span<const uint8_t> bytes, size_t count, const CdfLookup& cdfs) {
  RansDecoder dec(bytes);
  std::vector<int32_t> out(count);
  for (size_t i = 0; i < count; ++i) {
    const QuantizedCdf& t = cdfs(i);
    const int32_t s = t.lookup(dec.peek(t.precision));
    dec.advance(t.start(s), t.freq(s), t.precision);
    out[i] = s;
  }
  dec.finish();
  return out;
}

double normal_upper_tail(double x) {
  if (x < 0) return 1.0 - normal_upper_tail(-x);
  constexpr double kStep = 1.0 / 64.0;
  const double t = x * 64.0;
  if (t >= double(kNormalTableSize - 1)) return 0.0;
  const int i = int(t);
  const double u = t - double(i);
  const double p0 = kNormalUpperTail[i];
  const double p1 = kNormalUpperTail[i + 1];
  const double m0 = -kNormalDensity[i] * kStep;
  const double m1 = -kNormalDensity[i + 1] * kStep;
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 + (-2 * u3 + 3 * u2) * p1 +
         (u3 - u2) * m1;
}

double normal_cdf(double x) { return 1.0 - normal_upper_tail(x); }

double gaussian_mass(int32_t s, double sigma, int32_t smin, int32_t smax) {
  const int32_t a = s < 0 ? -s : s;
  const bool edge = (s == smin) || (s == smax);
  if (a == 0) {
    if (edge) return 1.0;
    return 1.0 - 2.0 * normal_upper_tail(0.5 / sigma);
  }
  const double lo = (double(a) - 0.5) / sigma;
  if (lo > 8.5) return 0.0;
  const double q_lo = normal_upper_tail(lo);
  // An end symbol absorbs the tail beyond it.
  if (edge) return q_lo;
  return q_lo - normal_upper_tail((double(a) + 0.5) / sigma);
}

namespace {

QuantizedCdf quantize_masses(int32_t smin, const std::vector<double>& mass, int precision,
                             int32_t zero_index) {
  const uint32_t total = 1u << precision;
  const uint32_t n = uint32_t(mass.size());
  if (n > total) throw DomainError("alphabet larger than precision allows");
  const double spare = double(total - n);
  std::vector<uint32_t> freq(n);
  uint64_t sum = 0;
  for (uint32_t i = 0; i < n; ++i) {
    const double m = std::clamp(mass[i], 0.0, 1.0);
    freq[i] = 1 + uint32_t(std::floor(m * spare));
    sum += freq[i];
  }
  if (sum > total) {
    // Only reachable if the masses sum above one by rounding; trim the largest.
    auto it = std::max_element(freq.begin(), freq.end());
    *it -= uint32_t(sum - total);
  } else {
    freq[size_t(zero_index)] += uint32_t(total - sum);
  }
  return QuantizedCdf::from_frequencies(smin, freq, precision);
}

}  // namespace

QuantizedCdf gaussian_cdf_table(double sigma, int32_t smin, int32_t smax, int precision) {
  sigma = std::max(sigma, kSigmaMin);
  if (smin > 0 || smax < 0) throw DomainError("gaussian table: alphabet must contain 0");
  std::vector<double> mass(size_t(smax - smin + 1));
  for (int32_t s = smin; s <= smax; ++s) mass[size_t(s - smin)] = gaussian_mass(s, sigma, smin, smax);
  return quantize_masses(smin, mass, precision, -smin);
}

const QuantizedCdf& GaussianTableCache::get(int64_t code) {
  code = std::max(code, min_code());
  std::lock_guard lock(mutex_);
  auto it = tables_.find(code);
  if (it != tables_.end()) return *it->second;
  auto t = std::make_unique<QuantizedCdf>(gaussian_cdf_table(sigma_of(code)));
  return *tables_.emplace(code, std::move(t)).first->second;
}

double GaussianTableCache::sigma_of(int64_t code) { return double(code) / 65536.0; }

int64_t GaussianTableCache::min_code() { return int64_t(std::llround(kSigmaMin * 65536.0)); }

namespace {

double logistic_cdf(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double logistic_mass(int32_t s, double loc, double scale, int32_t smin, int32_t smax) {
  const double hi = s == smax ? 1.0 : logistic_cdf((double(s) + 0.5 - loc) / scale);
  const double lo = s == smin ? 0.0 : logistic_cdf((double(s) - 0.5 - loc) / scale);
  return std::max(hi - lo, 0.0);
}

QuantizedCdf logistic_cdf_table(double loc, double scale, int32_t smin, int32_t smax, int precision) {
  if (!(scale > 0)) throw DomainError("logistic table: scale must be positive");
  std::vector<double> mass(size_t(smax - smin + 1));
  size_t mode = 0;
  for (int32_t s = smin; s <= smax; ++s) {
    mass[size_t(s - smin)] = logistic_mass(s, loc, scale, smin, smax);
    if (mass[size_t(s - smin)] > mass[mode]) mode = size_t(s - smin);
  }
  return quantize_masses(smin, mass, precision, int32_t(mode));
}

const QuantizedCdf& FactorizedPrior::factorized_cdf(size_t channel) const {
  if (channel >= tables.size())
    throw ConfigError("factorized prior has no table for channel " + std::to_string(channel));
  return tables[channel];
}

FactorizedPrior FactorizedPrior::from_logistic(const std::vector<double>& loc,
                                               const std::vector<double>& scale) {
  if (loc.size() != scale.size()) throw ShapeError("prior: loc/scale length mismatch");
  FactorizedPrior p;
  for (size_t c = 0; c < loc.size(); ++c) p.tables.push_back(logistic_cdf_table(loc[c], scale[c]));
  return p;
}

double model_bits(std::span<const int32_t> symbols, const CdfLookup& cdfs) {
  double bits = 0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const QuantizedCdf& t = cdfs(i);
    bits += double(t.precision) - std::log2(double(t.freq(symbols[i])));
  }
  return bits;
}

double empirical_entropy_bits(std::span<const int32_t> symbols) {
  std::map<int32_t, size_t> counts;
  for (int32_t s : symbols) ++counts[s];
  const double n = double(symbols.size());
  double bits = 0;
  for (const auto& [s, c] : counts) bits -= double(c) * std::log2(double(c) / n);
  return bits;
}

size_t clamp_symbols(std::vector<int32_t>& symbols, int32_t lo, int32_t hi) {
  size_t moved = 0;
  for (auto& s : symbols) {
    if (s < lo) { s = lo; ++moved; }
    else if (s > hi) { s = hi; ++moved; }
  }
  return moved;
}

}  // namespace jpcc
