// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "jpcc/entropy.hpp"

using namespace jpcc;

namespace {

QuantizedCdf random_table(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, 40), lo(-20, 5);
  std::uniform_int_distribution<uint32_t> w(1, 1000);
  const int n = len(rng);
  std::vector<double> raw(static_cast<size_t>(n));
  double sum = 0;
  for (auto& r : raw) sum += (r = w(rng));
  std::vector<uint32_t> f(static_cast<size_t>(n));
  uint32_t tot = 0;
  for (int i = 0; i < n; ++i) tot += f[size_t(i)] = 1 + uint32_t(raw[size_t(i)] / sum * (65536.0 - n));
  f[0] += 65536 - tot;
  return QuantizedCdf::from_frequencies(lo(rng), f);
}

QuantizedCdf uniform256() {
  return QuantizedCdf::from_frequencies(0, std::vector<uint32_t>(256, 256));
}

}  // namespace

TEST_CASE("rans round trip: empty, single, long") {
  auto t = uniform256();
  CdfLookup lk = [&](size_t) -> const QuantizedCdf& { return t; };
  auto e = rans_encode({}, lk);
  CHECK(e.size() == 4);
  CHECK(rans_decode(e, 0, lk).empty());

  std::vector<int32_t> one{200};
  CHECK(rans_decode(rans_encode(one, lk), 1, lk) == one);

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<int32_t> s(100000);
  for (auto& v : s) v = d(rng);
  auto bytes = rans_encode(s, lk);
  CHECK(rans_decode(bytes, s.size(), lk) == s);
  CHECK(double(bytes.size()) <= 100000 * 1.01 + 16);
}

TEST_CASE("rans round trip over random tables") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<QuantizedCdf> tabs(4);
    for (auto& t : tabs) t = random_table(rng);
    std::uniform_int_distribution<size_t> len(0, 200);
    std::vector<int32_t> s(len(rng));
    for (size_t i = 0; i < s.size(); ++i) {
      const auto& t = tabs[i % 4];
      std::uniform_int_distribution<int32_t> d(t.smin, t.smax);
      s[i] = d(rng);
    }
    CdfLookup lk = [&](size_t i) -> const QuantizedCdf& { return tabs[i % 4]; };
    auto b = rans_encode(s, lk);
    REQUIRE(rans_decode(b, s.size(), lk) == s);
  }
}

TEST_CASE("rans errors") {
  auto t = uniform256();
  CdfLookup lk = [&](size_t) -> const QuantizedCdf& { return t; };
  std::vector<int32_t> bad{300};
  CHECK_THROWS_AS(rans_encode(bad, lk), EncodeError);
  std::vector<int32_t> s(1000, 7);
  for (size_t i = 0; i < s.size(); ++i) s[i] = int32_t(i % 256);
  auto b = rans_encode(s, lk);
  b.resize(b.size() / 2);
  CHECK_THROWS_AS(rans_decode(b, s.size(), lk), DecodeError);
  CHECK_THROWS_AS(rans_decode(std::vector<uint8_t>{1, 2}, 0, lk), DecodeError);
}

TEST_CASE("normal tail accuracy") {
  for (double x = -8; x <= 8; x += 0.013) {
    const double ref = 0.5 * std::erfc(x / std::sqrt(2.0));
    CHECK(std::abs(normal_upper_tail(x) - ref) < 1e-9);
  }
}

TEST_CASE("gaussian tables") {
  CHECK(gaussian_mass(0, 1.0, -255, 255) == doctest::Approx(0.382925).epsilon(1e-6));
  CHECK(gaussian_mass(0, kSigmaMin, -255, 255) > 0.999999);
  for (double sigma : {0.05, 0.3, 1.0, 4.7, 30.0, 200.0}) {
    auto t = gaussian_cdf_table(sigma);
    t.validate();
    for (int s = 1; s <= 255; ++s) REQUIRE(t.freq(s) == t.freq(-s));
  }
  for (int s : {1, 2, 5, 40}) {
    double prev = -1;
    for (double sigma = 0.1; sigma < 50; sigma *= 1.3) {
      double tail = 0;
      for (int k = s; k <= 255; ++k) tail += 2 * gaussian_mass(k, sigma, -255, 255);
      // Strict once the tail is representable at all.
      if (tail > 0) CHECK(tail > prev);
      prev = tail;
    }
  }
}

TEST_CASE("gaussian cache keys on integer codes") {
  GaussianTableCache cache;
  const auto& a = cache.get(65536);
  const auto& b = cache.get(65536);
  CHECK(&a == &b);
  CHECK(a.cdf == gaussian_cdf_table(1.0).cdf);
  CHECK(&cache.get(0) == &cache.get(GaussianTableCache::min_code()));
}

TEST_CASE("factorized prior") {
  auto prior = FactorizedPrior::from_logistic({0.0, 1.5}, {1.0, 3.0});
  CHECK(prior.channels() == 2);
  CHECK_THROWS_AS(prior.factorized_cdf(2), ConfigError);

  std::mt19937_64 rng(4);
  std::vector<int32_t> s(20000);
  std::vector<int32_t> ch(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    ch[i] = int32_t(i % 2);
    std::uniform_real_distribution<double> u(1e-9, 1 - 1e-9);
    const double p = u(rng);
    const double v = (ch[i] ? 1.5 : 0.0) + (ch[i] ? 3.0 : 1.0) * std::log(p / (1 - p));
    s[i] = int32_t(std::floor(v + 0.5));
  }
  clamp_symbols(s);
  CdfLookup lk = [&](size_t i) -> const QuantizedCdf& { return prior.factorized_cdf(size_t(ch[i])); };
  auto b = rans_encode(s, lk);
  CHECK(rans_decode(b, s.size(), lk) == s);

  // Per-channel empirical entropy oracle.
  std::vector<int32_t> c0, c1;
  for (size_t i = 0; i < s.size(); ++i) (ch[i] ? c1 : c0).push_back(s[i]);
  const double h = empirical_entropy_bits(c0) + empirical_entropy_bits(c1);
  CHECK(double(b.size()) * 8 <= h * 1.05);
  CHECK(model_bits(s, lk) >= h);
}

TEST_CASE("clamp counts escapes") {
  std::vector<int32_t> v{-300, 0, 256, 255};
  CHECK(clamp_symbols(v) == 2);
  CHECK(v == std::vector<int32_t>{-255, 0, 255, 255});
}
