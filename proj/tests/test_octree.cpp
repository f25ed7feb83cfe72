// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "jpcc/octree.hpp"

using namespace jpcc;

TEST_CASE("occupancy bytes") {
  std::vector<Vec3i> one{{5, 3, 1}};
  CHECK(octree_occupancy(one, 3) == std::vector<uint8_t>{16, 4, 128});
  std::vector<Vec3i> cube;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) cube.push_back({x, y, z});
  CHECK(octree_occupancy(cube, 1) == std::vector<uint8_t>{0xff});
}

TEST_CASE("round trips of the fixtures") {
  std::vector<Vec3i> one{{5, 3, 1}};
  CHECK(octree_decode(octree_encode(one, 3)) == one);
  std::vector<Vec3i> cube;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) cube.push_back({x, y, z});
  CHECK(octree_decode(octree_encode(cube, 1)) == cube);
  auto e = octree_encode({}, 4);
  CHECK(e.size() == 5);
  CHECK(octree_decode(e).empty());
  std::vector<Vec3i> origin{{0, 0, 0}};
  CHECK(octree_decode(octree_encode(origin, 0)) == origin);
}

TEST_CASE("depth") {
  std::vector<Vec3i> c{{1023, 0, 5}};
  CHECK(octree_depth_for(c) == 10);
  std::vector<Vec3i> c2{{1024, 0, 5}};
  CHECK(octree_depth_for(c2) == 11);
}

TEST_CASE("errors") {
  std::vector<Vec3i> dup{{1, 1, 1}, {1, 1, 1}};
  CHECK_THROWS_AS(octree_encode(dup, 2), DomainError);
  std::vector<Vec3i> out{{4, 0, 0}};
  CHECK_THROWS_AS(octree_encode(out, 2), DomainError);
  std::vector<Vec3i> neg{{-1, 0, 0}};
  CHECK_THROWS_AS(octree_encode(neg, 2), DomainError);
  std::vector<Vec3i> pts{{1, 2, 3}, {7, 7, 7}, {0, 5, 2}};
  auto b = octree_encode(pts, 3);
  b.pop_back();
  CHECK_THROWS_AS(octree_decode(b), DecodeError);
}

TEST_CASE("random sets round trip") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 60; ++t) {
    std::uniform_int_distribution<int> dd(1, 12);
    const int depth = dd(rng);
    std::uniform_int_distribution<int32_t> c(0, (1 << depth) - 1);
    std::uniform_int_distribution<size_t> n(1, 3000);
    std::set<Vec3i> s;
    const size_t want = n(rng);
    for (size_t i = 0; i < want; ++i) s.insert({c(rng), c(rng), c(rng)});
    std::vector<Vec3i> v(s.begin(), s.end());
    std::shuffle(v.begin(), v.end(), rng);
    auto b = octree_encode(v, depth);
    std::vector<Vec3i> sorted(s.begin(), s.end());
    REQUIRE(octree_decode(b) == sorted);
  }
}

TEST_CASE("dense surfaces compress below the raw occupancy size") {
  std::vector<Vec3i> plane;
  for (int x = 0; x < 64; ++x)
    for (int y = 0; y < 64; ++y) plane.push_back({x, y, 10});
  const auto occ = octree_occupancy(plane, 6);
  const auto enc = octree_encode(plane, 6);
  CHECK(enc.size() < occ.size());
}
