// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "jpcc/color.hpp"
#include "jpcc/normals.hpp"

using namespace jpcc;

namespace {

// Single wavy sheet z = f(x, y) with smooth colours.
PointCloud colored_sheet(uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4), ph(0, 6.28);
  const double a = u(rng), b = u(rng), p = ph(rng);
  PointCloud pc;
  std::set<Vec3i> seen;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      const int z = 40 + int(std::lround(a * x + b * y + 3 * std::sin(x * 0.15 + p)));
      seen.insert({x, y, z});
    }
  pc.coords.assign(seen.begin(), seen.end());
  pc.colors = std::vector<Rgb>{};
  for (const auto& c : pc.coords)
    pc.colors->push_back({uint8_t(c.x * 3 % 256), uint8_t((c.y * 5 + c.z) % 256), uint8_t(c.z * 2 % 256)});
  pc.bit_depth = 8;
  return pc;
}

std::vector<uint8_t> all_occupied(const RgbImage& im) {
  return std::vector<uint8_t>(size_t(im.width) * size_t(im.height), 1);
}

}  // namespace

TEST_CASE("recolour fixtures") {
  std::vector<Vec3i> ref{{0, 0, 0}, {2, 0, 0}};
  std::vector<Rgb> col{{0, 0, 0}, {255, 255, 255}};
  CHECK(recolor(ref, col, ref) == col);
  std::vector<Vec3i> mid{{1, 0, 0}};
  CHECK(recolor(ref, col, mid)[0] == Rgb{128, 128, 128});
  std::vector<Vec3i> one{{5, 5, 5}};
  std::vector<Rgb> oc{{9, 8, 7}};
  std::vector<Vec3i> targets{{0, 0, 0}, {9, 1, 3}};
  for (const auto& c : recolor(one, oc, targets)) CHECK(c == Rgb{9, 8, 7});
  CHECK_THROWS_AS(recolor(std::vector<Vec3i>{}, std::vector<Rgb>{}, mid), DomainError);

  // SR role: reference = pre-SR coloured points.
  PointCloud pre;
  pre.coords = ref;
  pre.colors = col;
  auto sr = color_super_resolve(std::vector<Vec3i>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, pre);
  CHECK((*sr.colors)[0] == col[0]);
  CHECK((*sr.colors)[1] == Rgb{128, 128, 128});
  CHECK((*sr.colors)[2] == col[1]);
}

TEST_CASE("segmentation") {
  std::vector<Vec3d> n{{0.9, 0.1, 0}, {0, 0, -1}, {1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 0}};
  CHECK(initial_segmentation(n) == std::vector<uint8_t>{0, 5, 0});

  // Plane with one mislabelled point.
  std::vector<Vec3i> pts;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) pts.push_back({x, y, 0});
  std::vector<Vec3d> normals(pts.size(), Vec3d{0, 0.6, 0.8});
  auto init = initial_segmentation(normals);
  CHECK(refine_segmentation(pts, normals, init, 10, 8, 0.0) == init);
  normals[27] = {0, 0.8, 0.6};  // prefers +Y on its own
  init = initial_segmentation(normals);
  CHECK(init[27] == 1);
  auto refined = refine_segmentation(pts, normals, init, 10, 8, 3.0);
  CHECK(refined[27] == 2);

  // Two planes meeting at a right angle settle.
  std::vector<Vec3i> two;
  for (int a = 0; a < 12; ++a)
    for (int b = 0; b < 12; ++b) {
      two.push_back({a, b, 0});
      if (b > 0) two.push_back({a, 0, b});
    }
  sort_unique(two);
  auto nt = estimate_normals(two, 12);
  auto c0 = initial_segmentation(nt);
  auto c10 = refine_segmentation(two, nt, c0, 10, 16, 3.0);
  auto c11 = refine_segmentation(two, nt, c10, 1, 16, 3.0);
  CHECK(c10 == c11);
}

TEST_CASE("patches") {
  std::vector<Vec3i> plane;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y) plane.push_back({x, y, 3});
  std::vector<uint8_t> cl(plane.size(), 2);
  CHECK(extract_patches(plane, cl).size() == 1);
  auto two = plane;
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) two.push_back({x, y, 10});
  std::vector<uint8_t> cl2(two.size(), 2);
  auto ps = extract_patches(two, cl2);
  REQUIRE(ps.size() == 2);
  CHECK(ps[0].points.size() == 36);
  CHECK(ps[1].points.size() == 16);
  CHECK(extract_patches(two, cl2)[1].points == ps[1].points);
}

TEST_CASE("patch projection layers") {
  auto run = [](std::vector<int> depths, int thickness) {
    std::vector<Vec3i> c;
    for (int d : depths) c.push_back({0, 0, d});
    Patch p;
    p.axis = 2;
    for (uint32_t i = 0; i < c.size(); ++i) p.points.push_back(i);
    project_patch(p, c, thickness);
    return p;
  };
  auto a = run({5, 7}, 4);
  CHECK(a.near_depth[0] == 5);
  CHECK(a.far_depth[0] == 7);
  CHECK(a.unprojected.empty());
  auto b = run({5, 6, 9}, 2);
  CHECK(b.near_depth[0] == 5);
  CHECK(b.far_depth[0] == 6);
  CHECK(b.unprojected == std::vector<uint32_t>{2});
  auto s = run({4}, 4);
  CHECK(s.near_depth[0] == s.far_depth[0]);
  CHECK(s.unprojected.empty());
}

TEST_CASE("packing") {
  std::vector<std::pair<int32_t, int32_t>> one{{8, 8}};
  auto p = pack_patches(one, 16);
  CHECK(p.placements[0].x == 0);
  CHECK(p.placements[0].y == 0);
  CHECK(p.height == 8);
  std::vector<std::pair<int32_t, int32_t>> two{{8, 8}, {4, 4}};
  p = pack_patches(two, 16);
  CHECK(p.placements[1].x == 8);
  CHECK(p.placements[1].y == 0);
  CHECK(p.height == 8);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(1, 9);
  std::vector<std::pair<int32_t, int32_t>> many;
  for (int i = 0; i < 60; ++i) many.push_back({d(rng), d(rng)});
  p = pack_patches(many, 16, 1, 16);
  CHECK(p.height > 16);
  std::vector<int> cover(size_t(16 * p.height), 0);
  for (size_t i = 0; i < many.size(); ++i)
    for (int y = 0; y < many[i].second; ++y)
      for (int x = 0; x < many[i].first; ++x) cover[size_t((p.placements[i].y + y) * 16 + p.placements[i].x + x)]++;
  CHECK(*std::max_element(cover.begin(), cover.end()) == 1);
  std::vector<std::pair<int32_t, int32_t>> wide{{20, 2}};
  CHECK_THROWS_AS(pack_patches(wide, 16), ConfigError);
}

TEST_CASE("push-pull padding") {
  RgbImage full(5, 4);
  for (size_t i = 0; i < full.data.size(); ++i) full.data[i] = uint8_t(i * 7);
  CHECK(pushpull_pad(full, all_occupied(full)) == full);
  RgbImage one(9, 7);
  std::vector<uint8_t> occ(63, 0);
  occ[20] = 1;
  one.data[60] = one.data[61] = one.data[62] = 100;
  for (uint8_t v : pushpull_pad(one, occ).data) CHECK(v == 100);
  RgbImage empty(3, 3);
  CHECK(pushpull_pad(empty, std::vector<uint8_t>(9, 0)) == empty);
  std::mt19937_64 rng(5);
  RgbImage r(20, 13);
  std::vector<uint8_t> ro(260);
  for (auto& v : r.data) v = uint8_t(rng());
  for (auto& o : ro) o = rng() % 3 == 0;
  auto padded = pushpull_pad(r, ro);
  for (size_t k = 0; k < ro.size(); ++k)
    if (ro[k])
      for (size_t c = 0; c < 3; ++c) REQUIRE(padded.data[k * 3 + c] == r.data[k * 3 + c]);
}

TEST_CASE("differential far layer") {
  RgbImage near(64, 64, 50);
  auto occ = all_occupied(near);
  auto d = diff_far_layer(near, near, occ);
  CHECK(d.image.empty());
  RgbImage far = near;
  far.px(30, 40)[0] = 60;
  far.px(30, 40)[1] = 60;
  far.px(30, 40)[2] = 60;
  d = diff_far_layer(near, far, occ);
  CHECK(d.image.width == 1);
  CHECK(d.image.height == 1);
  CHECK(d.x0 == 30);
  CHECK(d.y0 == 40);
  CHECK(d.image.data == std::vector<uint8_t>{138, 138, 138});
  CHECK(undiff_far_layer(near, d) == far);
  RgbImage hi(1, 1, 250), lo(1, 1, 50);
  d = diff_far_layer(hi, lo, std::vector<uint8_t>{1});
  CHECK(d.image.data[0] == 0);
  CHECK(d.clamps == 3);
}

TEST_CASE("builtin image codec round trip") {
  BuiltinImageCodec c;
  RgbImage im(17, 5);
  std::mt19937_64 rng(6);
  for (auto& v : im.data) v = uint8_t(rng());
  CHECK(c.decode(c.encode(im, 0), 0) == im);
  CHECK_THROWS_AS(c.decode({1, 2, 3}, 0), DecodeError);
  CHECK_THROWS_AS(make_image_codec("jpeg"), ConfigError);
}

TEST_CASE("exec image codec") {
  const auto dir = std::filesystem::temp_directory_path() / "jpcc_exec_test";
  std::filesystem::create_directories(dir);
  const auto script = dir / "cat.sh";
  {
    std::ofstream f(script);
    f << "#!/bin/sh\ncat\n";
  }
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  auto codec = make_image_codec("exec:" + script.string());
  RgbImage im(4, 3, 77);
  CHECK(codec->decode(codec->encode(im, 1), 1) == im);
  auto bad = make_image_codec("exec:" + (dir / "missing").string());
  CHECK_THROWS_AS(bad->encode(im, 0), EncodeError);
}

TEST_CASE("colour identity chain") {
  BuiltinImageCodec codec;
  ColorConfig cfg;
  cfg.pack_width = 128;
  for (uint64_t s = 0; s < 3; ++s) {
    const PointCloud pc = colored_sheet(s, 48);
    ColorStats st;
    auto sec = encode_color(pc.coords, 1, pc, codec, 3, cfg, &st);
    const auto bytes = sec.serialize();
    ByteReader r(bytes);
    const auto parsed = ColorSection::parse(r);
    CHECK(parsed == sec);
    ColorStats ds;
    const auto colors = decode_color(parsed, pc.coords, codec, cfg, &ds);
    const auto ps = build_projection(pc.coords, cfg);
    CHECK(ps.occupancy == build_projection(pc.coords, cfg).occupancy);
    for (size_t i = 0; i < pc.size(); ++i)
      if (ps.layer[i] != Layer::Unprojected) REQUIRE(colors[i] == (*pc.colors)[i]);
    CHECK(st.unprojected_fraction() < 0.05);
    CHECK(ds.near == st.near);
  }
  PointCloud bare;
  bare.coords = {{0, 0, 0}};
  CHECK_THROWS_AS(encode_color(bare.coords, 1, bare, codec, 0), DomainError);
}
