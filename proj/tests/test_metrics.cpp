// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "jpcc/kdtree.hpp"
#include "jpcc/metrics.hpp"
#include "jpcc/normals.hpp"

using namespace jpcc;

namespace {

PointCloud cloud(std::vector<Vec3i> c) {
  PointCloud pc;
  pc.coords = std::move(c);
  pc.bit_depth = 10;
  return pc;
}

std::vector<Vec3i> grid(int n, int step) {
  std::vector<Vec3i> g;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) g.push_back({x * step, y * step, z * step});
  return g;
}

RdCurve curve() { return {{0.1, 30}, {0.2, 33}, {0.4, 36.5}, {0.8, 39}}; }

}  // namespace

TEST_CASE("kd-tree agrees with brute force") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(0, 50);
  std::vector<Vec3i> pts;
  for (int i = 0; i < 800; ++i) pts.push_back({d(rng), d(rng), d(rng)});
  const KdTree t = KdTree::from_coords(pts);
  for (int q = 0; q < 200; ++q) {
    const Vec3d p{double(d(rng)), double(d(rng)), double(d(rng))};
    std::vector<std::pair<double, size_t>> all;
    for (size_t i = 0; i < pts.size(); ++i) all.push_back({dist2(p, to_vec3d(pts[i])), i});
    std::sort(all.begin(), all.end());
    const auto nn = t.knn(p, 10);
    REQUIRE(nn.size() == 10);
    for (size_t i = 0; i < 10; ++i) {
      CHECK(nn[i].first == all[i].second);
      CHECK(nn[i].second == all[i].first);
    }
    const double r2 = all[25].first;
    size_t within = 0;
    for (const auto& a : all) within += a.first <= r2;
    CHECK(t.count_within(p, r2) == within);
  }
}

TEST_CASE("D1 fixtures") {
  auto a = cloud({{0, 0, 0}}), b = cloud({{1, 0, 0}});
  CHECK(psnr_d1(a, b, 10) == doctest::Approx(10 * std::log10(3.0 * 1023 * 1023)));
  CHECK(psnr_d1(a, b, 10) == doctest::Approx(64.97).epsilon(1e-4));
  CHECK(std::isinf(psnr_d1(a, a, 10)));
  auto c = cloud({{0, 0, 0}, {5, 5, 5}, {9, 1, 2}});
  auto d = cloud({{1, 0, 0}, {5, 6, 5}});
  CHECK(psnr_d1(c, d, 10) == psnr_d1(d, c, 10));
  CHECK(psnr_d1(a, b, 10, PeakConvention::P2) == doctest::Approx(10 * std::log10(1023.0 * 1023)));
  CHECK_THROWS_AS(psnr_d1(cloud({}), a, 10), DomainError);
}

TEST_CASE("D2 fixtures") {
  auto orig = cloud({{0, 0, 0}});
  orig.normals = std::vector<Vec3d>{{0, 0, 1}};
  auto tangential = cloud({{1, 0, 0}});
  CHECK(std::isinf(psnr_d2(tangential, orig, 10)));
  auto normal = cloud({{0, 0, 1}});
  CHECK(psnr_d2(normal, orig, 10) == doctest::Approx(psnr_d1(normal, orig, 10)));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(0, 30);
  for (int t = 0; t < 10; ++t) {
    std::vector<Vec3i> a, b;
    for (int i = 0; i < 50; ++i) a.push_back({d(rng), d(rng), d(rng) / 10});
    for (int i = 0; i < 50; ++i) b.push_back({d(rng), d(rng), d(rng) / 10});
    sort_unique(a);
    sort_unique(b);
    CHECK(psnr_d2(cloud(a), cloud(b), 10) >= psnr_d1(cloud(a), cloud(b), 10) - 1e-9);
  }
  auto bare = cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  CHECK_THROWS_AS(psnr_d2(bare, bare, 10, false), DomainError);
}

TEST_CASE("colour PSNR") {
  CHECK(combine_yuv(40, 30, 30) == 37.5);
  auto a = cloud({{0, 0, 0}, {1, 0, 0}});
  a.colors = std::vector<Rgb>{{10, 20, 30}, {200, 100, 50}};
  auto b = a;
  auto p = psnr_color(a, b);
  CHECK(std::isinf(p.y));
  CHECK(std::isinf(p.yuv));
  // Pure grey shift changes luminance only.
  auto g = cloud({{0, 0, 0}});
  g.colors = std::vector<Rgb>{{100, 100, 100}};
  auto h = g;
  (*h.colors)[0] = {110, 110, 110};
  p = psnr_color(g, h);
  CHECK(std::isfinite(p.y));
  CHECK(std::isinf(p.u));
  CHECK(std::isinf(p.v));
  CHECK_THROWS_AS(psnr_color(cloud({{0, 0, 0}}), g), DomainError);
}

TEST_CASE("density and homogeneity") {
  const auto g = grid(11, 1);
  const auto dens = local_densities(g);
  // Interior point (5,5,5): 19 points in a radius sqrt(2) sphere.
  const size_t centre = 5 * 121 + 5 * 11 + 5;
  CHECK(dens[centre] == doctest::Approx(19 / (4.0 / 3.0 * M_PI * std::pow(2.0, 1.5))));
  const double f = density_factor(g);
  CHECK(f == doctest::Approx(-0.205).epsilon(0.01));
  CHECK(classify_density(f) == DensityClass::Solid);
  const double f10 = density_factor(grid(11, 10));
  CHECK(f10 == doctest::Approx(f + 3).epsilon(1e-9));
  CHECK(classify_density(f10) == DensityClass::Sparse);
  CHECK(classify_density(0.379) == DensityClass::Solid);
  CHECK(classify_density(1.314) == DensityClass::Dense);
  CHECK(classify_density(2.424) == DensityClass::Sparse);

  CHECK(homogeneity_factor(std::vector<double>(20, 3.0)) == 0);
  CHECK(is_homogeneous(6.897));
  CHECK(!is_homogeneous(37.415));
  std::vector<double> v{1, 2, 4, 8, 9, 30};
  std::vector<double> w;
  for (double x : v) w.push_back(x * 7.5);
  CHECK(homogeneity_factor(v) == doctest::Approx(homogeneity_factor(w)));
  // Translation invariance.
  std::vector<Vec3i> shifted;
  for (const auto& c : g) shifted.push_back(c + Vec3i{100, 7, 3});
  CHECK(homogeneity_factor(shifted) == doctest::Approx(homogeneity_factor(g)));
  CHECK_THROWS_AS(density_factor(grid(2, 1)), DomainError);
}

TEST_CASE("colour gamut") {
  PointCloud pc = cloud({{0, 0, 0}});
  pc.colors = std::vector<Rgb>{{5, 5, 5}};
  CHECK(color_gamut_volume(pc) == 0);
  PointCloud cube;
  cube.colors = std::vector<Rgb>{};
  for (int i = 0; i < 8; ++i) {
    cube.coords.push_back({i, 0, 0});
    cube.colors->push_back({uint8_t(i & 1 ? 255 : 0), uint8_t(i & 2 ? 255 : 0), uint8_t(i & 4 ? 255 : 0)});
  }
  CHECK(color_gamut_volume(cube) == doctest::Approx(100));
  PointCloud plane;
  plane.colors = std::vector<Rgb>{};
  for (int i = 0; i < 50; ++i) {
    plane.coords.push_back({i, 0, 0});
    plane.colors->push_back({uint8_t(i * 5), uint8_t(255 - i * 5), 40});
  }
  CHECK(color_gamut_volume(plane) == 0);

  // Random points against an exact-volume oracle: a tetrahedron plus
  // interior noise.
  std::vector<Vec3i> tet{{0, 0, 0}, {60, 0, 0}, {0, 60, 0}, {0, 0, 60}};
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(0, 60);
  for (int i = 0; i < 2000; ++i) {
    Vec3i p{d(rng), d(rng), d(rng)};
    if (p.x + p.y + p.z <= 60) tet.push_back(p);
  }
  CHECK(convex_hull_volume(tet) == doctest::Approx(60.0 * 60 * 60 / 6));
  // Random cloud: the hull contains every point, and the volume is bounded
  // by the bounding box.
  std::vector<Vec3i> r;
  for (int i = 0; i < 3000; ++i) r.push_back({d(rng), d(rng), d(rng)});
  const double vr = convex_hull_volume(r);
  CHECK(vr > 0.8 * 60 * 60 * 60);
  CHECK(vr <= 60.0 * 60 * 60);
}

TEST_CASE("Bjontegaard deltas") {
  const auto a = curve();
  CHECK(bd_rate(a, a) == doctest::Approx(0).epsilon(1e-12));
  CHECK(bd_psnr(a, a) == doctest::Approx(0).epsilon(1e-12));
  RdCurve b = a, c = a;
  for (auto& p : b) p.rate *= 0.9;
  for (auto& p : c) p.quality += 1;
  CHECK(bd_rate(a, b) == doctest::Approx(-10).epsilon(1e-6));
  CHECK(bd_psnr(a, c) == doctest::Approx(1).epsilon(1e-9));
  CHECK(bd_rate(a, b) == doctest::Approx(-bd_rate(b, a)).epsilon(0.15));
  RdCurve far{{10, 60}, {20, 61}};
  CHECK_THROWS_AS(bd_rate(a, far), DomainError);
}

TEST_CASE("normals") {
  std::vector<Vec3i> plane;
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 10; ++y) plane.push_back({x, y, 0});
  for (const auto& n : estimate_normals(plane, 8)) {
    CHECK(std::abs(n[2]) == doctest::Approx(1));
    CHECK(n[0] * n[0] + n[1] * n[1] + n[2] * n[2] == doctest::Approx(1));
  }
  // Sphere of radius 60, sparsely sampled so that a 32-neighbourhood spans
  // enough curvature for the centroid rule to beat voxel rounding.
  std::set<Vec3i> shell;
  const double R = 60;
  for (int i = 0; i < 1500; ++i) {
    const double th = std::acos(1 - 2 * (i + 0.5) / 1500), ph = i * 2.399963;
    shell.insert({int(std::lround(R * std::sin(th) * std::cos(ph))),
                  int(std::lround(R * std::sin(th) * std::sin(ph))),
                  int(std::lround(R * std::cos(th)))});
  }
  std::vector<Vec3i> s(shell.begin(), shell.end());
  const auto ns = estimate_normals(s, 32);
  size_t bad = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double len = std::sqrt(double(s[i].x) * s[i].x + double(s[i].y) * s[i].y + double(s[i].z) * s[i].z);
    const double cosang = (ns[i][0] * s[i].x + ns[i][1] * s[i].y + ns[i][2] * s[i].z) / len;
    bad += cosang < std::cos(15 * M_PI / 180);
  }
  CHECK(bad == 0);
  // k larger than the cloud.
  std::vector<Vec3i> tri{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const auto nt = estimate_normals(tri, 50);
  CHECK(std::abs(nt[0][2]) == doctest::Approx(1));
  std::vector<Vec3i> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK(estimate_normals(line, 3)[1] == Vec3d{0, 0, 1});
}

TEST_CASE("reports") {
  auto r = rate_report(100, 150, 400);
  CHECK(r.geometry_bpp == 2.0);
  CHECK(r.total_bpp == 3.0);
  const std::vector<std::pair<std::string, double>> fields{{"bpp", 0.5}, {"d1", INFINITY}};
  CHECK(format_report(fields, "csv") == "bpp,d1\n0.5,inf\n");
  CHECK(format_report(fields, "json").find("\"inf\"") != std::string::npos);
  CHECK_THROWS_AS(format_report(fields, "xml"), ConfigError);
}
