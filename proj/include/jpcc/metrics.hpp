// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "jpcc/point_cloud.hpp"

namespace jpcc {

// Geometry PSNR peak: 3 (2^d - 1)^2 by default, (2^d - 1)^2 for cross-checks.
enum class PeakConvention { ThreeP2, P2 };

double geometry_peak(int bit_depth, PeakConvention peak = PeakConvention::ThreeP2);
// +inf for zero MSE.
double psnr_from_mse(double mse, double peak);

// Symmetric point-to-point MSE (max over both directions).
double d1_mse(std::span<const Vec3i> a, std::span<const Vec3i> b);
// Point-to-plane MSE with the normals of `original`.
double d2_mse(std::span<const Vec3i> decoded, std::span<const Vec3i> original,
              std::span<const Vec3d> original_normals);

double psnr_d1(const PointCloud& decoded, const PointCloud& original, int bit_depth,
               PeakConvention peak = PeakConvention::ThreeP2);
// Normals come from `original.normals`, else are estimated when allowed.
double psnr_d2(const PointCloud& decoded, const PointCloud& original, int bit_depth,
               bool estimate = true, PeakConvention peak = PeakConvention::ThreeP2);

// BT.709 full range, U and V offset by 128.
Vec3d rgb_to_yuv(const Rgb& c);

struct ColorPsnr {
  double y = 0, u = 0, v = 0;
  double yuv = 0;
};
double combine_yuv(double y, double u, double v);
ColorPsnr psnr_color(const PointCloud& decoded, const PointCloud& original);

// Points within the 12-NN radius (centre and boundary included) over the
// sphere volume, per point.
std::vector<double> local_densities(std::span<const Vec3i> coords);
double density_factor(std::span<const Vec3i> coords);
enum class DensityClass { Solid, Dense, Sparse };
DensityClass classify_density(double factor);
const char* to_string(DensityClass c);
double homogeneity_factor(std::span<const Vec3i> coords);
double homogeneity_factor(std::vector<double> densities);
bool is_homogeneous(double factor);

// Convex hull volume of the colours as a percentage of the RGB cube.
double convex_hull_volume(std::span<const Vec3i> points);
double color_gamut_volume(const PointCloud& pc);

struct RdPoint {
  double rate = 0;
  double quality = 0;
};
using RdCurve = std::vector<RdPoint>;

// Average rate difference of `test` against `reference` in percent.
double bd_rate(const RdCurve& reference, const RdCurve& test);
// Average quality difference in dB.
double bd_psnr(const RdCurve& reference, const RdCurve& test);

struct RateReport {
  double geometry_bpp = 0;
  double total_bpp = 0;
};
RateReport rate_report(size_t geometry_bytes, size_t total_bytes, size_t original_points);

// Flat key/value report as "json", "csv" (header line plus one row) or
// "text" (one "key value" line each).
using ReportValue = std::variant<double, std::string>;
std::string format_report(const std::vector<std::pair<std::string, ReportValue>>& fields,
                          const std::string& format);
std::string format_report(const std::vector<std::pair<std::string, double>>& fields,
                          const std::string& format);

}  // namespace jpcc
