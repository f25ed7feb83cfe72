// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "jpcc/kdtree.hpp"
#include "jpcc/normals.hpp"

namespace jpcc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double one_way_d1(std::span<const Vec3i> from, const KdTree& to) {
  double s = 0;
  for (const auto& c : from) s += to.nearest(to_vec3d(c)).second;
  return s / double(from.size());
}

void require_nonempty(std::span<const Vec3i> a, std::span<const Vec3i> b) {
  if (a.empty() || b.empty()) throw DomainError("distortion metric on an empty cloud");
}

}  // namespace

double geometry_peak(int bit_depth, PeakConvention peak) {
  if (bit_depth < 1 || bit_depth > 30) throw DomainError("bit depth out of range");
  const double p = std::ldexp(1.0, bit_depth) - 1;
  return peak == PeakConvention::ThreeP2 ? 3 * p * p : p * p;
}

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0) return kInf;
  return 10 * std::log10(peak / mse);
}

double d1_mse(std::span<const Vec3i> a, std::span<const Vec3i> b) {
  require_nonempty(a, b);
  const KdTree ta = KdTree::from_coords(a), tb = KdTree::from_coords(b);
  return std::max(one_way_d1(a, tb), one_way_d1(b, ta));
}

double d2_mse(std::span<const Vec3i> decoded, std::span<const Vec3i> original,
              std::span<const Vec3d> normals) {
  require_nonempty(decoded, original);
  if (normals.size() != original.size()) throw ShapeError("one normal per original point required");
  const KdTree td = KdTree::from_coords(decoded), to = KdTree::from_coords(original);
  auto proj2 = [](const Vec3d& e, const Vec3d& n) {
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    const double d = len > 0 ? (e[0] * n[0] + e[1] * n[1] + e[2] * n[2]) / len : 0;
    return d * d;
  };
  double ab = 0;
  for (const auto& c : decoded) {
    const Vec3d p = to_vec3d(c);
    const size_t j = to.nearest(p).first;
    const Vec3d q = to.point(j);
    ab += proj2({p[0] - q[0], p[1] - q[1], p[2] - q[2]}, normals[j]);
  }
  double ba = 0;
  for (size_t i = 0; i < original.size(); ++i) {
    const Vec3d p = to_vec3d(original[i]);
    const Vec3d q = td.point(td.nearest(p).first);
    ba += proj2({p[0] - q[0], p[1] - q[1], p[2] - q[2]}, normals[i]);
  }
  return std::max(ab / double(decoded.size()), ba / double(original.size()));
}

double psnr_d1(const PointCloud& decoded, const PointCloud& original, int bit_depth,
               PeakConvention peak) {
  return psnr_from_mse(d1_mse(decoded.coords, original.coords), geometry_peak(bit_depth, peak));
}

double psnr_d2(const PointCloud& decoded, const PointCloud& original, int bit_depth, bool estimate,
               PeakConvention peak) {
  std::vector<Vec3d> normals;
  if (original.normals) normals = *original.normals;
  else if (estimate) normals = estimate_normals(original.coords);
  else throw DomainError("D2 needs normals of the original cloud");
  return psnr_from_mse(d2_mse(decoded.coords, original.coords, normals),
                       geometry_peak(bit_depth, peak));
}

Vec3d rgb_to_yuv(const Rgb& c) {
  const double r = c.r, g = c.g, b = c.b;
  const double y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
  return {y, (b - y) / 1.8556 + 128.0, (r - y) / 1.5748 + 128.0};
}

double combine_yuv(double y, double u, double v) { return (6 * y + u + v) / 8; }

ColorPsnr psnr_color(const PointCloud& decoded, const PointCloud& original) {
  if (!decoded.colors || !original.colors) throw DomainError("colour PSNR needs coloured clouds");
  require_nonempty(decoded.coords, original.coords);
  const KdTree td = KdTree::from_coords(decoded.coords), to = KdTree::from_coords(original.coords);
  auto one_way = [](const PointCloud& from, const KdTree& t, const PointCloud& to_pc) {
    Vec3d s{0, 0, 0};
    for (size_t i = 0; i < from.size(); ++i) {
      const size_t j = t.nearest(to_vec3d(from.coords[i])).first;
      const Vec3d a = rgb_to_yuv((*from.colors)[i]), b = rgb_to_yuv((*to_pc.colors)[j]);
      for (size_t k = 0; k < 3; ++k) s[k] += (a[k] - b[k]) * (a[k] - b[k]);
    }
    for (auto& v : s) v /= double(from.size());
    return s;
  };
  const Vec3d ab = one_way(decoded, to, original), ba = one_way(original, td, decoded);
  ColorPsnr out;
  out.y = psnr_from_mse(std::max(ab[0], ba[0]), 255.0 * 255.0);
  out.u = psnr_from_mse(std::max(ab[1], ba[1]), 255.0 * 255.0);
  out.v = psnr_from_mse(std::max(ab[2], ba[2]), 255.0 * 255.0);
  out.yuv = combine_yuv(out.y, out.u, out.v);
  return out;
}

// ---------------------------------------------------------------- density

std::vector<double> local_densities(std::span<const Vec3i> coords) {
  if (coords.size() < 13) throw DomainError("density needs at least 13 points");
  const KdTree t = KdTree::from_coords(coords);
  std::vector<double> d(coords.size());
  for (size_t i = 0; i < coords.size(); ++i) {
    const Vec3d p = to_vec3d(coords[i]);
    const double r2 = t.knn(p, 13).back().second;  // 12th neighbour besides the point
    const double r = std::sqrt(r2);
    d[i] = double(t.count_within(p, r2)) / (4.0 / 3.0 * std::numbers::pi * r * r * r);
  }
  return d;
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * double(sorted.size() - 1);
  const auto lo = size_t(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double density_factor(std::span<const Vec3i> coords) {
  auto d = local_densities(coords);
  std::sort(d.begin(), d.end());
  return -std::log10(quantile(d, 0.5));
}

DensityClass classify_density(double f) {
  if (f < 1) return DensityClass::Solid;
  if (f > 2) return DensityClass::Sparse;
  return DensityClass::Dense;
}

const char* to_string(DensityClass c) {
  switch (c) {
    case DensityClass::Solid: return "solid";
    case DensityClass::Dense: return "dense";
    case DensityClass::Sparse: return "sparse";
  }
  return "?";
}

double homogeneity_factor(std::vector<double> d) {
  if (d.empty()) throw DomainError("homogeneity of an empty density list");
  std::sort(d.begin(), d.end());
  const double range = d.back() - d.front();
  if (range <= 0) return 0;
  return 100 * (quantile(d, 0.75) - quantile(d, 0.25)) / range;
}

double homogeneity_factor(std::span<const Vec3i> coords) {
  return homogeneity_factor(local_densities(coords));
}

bool is_homogeneous(double f) { return f < 11.6; }

// ---------------------------------------------------------------- hull

namespace {

using I64 = int64_t;

I64 orient(const Vec3i& a, const Vec3i& b, const Vec3i& c, const Vec3i& p) {
  const I64 bx = b.x - a.x, by = b.y - a.y, bz = b.z - a.z;
  const I64 cx = c.x - a.x, cy = c.y - a.y, cz = c.z - a.z;
  const I64 px = p.x - a.x, py = p.y - a.y, pz = p.z - a.z;
  return bx * (cy * pz - cz * py) - by * (cx * pz - cz * px) + bz * (cx * py - cy * px);
}

bool collinear(const Vec3i& a, const Vec3i& b, const Vec3i& c) {
  const I64 bx = b.x - a.x, by = b.y - a.y, bz = b.z - a.z;
  const I64 cx = c.x - a.x, cy = c.y - a.y, cz = c.z - a.z;
  return by * cz - bz * cy == 0 && bz * cx - bx * cz == 0 && bx * cy - by * cx == 0;
}

}  // namespace

double convex_hull_volume(std::span<const Vec3i> input) {
  // Only the extremes of each (x, y) column can be hull vertices.
  std::map<std::pair<int32_t, int32_t>, std::pair<int32_t, int32_t>> col;
  for (const auto& p : input) {
    auto [it, fresh] = col.try_emplace({p.x, p.y}, p.z, p.z);
    if (!fresh) {
      it->second.first = std::min(it->second.first, p.z);
      it->second.second = std::max(it->second.second, p.z);
    }
  }
  std::vector<Vec3i> pts;
  for (const auto& [xy, zz] : col) {
    pts.push_back({xy.first, xy.second, zz.first});
    if (zz.second != zz.first) pts.push_back({xy.first, xy.second, zz.second});
  }
  if (pts.size() < 4) return 0;
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::shuffle(pts.begin(), pts.end(), rng);

  // Initial tetrahedron.
  size_t i1 = 1, i2 = 0, i3 = 0;
  while (i1 < pts.size() && pts[i1] == pts[0]) ++i1;
  if (i1 == pts.size()) return 0;
  for (i2 = 1; i2 < pts.size() && collinear(pts[0], pts[i1], pts[i2]); ++i2) {}
  if (i2 == pts.size()) return 0;
  for (i3 = 1; i3 < pts.size() && orient(pts[0], pts[i1], pts[i2], pts[i3]) == 0; ++i3) {}
  if (i3 == pts.size()) return 0;
  {
    std::vector<Vec3i> ordered{pts[0], pts[i1], pts[i2], pts[i3]};
    for (size_t i = 1; i < pts.size(); ++i)
      if (i != i1 && i != i2 && i != i3) ordered.push_back(pts[i]);
    pts.swap(ordered);
  }

  struct Face {
    uint32_t a, b, c;
  };
  std::vector<Face> faces;
  auto add = [&](uint32_t a, uint32_t b, uint32_t c, uint32_t inside) {
    if (orient(pts[a], pts[b], pts[c], pts[inside]) > 0) std::swap(b, c);
    faces.push_back({a, b, c});
  };
  add(0, 1, 2, 3);
  add(0, 1, 3, 2);
  add(0, 2, 3, 1);
  add(1, 2, 3, 0);

  std::set<std::pair<uint32_t, uint32_t>> edges;
  std::vector<Face> keep;
  for (uint32_t p = 4; p < pts.size(); ++p) {
    edges.clear();
    keep.clear();
    for (const Face& f : faces) {
      if (orient(pts[f.a], pts[f.b], pts[f.c], pts[p]) > 0) {
        edges.insert({f.a, f.b});
        edges.insert({f.b, f.c});
        edges.insert({f.c, f.a});
      } else {
        keep.push_back(f);
      }
    }
    if (edges.empty()) continue;
    for (const auto& [u, v] : edges)
      if (!edges.count({v, u})) keep.push_back({u, v, p});
    faces.swap(keep);
  }
  I64 six = 0;
  for (const Face& f : faces) six += orient({0, 0, 0}, pts[f.a], pts[f.b], pts[f.c]);
  return double(six) / 6.0;
}

double color_gamut_volume(const PointCloud& pc) {
  if (!pc.colors) throw DomainError("colour gamut needs a coloured cloud");
  std::vector<Vec3i> rgb;
  rgb.reserve(pc.colors->size());
  for (const auto& c : *pc.colors) rgb.push_back({c.r, c.g, c.b});
  return convex_hull_volume(rgb) / (255.0 * 255.0 * 255.0) * 100.0;
}

// ---------------------------------------------------------------- Bjontegaard

namespace {

struct Poly {
  Eigen::VectorXd c;  // ascending powers of (x - shift)
  double shift = 0;

  double integral(double lo, double hi) const {
    double s = 0;
    for (Eigen::Index k = 0; k < c.size(); ++k)
      s += c(k) / double(k + 1) *
           (std::pow(hi - shift, double(k + 1)) - std::pow(lo - shift, double(k + 1)));
    return s;
  }
};

Poly fit(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = Eigen::Index(x.size());
  const Eigen::Index deg = std::min<Eigen::Index>(3, n - 1);
  Poly p;
  for (double v : x) p.shift += v;
  p.shift /= double(n);
  Eigen::MatrixXd A(n, deg + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k <= deg; ++k) A(i, k) = std::pow(x[size_t(i)] - p.shift, double(k));
    b(i) = y[size_t(i)];
  }
  p.c = A.colPivHouseholderQr().solve(b);
  return p;
}

void check_curve(const RdCurve& c) {
  if (c.size() < 2) throw DomainError("BD metrics need at least 2 RD points per curve");
  for (const auto& p : c)
    if (!(p.rate > 0) || !std::isfinite(p.quality))
      throw DomainError("RD points need positive rates and finite quality");
}

// Average of (f_test - f_ref) over the common x range, with f fitted as a
// function of x.
double bd_average(const std::vector<double>& xr, const std::vector<double>& yr,
                  const std::vector<double>& xt, const std::vector<double>& yt) {
  const double lo = std::max(*std::min_element(xr.begin(), xr.end()),
                             *std::min_element(xt.begin(), xt.end()));
  const double hi = std::min(*std::max_element(xr.begin(), xr.end()),
                             *std::max_element(xt.begin(), xt.end()));
  if (!(hi > lo)) throw DomainError("RD curves do not overlap");
  const Poly pr = fit(xr, yr), pt = fit(xt, yt);
  return (pt.integral(lo, hi) - pr.integral(lo, hi)) / (hi - lo);
}

}  // namespace

double bd_rate(const RdCurve& ref, const RdCurve& test) {
  check_curve(ref);
  check_curve(test);
  std::vector<double> qr, lr, qt, lt;
  for (const auto& p : ref) {
    qr.push_back(p.quality);
    lr.push_back(std::log10(p.rate));
  }
  for (const auto& p : test) {
    qt.push_back(p.quality);
    lt.push_back(std::log10(p.rate));
  }
  return (std::pow(10.0, bd_average(qr, lr, qt, lt)) - 1) * 100;
}

double bd_psnr(const RdCurve& ref, const RdCurve& test) {
  check_curve(ref);
  check_curve(test);
  std::vector<double> qr, lr, qt, lt;
  for (const auto& p : ref) {
    qr.push_back(p.quality);
    lr.push_back(std::log10(p.rate));
  }
  for (const auto& p : test) {
    qt.push_back(p.quality);
    lt.push_back(std::log10(p.rate));
  }
  return bd_average(lr, qr, lt, qt);
}

RateReport rate_report(size_t geometry_bytes, size_t total_bytes, size_t original_points) {
  if (original_points == 0) throw DomainError("rate of an empty cloud");
  return {8.0 * double(geometry_bytes) / double(original_points),
          8.0 * double(total_bytes) / double(original_points)};
}

std::string format_report(const std::vector<std::pair<std::string, ReportValue>>& fields,
                          const std::string& format) {
  auto text = [](const ReportValue& rv) {
    if (const auto* str = std::get_if<std::string>(&rv)) return *str;
    const double v = std::get<double>(rv);
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
  };
  if (format == "json") {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : fields) {
      const auto* d = std::get_if<double>(&v);
      if (d && std::isfinite(*d)) j[k] = *d;
      else j[k] = text(v);
    }
    return j.dump(2) + "\n";
  }
  if (format == "csv") {
    std::string head, row;
    for (size_t i = 0; i < fields.size(); ++i) {
      head += (i ? "," : "") + fields[i].first;
      row += (i ? "," : "") + text(fields[i].second);
    }
    return head + "\n" + row + "\n";
  }
  if (format == "text") {
    std::string out;
    for (const auto& [k, v] : fields) out += k + " " + text(v) + "\n";
    return out;
  }
  throw ConfigError("unknown report format '" + format + "' (text, json, csv)");
}

std::string format_report(const std::vector<std::pair<std::string, double>>& fields,
                          const std::string& format) {
  std::vector<std::pair<std::string, ReportValue>> f(fields.begin(), fields.end());
  return format_report(f, format);
}

}  // namespace jpcc
