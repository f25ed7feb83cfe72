// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/color.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "jpcc/kdtree.hpp"
#include "jpcc/normals.hpp"

namespace jpcc {

// ---------------------------------------------------------------- recolour

std::vector<Rgb> recolor(std::span<const Vec3i> reference, std::span<const Rgb> ref_colors,
                         std::span<const Vec3i> target, size_t neighbours) {
  if (reference.empty()) throw DomainError("recolouring needs a non-empty reference");
  if (ref_colors.size() != reference.size()) throw ShapeError("one colour per reference point");
  const KdTree tree = KdTree::from_coords(reference);
  std::vector<Rgb> out(target.size());
  for (size_t t = 0; t < target.size(); ++t) {
    const Vec3d q = to_vec3d(target[t]);
    const auto nn = tree.knn(q, std::max<size_t>(neighbours, 1));
    if (nn[0].second == 0 || nn.size() == 1) {
      out[t] = ref_colors[nn[0].first];
      continue;
    }
    const auto m = Eigen::Index(nn.size());
    Eigen::MatrixXd phi(m, m);
    Eigen::MatrixXd f(m, 3);
    Eigen::RowVectorXd k(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec3d& pi = tree.point(nn[size_t(i)].first);
      for (Eigen::Index j = 0; j < m; ++j)
        phi(i, j) = std::sqrt(dist2(pi, tree.point(nn[size_t(j)].first)));
      const Rgb& c = ref_colors[nn[size_t(i)].first];
      f(i, 0) = c.r;
      f(i, 1) = c.g;
      f(i, 2) = c.b;
      k(i) = std::sqrt(nn[size_t(i)].second);
    }
    Eigen::RowVector3d v;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(phi);
    if (lu.isInvertible()) v = k * lu.solve(f);
    else v = f.colwise().mean();
    auto channel = [](double x) {
      return uint8_t(std::clamp(std::floor(x + 0.5), 0.0, 255.0));
    };
    out[t] = {channel(v(0)), channel(v(1)), channel(v(2))};
  }
  return out;
}

PointCloud recolor(const PointCloud& reference, std::span<const Vec3i> target) {
  if (!reference.colors) throw DomainError("recolouring needs a coloured reference");
  PointCloud out;
  out.coords.assign(target.begin(), target.end());
  out.colors = recolor(reference.coords, *reference.colors, target);
  out.bit_depth = reference.bit_depth;
  return out;
}

PointCloud color_super_resolve(std::span<const Vec3i> decoded, const PointCloud& pre_sr) {
  return recolor(pre_sr, decoded);
}

// ---------------------------------------------------------------- segmentation

Vec3d axis_direction(int c) {
  Vec3d d{0, 0, 0};
  d[size_t(c % 3)] = c < 3 ? 1.0 : -1.0;
  return d;
}

namespace {

double dot(const Vec3d& a, const Vec3d& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

uint8_t best_axis(const Vec3d& n, const double* bonus) {
  uint8_t best = 0;
  double score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < 6; ++c) {
    const double s = dot(n, axis_direction(c)) + (bonus ? bonus[c] : 0.0);
    if (s > score) {
      score = s;
      best = uint8_t(c);
    }
  }
  return best;
}

}  // namespace

std::vector<uint8_t> initial_segmentation(std::span<const Vec3d> normals) {
  std::vector<uint8_t> out(normals.size());
  for (size_t i = 0; i < normals.size(); ++i) out[i] = best_axis(normals[i], nullptr);
  return out;
}

std::vector<uint8_t> refine_segmentation(std::span<const Vec3i> coords,
                                         std::span<const Vec3d> normals,
                                         std::vector<uint8_t> clusters, int iterations, size_t k,
                                         double w) {
  if (coords.size() != normals.size() || coords.size() != clusters.size())
    throw ShapeError("segmentation inputs differ in length");
  if (coords.size() < 2 || k == 0 || iterations <= 0) return clusters;
  const KdTree tree = KdTree::from_coords(coords);
  std::vector<std::vector<uint32_t>> nbr(coords.size());
  for (size_t i = 0; i < coords.size(); ++i) {
    for (const auto& [j, d] : tree.knn(to_vec3d(coords[i]), k + 1))
      if (j != i && nbr[i].size() < k) nbr[i].push_back(uint32_t(j));
  }
  for (int it = 0; it < iterations; ++it) {
    std::vector<uint8_t> next(clusters.size());
    bool changed = false;
    for (size_t i = 0; i < coords.size(); ++i) {
      double bonus[6] = {0, 0, 0, 0, 0, 0};
      for (uint32_t j : nbr[i]) bonus[clusters[j]] += w / double(k);
      next[i] = best_axis(normals[i], bonus);
      changed = changed || next[i] != clusters[i];
    }
    clusters.swap(next);
    if (!changed) break;
  }
  return clusters;
}

// ---------------------------------------------------------------- patches

int32_t patch_depth(const Vec3i& c, int axis) { return axis < 3 ? c[axis] : -c[axis - 3]; }

std::pair<int32_t, int32_t> patch_uv(const Vec3i& c, int axis) {
  switch (axis % 3) {
    case 0: return {c.y, c.z};
    case 1: return {c.x, c.z};
    default: return {c.x, c.y};
  }
}

std::vector<Patch> extract_patches(std::span<const Vec3i> coords, std::span<const uint8_t> clusters) {
  if (coords.size() != clusters.size()) throw ShapeError("one cluster per point required");
  std::unordered_map<Vec3i, uint32_t, Vec3iHash> index;
  index.reserve(coords.size() * 2);
  for (size_t i = 0; i < coords.size(); ++i) index.emplace(coords[i], uint32_t(i));
  std::vector<uint8_t> seen(coords.size(), 0);
  std::vector<Patch> patches;
  std::vector<uint32_t> stack;
  for (size_t s = 0; s < coords.size(); ++s) {
    if (seen[s]) continue;
    Patch p;
    p.axis = clusters[s];
    seen[s] = 1;
    stack.assign(1, uint32_t(s));
    while (!stack.empty()) {
      const uint32_t i = stack.back();
      stack.pop_back();
      p.points.push_back(i);
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            if (!dx && !dy && !dz) continue;
            auto it = index.find(coords[i] + Vec3i{dx, dy, dz});
            if (it == index.end() || seen[it->second] || clusters[it->second] != p.axis) continue;
            seen[it->second] = 1;
            stack.push_back(it->second);
          }
    }
    std::sort(p.points.begin(), p.points.end());
    p.seed = coords[p.points.front()];
    for (uint32_t i : p.points) p.seed = std::min(p.seed, coords[i]);
    patches.push_back(std::move(p));
  }
  std::stable_sort(patches.begin(), patches.end(), [](const Patch& a, const Patch& b) {
    if (a.points.size() != b.points.size()) return a.points.size() > b.points.size();
    return a.seed < b.seed;
  });
  return patches;
}

void project_patch(Patch& p, std::span<const Vec3i> coords, int32_t thickness) {
  int32_t u0 = std::numeric_limits<int32_t>::max(), v0 = u0, u1 = std::numeric_limits<int32_t>::min(),
          v1 = u1;
  for (uint32_t i : p.points) {
    const auto [u, v] = patch_uv(coords[i], p.axis);
    u0 = std::min(u0, u);
    v0 = std::min(v0, v);
    u1 = std::max(u1, u);
    v1 = std::max(v1, v);
  }
  p.u0 = u0;
  p.v0 = v0;
  p.width = u1 - u0 + 1;
  p.height = v1 - v0 + 1;
  const size_t area = size_t(p.width) * size_t(p.height);
  p.near_point.assign(area, -1);
  p.far_point.assign(area, -1);
  p.near_depth.assign(area, std::numeric_limits<int32_t>::max());
  p.far_depth.assign(area, std::numeric_limits<int32_t>::min());
  p.unprojected.clear();
  auto pix = [&](uint32_t i) {
    const auto [u, v] = patch_uv(coords[i], p.axis);
    return size_t(v - v0) * size_t(p.width) + size_t(u - u0);
  };
  for (uint32_t i : p.points) {
    const size_t k = pix(i);
    const int32_t d = patch_depth(coords[i], p.axis);
    if (d < p.near_depth[k]) {
      p.near_depth[k] = d;
      p.near_point[k] = int32_t(i);
    }
  }
  for (uint32_t i : p.points) {
    const size_t k = pix(i);
    const int32_t d = patch_depth(coords[i], p.axis);
    if (int32_t(i) == p.near_point[k] || d - p.near_depth[k] > thickness) continue;
    if (d > p.far_depth[k]) {
      p.far_depth[k] = d;
      p.far_point[k] = int32_t(i);
    }
  }
  for (size_t k = 0; k < area; ++k)
    if (p.near_point[k] >= 0 && p.far_point[k] < 0) p.far_depth[k] = p.near_depth[k];
  for (uint32_t i : p.points) {
    const size_t k = pix(i);
    if (int32_t(i) != p.near_point[k] && int32_t(i) != p.far_point[k]) p.unprojected.push_back(i);
  }
}

// ---------------------------------------------------------------- packing

Packing pack_patches(std::span<const std::pair<int32_t, int32_t>> sizes, int32_t width,
                     int32_t align, int32_t initial_height) {
  if (width < 1 || align < 1) throw ConfigError("packing width and alignment must be positive");
  Packing pk;
  pk.width = width;
  int32_t H = initial_height > 0 ? initial_height : width;
  std::vector<uint8_t> used(size_t(width) * size_t(H), 0);
  int32_t bottom = 0;
  for (const auto& [w, h] : sizes) {
    if (w > width)
      throw ConfigError("patch of width " + std::to_string(w) + " exceeds the packing width " +
                        std::to_string(width));
    if (w < 1 || h < 1) throw DomainError("empty patch box");
    for (;;) {  // until placed; the image height doubles on failure
      bool placed = false;
      for (int32_t y = 0; y + h <= H && !placed; y += align) {
        for (int32_t x = 0; x + w <= width;) {
          int32_t clash = -1;
          for (int32_t r = y; r < y + h && clash < 0; ++r) {
            const uint8_t* row = &used[size_t(r) * size_t(width)];
            for (int32_t c = x + w - 1; c >= x; --c)
              if (row[c]) {
                clash = c;
                break;
              }
          }
          if (clash < 0) {
            for (int32_t r = y; r < y + h; ++r)
              std::fill_n(&used[size_t(r) * size_t(width) + size_t(x)], w, uint8_t(1));
            pk.placements.push_back({x, y});
            bottom = std::max(bottom, y + h);
            placed = true;
            break;
          }
          x = (clash + 1 + align - 1) / align * align;
        }
      }
      if (placed) break;
      if (H > (1 << 24)) throw EncodeError("patch packing does not converge");
      H *= 2;
      used.resize(size_t(width) * size_t(H), 0);
    }
  }
  pk.height = bottom;
  return pk;
}

// ---------------------------------------------------------------- padding

RgbImage pushpull_pad(const RgbImage& im, const std::vector<uint8_t>& occ, int passes) {
  if (occ.size() != size_t(im.width) * size_t(im.height))
    throw ShapeError("occupancy does not match the image size");
  if (std::none_of(occ.begin(), occ.end(), [](uint8_t o) { return o != 0; })) return im;
  struct Level {
    int w, h;
    std::vector<double> v;   // 3 per pixel
    std::vector<uint8_t> o;
  };
  std::vector<Level> pyr;
  pyr.push_back({im.width, im.height, std::vector<double>(im.data.begin(), im.data.end()), occ});
  while (pyr.back().w > 1 || pyr.back().h > 1) {
    const Level& f = pyr.back();
    Level c{(f.w + 1) / 2, (f.h + 1) / 2, {}, {}};
    c.v.assign(size_t(c.w) * size_t(c.h) * 3, 0.0);
    c.o.assign(size_t(c.w) * size_t(c.h), 0);
    for (int y = 0; y < c.h; ++y)
      for (int x = 0; x < c.w; ++x) {
        double s[3] = {0, 0, 0};
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int fx = 2 * x + dx, fy = 2 * y + dy;
            if (fx >= f.w || fy >= f.h) continue;
            const size_t k = size_t(fy) * size_t(f.w) + size_t(fx);
            if (!f.o[k]) continue;
            for (int ch = 0; ch < 3; ++ch) s[ch] += f.v[k * 3 + size_t(ch)];
            ++n;
          }
        if (!n) continue;
        const size_t k = size_t(y) * size_t(c.w) + size_t(x);
        c.o[k] = 1;
        for (int ch = 0; ch < 3; ++ch) c.v[k * 3 + size_t(ch)] = s[ch] / n;
      }
    pyr.push_back(std::move(c));
  }
  for (size_t l = pyr.size() - 1; l-- > 0;) {
    Level& f = pyr[l];
    const Level& c = pyr[l + 1];
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x) {
        const size_t k = size_t(y) * size_t(f.w) + size_t(x);
        if (f.o[k]) continue;
        const size_t kc = size_t(y / 2) * size_t(c.w) + size_t(x / 2);
        for (int ch = 0; ch < 3; ++ch) f.v[k * 3 + size_t(ch)] = c.v[kc * 3 + size_t(ch)];
      }
    if (l > 0) std::fill(f.o.begin(), f.o.end(), uint8_t(1));
  }
  std::vector<double> v = std::move(pyr[0].v);
  for (int pass = 0; pass < passes; ++pass) {
    std::vector<double> nv = v;
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) {
        const size_t k = size_t(y) * size_t(im.width) + size_t(x);
        if (occ[k]) continue;
        double s[3] = {0, 0, 0};
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= im.width || ny >= im.height) continue;
            const size_t kn = size_t(ny) * size_t(im.width) + size_t(nx);
            for (int ch = 0; ch < 3; ++ch) s[ch] += v[kn * 3 + size_t(ch)];
            ++n;
          }
        for (int ch = 0; ch < 3; ++ch) nv[k * 3 + size_t(ch)] = s[ch] / n;
      }
    v.swap(nv);
  }
  RgbImage out = im;
  for (size_t k = 0; k < occ.size(); ++k) {
    if (occ[k]) continue;
    for (int ch = 0; ch < 3; ++ch)
      out.data[k * 3 + size_t(ch)] =
          uint8_t(std::clamp(std::floor(v[k * 3 + size_t(ch)] + 0.5), 0.0, 255.0));
  }
  return out;
}

// ---------------------------------------------------------------- far layer

DiffFarLayer diff_far_layer(const RgbImage& near, const RgbImage& far,
                            const std::vector<uint8_t>& occ) {
  if (near.width != far.width || near.height != far.height ||
      occ.size() != size_t(near.width) * size_t(near.height))
    throw ShapeError("near, far and occupancy sizes differ");
  DiffFarLayer out;
  RgbImage stored(near.width, near.height, 128);
  int32_t x0 = near.width, y0 = near.height, x1 = -1, y1 = -1;
  for (int y = 0; y < near.height; ++y)
    for (int x = 0; x < near.width; ++x) {
      if (!occ[size_t(y) * size_t(near.width) + size_t(x)]) continue;
      bool nonzero = false;
      for (int ch = 0; ch < 3; ++ch) {
        const int r = int(far.px(x, y)[ch]) - int(near.px(x, y)[ch]) + 128;
        if (r < 0 || r > 255) ++out.clamps;
        stored.px(x, y)[ch] = uint8_t(std::clamp(r, 0, 255));
        nonzero = nonzero || stored.px(x, y)[ch] != 128;
      }
      if (nonzero) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  if (x1 < 0) return out;
  out.x0 = x0;
  out.y0 = y0;
  out.image = RgbImage(x1 - x0 + 1, y1 - y0 + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) std::copy_n(stored.px(x, y), 3, out.image.px(x - x0, y - y0));
  return out;
}

RgbImage undiff_far_layer(const RgbImage& near, const DiffFarLayer& d) {
  RgbImage far = near;
  if (d.image.empty()) return far;
  if (d.x0 < 0 || d.y0 < 0 || d.x0 + d.image.width > near.width ||
      d.y0 + d.image.height > near.height)
    throw DecodeError("far layer window lies outside the near image");
  for (int y = 0; y < d.image.height; ++y)
    for (int x = 0; x < d.image.width; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const int v = int(near.px(d.x0 + x, d.y0 + y)[ch]) + int(d.image.px(x, y)[ch]) - 128;
        far.px(d.x0 + x, d.y0 + y)[ch] = uint8_t(std::clamp(v, 0, 255));
      }
  return far;
}

// ---------------------------------------------------------------- projection

size_t ProjectionSet::count(Layer l) const { return size_t(std::count(layer.begin(), layer.end(), l)); }

ProjectionSet build_projection(std::span<const Vec3i> coords, const ColorConfig& cfg) {
  ProjectionSet ps;
  if (coords.empty()) return ps;
  const std::vector<Vec3d> normals =
      coords.size() >= 3 ? estimate_normals(coords, cfg.normal_k)
                         : std::vector<Vec3d>(coords.size(), Vec3d{0, 0, 1});
  auto clusters = refine_segmentation(coords, normals, initial_segmentation(normals),
                                      cfg.refine_iterations, cfg.refine_k, cfg.smoothing_weight);
  ps.patches = extract_patches(coords, clusters);
  std::vector<std::pair<int32_t, int32_t>> sizes;
  for (auto& p : ps.patches) {
    project_patch(p, coords, cfg.surface_thickness);
    sizes.push_back({p.width, p.height});
  }
  ps.packing = pack_patches(sizes, cfg.pack_width, cfg.pack_align);
  const int32_t W = ps.packing.width;
  ps.occupancy.assign(size_t(W) * size_t(ps.packing.height), 0);
  ps.pixel.assign(coords.size(), -1);
  ps.layer.assign(coords.size(), Layer::Unprojected);
  for (size_t pi = 0; pi < ps.patches.size(); ++pi) {
    const Patch& p = ps.patches[pi];
    const Placement pl = ps.packing.placements[pi];
    for (int32_t v = 0; v < p.height; ++v)
      for (int32_t u = 0; u < p.width; ++u) {
        const size_t k = size_t(v) * size_t(p.width) + size_t(u);
        if (p.near_point[k] < 0) continue;
        const int64_t px = int64_t(pl.y + v) * W + (pl.x + u);
        if (ps.occupancy[size_t(px)]) throw IntegrityError("overlapping patch placement");
        ps.occupancy[size_t(px)] = 1;
        ps.pixel[size_t(p.near_point[k])] = px;
        ps.layer[size_t(p.near_point[k])] = Layer::Near;
        if (p.far_point[k] >= 0) {
          ps.pixel[size_t(p.far_point[k])] = px;
          ps.layer[size_t(p.far_point[k])] = Layer::Far;
        }
      }
  }
  return ps;
}

// ---------------------------------------------------------------- section

std::vector<uint8_t> ColorSection::serialize() const {
  ByteWriter w;
  w.u8(color_idx);
  w.str(plugin);
  w.u16(near_width);
  w.u16(near_height);
  w.blob(near_bytes);
  w.u16(far_x);
  w.u16(far_y);
  w.u16(far_width);
  w.u16(far_height);
  w.blob(far_bytes);
  return w.take();
}

ColorSection ColorSection::parse(ByteReader& r) {
  ColorSection s;
  s.color_idx = r.u8();
  s.plugin = r.str();
  s.near_width = r.u16();
  s.near_height = r.u16();
  auto nb = r.blob();
  s.near_bytes.assign(nb.begin(), nb.end());
  s.far_x = r.u16();
  s.far_y = r.u16();
  s.far_width = r.u16();
  s.far_height = r.u16();
  auto fb = r.blob();
  s.far_bytes.assign(fb.begin(), fb.end());
  return s;
}

namespace {

void fill_stats(const ProjectionSet& ps, ColorStats* stats) {
  if (!stats) return;
  stats->near = ps.count(Layer::Near);
  stats->far = ps.count(Layer::Far);
  stats->unprojected = ps.count(Layer::Unprojected);
}

uint16_t dim16(int32_t v, const char* what) {
  if (v < 0 || v > 65535) throw EncodeError(std::string(what) + " exceeds 65535 pixels");
  return uint16_t(v);
}

}  // namespace

ColorSection encode_color(std::span<const Vec3i> geometry, int32_t scale, const PointCloud& original,
                          ImageCodec& codec, int color_idx, const ColorConfig& cfg,
                          ColorStats* stats) {
  if (!original.colors) throw DomainError("colour coding needs a coloured original");
  if (color_idx < 0 || color_idx > 255) throw ConfigError("color_idx must fit in a byte");
  ColorSection sec;
  sec.color_idx = uint8_t(color_idx);
  sec.plugin = codec.id();
  const ProjectionSet ps = build_projection(geometry, cfg);
  fill_stats(ps, stats);
  if (geometry.empty() || ps.packing.height == 0) return sec;

  std::vector<Vec3i> positions;
  positions.reserve(geometry.size());
  for (const auto& c : geometry) positions.push_back(c * scale);
  const auto colors = recolor(original.coords, *original.colors, positions);

  const int32_t W = ps.packing.width, H = ps.packing.height;
  RgbImage near(W, H), far(W, H);
  for (size_t i = 0; i < geometry.size(); ++i) {
    if (ps.layer[i] != Layer::Near) continue;
    uint8_t* p = &near.data[size_t(ps.pixel[i]) * 3];
    p[0] = colors[i].r;
    p[1] = colors[i].g;
    p[2] = colors[i].b;
  }
  far.data = near.data;
  for (size_t i = 0; i < geometry.size(); ++i) {
    if (ps.layer[i] != Layer::Far) continue;
    uint8_t* p = &far.data[size_t(ps.pixel[i]) * 3];
    p[0] = colors[i].r;
    p[1] = colors[i].g;
    p[2] = colors[i].b;
  }
  const DiffFarLayer diff = diff_far_layer(near, far, ps.occupancy);
  if (stats) stats->far_clamps = diff.clamps;
  const RgbImage padded = pushpull_pad(near, ps.occupancy, cfg.pad_passes);

  sec.near_width = dim16(W, "near image width");
  sec.near_height = dim16(H, "near image height");
  try {
    sec.near_bytes = codec.encode(padded, color_idx);
    if (!diff.image.empty()) sec.far_bytes = codec.encode(diff.image, color_idx);
  } catch (const EncodeError&) {
    throw;
  } catch (const Error& e) {
    throw EncodeError("image plugin " + codec.id() + ": " + e.what());
  }
  sec.far_x = dim16(diff.x0, "far window");
  sec.far_y = dim16(diff.y0, "far window");
  sec.far_width = dim16(diff.image.width, "far image width");
  sec.far_height = dim16(diff.image.height, "far image height");
  return sec;
}

std::vector<Rgb> decode_color(const ColorSection& sec, std::span<const Vec3i> geometry,
                              ImageCodec& codec, const ColorConfig& cfg, ColorStats* stats) {
  const ProjectionSet ps = build_projection(geometry, cfg);
  fill_stats(ps, stats);
  std::vector<Rgb> colors(geometry.size());
  if (geometry.empty()) return colors;
  if (sec.near_width != ps.packing.width || sec.near_height != ps.packing.height)
    throw IntegrityError("regenerated projection is " + std::to_string(ps.packing.width) + "x" +
                         std::to_string(ps.packing.height) + " but the stream holds " +
                         std::to_string(sec.near_width) + "x" + std::to_string(sec.near_height));
  RgbImage near;
  DiffFarLayer diff;
  try {
    near = codec.decode(sec.near_bytes, sec.color_idx);
    if (sec.far_width && sec.far_height) diff.image = codec.decode(sec.far_bytes, sec.color_idx);
  } catch (const DecodeError&) {
    throw;
  } catch (const Error& e) {
    throw DecodeError("image plugin " + codec.id() + ": " + e.what());
  }
  if (near.width != sec.near_width || near.height != sec.near_height)
    throw DecodeError("decoded near image has unexpected dimensions");
  if (diff.image.width != sec.far_width || diff.image.height != sec.far_height)
    throw DecodeError("decoded far image has unexpected dimensions");
  diff.x0 = sec.far_x;
  diff.y0 = sec.far_y;
  const RgbImage far = undiff_far_layer(near, diff);

  std::vector<Vec3i> ref, todo;
  std::vector<Rgb> ref_colors;
  std::vector<size_t> todo_idx;
  for (size_t i = 0; i < geometry.size(); ++i) {
    if (ps.layer[i] == Layer::Unprojected) {
      todo.push_back(geometry[i]);
      todo_idx.push_back(i);
      continue;
    }
    const uint8_t* p = &(ps.layer[i] == Layer::Near ? near : far).data[size_t(ps.pixel[i]) * 3];
    colors[i] = {p[0], p[1], p[2]};
    ref.push_back(geometry[i]);
    ref_colors.push_back(colors[i]);
  }
  if (!todo.empty()) {
    if (ref.empty()) throw IntegrityError("no projected points to colour the rest from");
    const auto fill = recolor(ref, ref_colors, todo);
    for (size_t j = 0; j < todo.size(); ++j) colors[todo_idx[j]] = fill[j];
  }
  return colors;
}

}  // namespace jpcc
