// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "jpcc/entropy.hpp"
#include "jpcc/kdtree.hpp"
#include "jpcc/octree.hpp"

namespace jpcc {
namespace {

GaussianTableCache& gaussian_cache() {
  static GaussianTableCache cache;
  return cache;
}

std::string where(size_t idx, const Vec3i& o) {
  return "block " + std::to_string(idx) + " at (" + std::to_string(o.x) + "," +
         std::to_string(o.y) + "," + std::to_string(o.z) + ")";
}

int32_t round_half_up(double v) {
  const double r = std::floor(v + 0.5);
  if (!(r > -2147483648.0 && r < 2147483647.0)) return r > 0 ? kSymbolMax + 1 : kSymbolMin - 1;
  return int32_t(r);
}

Var ones_leaf(std::vector<Vec3i> coords, int32_t stride) {
  auto cs = make_coords(std::move(coords), stride);
  Matrix f = Matrix::Ones(Eigen::Index(cs->size()), 1);
  return ag::leaf(make_tensor(std::move(cs), std::move(f)));
}

SparseTensor empty_probs() { return make_tensor(make_coords({}, 1), Matrix(0, 1)); }

int32_t coding_clip(int32_t block_size, int sf) { return (block_size - 1) / sf; }

// SR over the up-sampled coarse coordinates of one block.
SparseTensor sr_candidates(SrModel& sr, const std::vector<Vec3i>& coarse, int sf,
                           int32_t block_size) {
  if (coarse.empty()) return empty_probs();
  Var x = ones_leaf(upsample(coarse, sf), sf);
  return sr.forward(nullptr, x, block_size - 1)->value;
}

}  // namespace

void BlockCodingParams::validate() const {
  if (sf < 1 || sf > 255) throw ConfigError("SF must be in [1, 255], got " + std::to_string(sf));
  if (!(qs > 0) || !std::isfinite(qs)) throw ConfigError("QS must be positive and finite");
  if (geo_idx < 0 || geo_idx > kMaxGeoIdx)
    throw ConfigError("geo_idx must be in [0, " + std::to_string(kMaxGeoIdx) + "]");
  if (k_s > 0 && sf == 1) throw ConfigError("super-resolution requires SF > 1");
}

// ---------------------------------------------------------------- models

CodingModel& ModelStore::coding(int geo_idx) {
  auto it = coding_.find(geo_idx);
  if (it != coding_.end()) return *it->second;
  const std::string path = coding_weights_path(dir_.empty() ? "weights" : dir_, geo_idx);
  if (!std::filesystem::exists(path))
    throw ConfigError("missing coding model weights for geo_idx " + std::to_string(geo_idx) +
                      ": " + path);
  auto m = std::make_unique<CodingModel>(CodingModel::load(path));
  return *coding_.emplace(geo_idx, std::move(m)).first->second;
}

bool ModelStore::has_sr(int sf) {
  if (sr_.count(sf)) return true;
  return std::filesystem::exists(sr_weights_path(dir_.empty() ? "weights" : dir_, sf));
}

SrModel& ModelStore::sr(int sf) {
  auto it = sr_.find(sf);
  if (it != sr_.end()) return *it->second;
  const std::string path = sr_weights_path(dir_.empty() ? "weights" : dir_, sf);
  if (!std::filesystem::exists(path))
    throw ConfigError("missing SR weights for SF=" + std::to_string(sf) + ": " + path);
  auto m = std::make_unique<SrModel>(SrModel::load(path));
  if (m->config().sf != sf)
    throw ConfigError(path + " holds an SF=" + std::to_string(m->config().sf) + " model");
  return *sr_.emplace(sf, std::move(m)).first->second;
}

void ModelStore::put_coding(int geo_idx, CodingModel m) {
  coding_[geo_idx] = std::make_unique<CodingModel>(std::move(m));
}

void ModelStore::put_sr(int sf, SrModel m) { sr_[sf] = std::make_unique<SrModel>(std::move(m)); }

// ---------------------------------------------------------------- block codec

GeometryBlockStream encode_block(std::span<const Vec3i> coords, const BlockCodingParams& params,
                                 ModelStore& models, BlockEncodeStats* stats,
                                 BlockLatents* latents) {
  params.validate();
  GeometryBlockStream out;
  out.params = params;
  if (coords.empty()) return out;
  CodingModel& m = models.coding(params.geo_idx);
  const int L = m.widths().latent, H = m.widths().hyper;
  const double qs = double(params.qs);

  Var x = ones_leaf(std::vector<Vec3i>(coords.begin(), coords.end()), 1);
  Var y = m.run_analysis(nullptr, x);
  const CoordSetPtr& yc = y->value.coords;
  if (yc->stride() != kLatentStride) throw IntegrityError("analysis output is not at stride 8");

  Var yqs = ag::leaf(make_tensor(yc, y->value.features / qs));
  Var z = m.run_hyper_analysis(nullptr, yqs);
  CoordSetPtr zc = derive_hyper_coords(yc);
  if (z->value.coords->coords() != zc->coords())
    throw IntegrityError("hyper analysis coordinates differ from the derived hyper coordinates");

  std::vector<int32_t> zs(size_t(z->value.features.size()));
  for (size_t i = 0; i < zs.size(); ++i) zs[i] = round_half_up(z->value.features.data()[i]);
  const size_t zclamp = clamp_symbols(zs);
  Matrix zf(Eigen::Index(zc->size()), H);
  for (size_t i = 0; i < zs.size(); ++i) zf.data()[i] = zs[i];
  SparseTensor z_hat = make_tensor(zc, std::move(zf));

  Var mu = m.run_hyper_mean(nullptr, ag::leaf(z_hat), yc);
  if (mu->value.coords->coords() != yc->coords())
    throw IntegrityError("hyper mean does not cover the latent coordinates");
  std::vector<int32_t> rs(size_t(yqs->value.features.size()));
  for (size_t i = 0; i < rs.size(); ++i)
    rs[i] = round_half_up(yqs->value.features.data()[i] - mu->value.features.data()[i]);
  const size_t rclamp = clamp_symbols(rs);

  FixedTensor sigma = m.sigma_codes(z_hat, yc);
  if (sigma.channels != L) throw IntegrityError("sigma channel count mismatch");

  std::vector<Vec3i> latent;
  latent.reserve(yc->size());
  for (const auto& c : yc->coords()) latent.push_back({c.x / kLatentStride, c.y / kLatentStride,
                                                       c.z / kLatentStride});
  out.coords = octree_encode(latent, octree_depth_for(latent));

  const FactorizedPrior& prior = m.prior();
  if (prior.channels() != size_t(H)) throw ConfigError("prior channel count does not match H");
  out.hyper = rans_encode(zs, [&](size_t i) -> const QuantizedCdf& {
    return prior.factorized_cdf(i % size_t(H));
  });
  auto& cache = gaussian_cache();
  out.features = rans_encode(rs, [&](size_t i) -> const QuantizedCdf& {
    return cache.get(std::abs(sigma.data[i]));
  });

  if (stats) {
    stats->hyper_clamps += zclamp;
    stats->residue_clamps += rclamp;
  }
  if (latents) {
    latents->y = y->value;
    latents->z_hat = std::move(z_hat);
    latents->mu = mu->value;
    latents->residue = std::move(rs);
    latents->sigma = std::move(sigma);
  }
  return out;
}

SparseTensor decode_latent(const GeometryBlockStream& stream, ModelStore& models) {
  stream.params.validate();
  CodingModel& m = models.coding(stream.params.geo_idx);
  const int L = m.widths().latent, H = m.widths().hyper;

  std::vector<Vec3i> latent = octree_decode(stream.coords);
  if (latent.empty()) throw DecodeError("coordinate sub-stream holds no latent points");
  for (auto& c : latent) c = c * kLatentStride;
  CoordSetPtr yc = make_coords(std::move(latent), kLatentStride);
  CoordSetPtr zc = derive_hyper_coords(yc);

  const FactorizedPrior& prior = m.prior();
  if (prior.channels() != size_t(H)) throw ConfigError("prior channel count does not match H");
  std::vector<int32_t> zs = rans_decode(stream.hyper, zc->size() * size_t(H),
                                        [&](size_t i) -> const QuantizedCdf& {
                                          return prior.factorized_cdf(i % size_t(H));
                                        });
  Matrix zf(Eigen::Index(zc->size()), H);
  for (size_t i = 0; i < zs.size(); ++i) zf.data()[i] = zs[i];
  SparseTensor z_hat = make_tensor(zc, std::move(zf));

  Var mu = m.run_hyper_mean(nullptr, ag::leaf(z_hat), yc);
  if (mu->value.coords->coords() != yc->coords())
    throw IntegrityError("hyper mean does not cover the latent coordinates");
  FixedTensor sigma = m.sigma_codes(z_hat, yc);
  auto& cache = gaussian_cache();
  std::vector<int32_t> rs = rans_decode(stream.features, yc->size() * size_t(L),
                                        [&](size_t i) -> const QuantizedCdf& {
                                          return cache.get(std::abs(sigma.data[i]));
                                        });
  Matrix y = mu->value.features;
  const double qs = double(stream.params.qs);
  for (size_t i = 0; i < rs.size(); ++i) y.data()[i] = (y.data()[i] + rs[i]) * qs;
  return make_tensor(yc, std::move(y));
}

SparseTensor decode_block(const GeometryBlockStream& stream, ModelStore& models, int32_t clip_hi) {
  if (stream.empty()) return empty_probs();
  SparseTensor y = decode_latent(stream, models);
  return models.coding(stream.params.geo_idx).run_synthesis(nullptr, ag::leaf(std::move(y)), clip_hi)->value;
}

// ---------------------------------------------------------------- top-k

std::vector<size_t> probability_order(const SparseTensor& probs) {
  std::vector<size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  const double* p = probs.features.data();
  const auto cols = size_t(probs.features.cols());
  // Coordinates are sorted, so a stable sort breaks ties lexicographically.
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return p[a * cols] > p[b * cols]; });
  return idx;
}

namespace {

std::vector<Vec3i> prefix_coords(const SparseTensor& probs, const std::vector<size_t>& order,
                                 size_t k) {
  k = std::min(k, order.size());
  std::vector<Vec3i> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) out.push_back((*probs.coords)[order[i]]);
  return out;
}

}  // namespace

std::vector<Vec3i> top_k_binarize(const SparseTensor& probs, size_t k) {
  auto out = prefix_coords(probs, probability_order(probs), k);
  std::sort(out.begin(), out.end());
  return out;
}

GeometryMetric d1_mse_metric() {
  return [](std::span<const Vec3i> a, std::span<const Vec3i> b) -> double {
    if (a.empty() || b.empty()) return -std::numeric_limits<double>::infinity();
    auto one_way = [](std::span<const Vec3i> from, std::span<const Vec3i> to) {
      KdTree t = KdTree::from_coords(to);
      double s = 0;
      for (const auto& c : from) s += t.nearest(to_vec3d(c)).second;
      return s / double(from.size());
    };
    return -std::max(one_way(a, b), one_way(b, a));
  };
}

std::vector<size_t> k_grid(size_t reference_size, size_t candidates) {
  std::vector<size_t> ks;
  if (candidates == 0) return ks;
  for (int i = 0; i <= 56; ++i) {
    const double rho = 0.2 + 0.05 * i;
    auto k = size_t(std::llround(rho * double(reference_size)));
    ks.push_back(std::clamp<size_t>(k, 1, candidates));
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

namespace {

size_t argmax_k(const SparseTensor& probs, std::span<const Vec3i> reference,
                const GeometryMetric& metric, const std::vector<size_t>& ks) {
  if (reference.empty()) throw DomainError("k optimization needs a non-empty reference");
  if (ks.empty()) return 0;
  const auto order = probability_order(probs);
  size_t best_k = ks.front();
  double best = -std::numeric_limits<double>::infinity();
  bool first = true;
  for (size_t k : ks) {
    const auto pre = prefix_coords(probs, order, k);
    const double v = metric(pre, reference);
    if (first || v > best) {
      best = v;
      best_k = k;
      first = false;
    }
  }
  return best_k;
}

}  // namespace

size_t optimize_k(const SparseTensor& probs, std::span<const Vec3i> reference,
                  const GeometryMetric& metric) {
  return argmax_k(probs, reference, metric, k_grid(reference.size(), probs.size()));
}

size_t optimize_k_exhaustive(const SparseTensor& probs, std::span<const Vec3i> reference,
                             const GeometryMetric& metric) {
  std::vector<size_t> ks(probs.size());
  std::iota(ks.begin(), ks.end(), size_t{1});
  return argmax_k(probs, reference, metric, ks);
}

// ---------------------------------------------------------------- section

std::vector<uint8_t> GeometrySection::serialize() const {
  ByteWriter w;
  w.raw("JPCC");
  w.u8(kVersion);
  w.u8(color_present ? 1 : 0);
  w.u8(uint8_t(bit_depth));
  w.u16(uint16_t(block_size));
  w.u8(uint8_t(geo_idx));
  w.u32(uint32_t(blocks.size()));
  for (const auto& b : blocks) {
    w.u32(uint32_t(b.origin.x));
    w.u32(uint32_t(b.origin.y));
    w.u32(uint32_t(b.origin.z));
    w.u8(uint8_t(b.params.sf));
    w.f32(b.params.qs);
    w.u32(b.params.k_c);
    w.u32(b.params.k_s);
    w.blob(b.coords);
    w.blob(b.hyper);
    w.blob(b.features);
  }
  return w.take();
}

GeometrySection GeometrySection::parse(ByteReader& r) {
  auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "JPCC") throw DecodeError("bad geometry magic");
  const uint8_t version = r.u8();
  if (version != kVersion)
    throw DecodeError("unsupported geometry section version " + std::to_string(version));
  GeometrySection s;
  const uint8_t flags = r.u8();
  if (flags & ~1u) throw DecodeError("unknown geometry flags");
  s.color_present = flags & 1u;
  s.bit_depth = r.u8();
  s.block_size = r.u16();
  s.geo_idx = r.u8();
  if (s.block_size < 1) throw DecodeError("block size 0");
  if (s.geo_idx > kMaxGeoIdx) throw DecodeError("geo_idx out of range");
  const uint32_t n = r.u32();
  // 33 bytes is the smallest block record; reject absurd counts early.
  if (uint64_t(n) * 33 > r.remaining()) throw DecodeError("truncated stream: block count too large");
  s.blocks.resize(n);
  for (auto& b : s.blocks) {
    b.origin.x = int32_t(r.u32());
    b.origin.y = int32_t(r.u32());
    b.origin.z = int32_t(r.u32());
    b.params.sf = r.u8();
    b.params.qs = r.f32();
    b.params.k_c = r.u32();
    b.params.k_s = r.u32();
    b.params.geo_idx = s.geo_idx;
    auto c = r.blob();
    b.coords.assign(c.begin(), c.end());
    auto h = r.blob();
    b.hyper.assign(h.begin(), h.end());
    auto f = r.blob();
    b.features.assign(f.begin(), f.end());
    try {
      b.params.validate();
    } catch (const ConfigError& e) {
      throw DecodeError(std::string("invalid block parameters: ") + e.what());
    }
  }
  return s;
}

GeometrySection GeometrySection::parse(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto s = parse(r);
  if (!r.at_end()) throw DecodeError("trailing bytes after the geometry section");
  return s;
}

// ---------------------------------------------------------------- point cloud

namespace {

void finish_cloud(GeometryDecodeResult& res, int bit_depth) {
  for (const auto& b : res.blocks)
    for (const auto& c : b.local) res.pc.coords.push_back(b.origin + c);
  std::sort(res.pc.coords.begin(), res.pc.coords.end());
  res.pc.bit_depth = bit_depth;
}

}  // namespace

GeometryEncodeResult encode_pc(const PointCloud& pc, const GeometryConfig& cfg, ModelStore& models) {
  if (cfg.block_size < 1 || cfg.block_size > 65535)
    throw ConfigError("block size must be in [1, 65535]");
  GeometryEncodeResult res;
  bool sr = cfg.sr;
  if (sr && cfg.sf == 1) {
    res.warnings.push_back("super-resolution requested with SF=1; disabled (k_S = 0)");
    sr = false;
  }
  BlockCodingParams base;
  base.sf = cfg.sf;
  base.qs = float(cfg.qs);
  base.geo_idx = cfg.geo_idx;
  base.validate();
  models.coding(cfg.geo_idx);  // fail before any block on missing weights
  SrModel* srm = sr ? &models.sr(cfg.sf) : nullptr;
  const GeometryMetric metric = cfg.metric ? cfg.metric : d1_mse_metric();

  auto& sec = res.section;
  sec.bit_depth = pc.bit_depth ? pc.bit_depth : infer_bit_depth(pc.coords);
  sec.block_size = cfg.block_size;
  sec.geo_idx = cfg.geo_idx;
  sec.color_present = pc.has_colors();
  res.decoded.sr_applied = sr;

  const auto blocks = partition_blocks(pc, cfg.block_size);
  const int32_t clip = coding_clip(cfg.block_size, cfg.sf);
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    const Block& blk = blocks[bi];
    try {
      const auto ds = downsample(blk.local_coords, cfg.sf);
      GeometryBlockStream st = encode_block(ds, base, models, &res.stats);
      st.origin = blk.origin;
      DecodedBlock db;
      db.origin = blk.origin;
      db.sf = cfg.sf;
      const SparseTensor probs = decode_block(st, models, clip);
      st.params.k_c = uint32_t(optimize_k(probs, ds, metric));
      db.coarse = top_k_binarize(probs, st.params.k_c);
      if (srm) {
        const SparseTensor sp = sr_candidates(*srm, db.coarse, cfg.sf, cfg.block_size);
        db.sr_candidates = sp.size();
        st.params.k_s = uint32_t(optimize_k(sp, blk.local_coords, metric));
        db.local = top_k_binarize(sp, st.params.k_s);
        if (st.params.k_s == 0) throw EncodeError("SR produced no candidates");
      } else {
        db.local = upsample(db.coarse, cfg.sf);
      }
      sec.blocks.push_back(std::move(st));
      res.decoded.blocks.push_back(std::move(db));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw EncodeError(where(bi, blk.origin) + ": " + e.what());
    }
  }
  if (res.stats.hyper_clamps)
    res.warnings.push_back(std::to_string(res.stats.hyper_clamps) + " hyper latent symbols clamped");
  if (res.stats.residue_clamps)
    res.warnings.push_back(std::to_string(res.stats.residue_clamps) + " residue symbols clamped");
  finish_cloud(res.decoded, sec.bit_depth);
  return res;
}

GeometryDecodeResult decode_pc(const GeometrySection& section, ModelStore& models) {
  GeometryDecodeResult res;
  for (size_t bi = 0; bi < section.blocks.size(); ++bi) {
    const auto& st = section.blocks[bi];
    const int sf = st.params.sf;
    if (st.params.k_s > 0) res.sr_applied = true;
    try {
      DecodedBlock db;
      db.origin = st.origin;
      db.sf = sf;
      const SparseTensor probs = decode_block(st, models, coding_clip(section.block_size, sf));
      if (probs.size() < st.params.k_c)
        throw DecodeError("k_C exceeds the candidate count");
      db.coarse = top_k_binarize(probs, st.params.k_c);
      if (st.params.k_s > 0) {
        SrModel& srm = models.sr(sf);
        const SparseTensor sp = sr_candidates(srm, db.coarse, sf, section.block_size);
        db.sr_candidates = sp.size();
        if (sp.size() < st.params.k_s) throw DecodeError("k_S exceeds the SR candidate count");
        db.local = top_k_binarize(sp, st.params.k_s);
      } else {
        db.local = upsample(db.coarse, sf);
      }
      res.blocks.push_back(std::move(db));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw DecodeError(where(bi, st.origin) + ": " + e.what());
    }
  }
  finish_cloud(res, section.bit_depth);
  return res;
}

ProjectionFrame projection_frame(const GeometryDecodeResult& decoded, int32_t block_size) {
  ProjectionFrame f;
  if (decoded.blocks.empty()) return f;
  const int sf = decoded.blocks.front().sf;
  bool common = block_size % sf == 0;
  for (const auto& b : decoded.blocks) common = common && b.sf == sf;
  f.scale = common ? sf : 1;
  for (const auto& b : decoded.blocks) {
    if (common) {
      const Vec3i o{b.origin.x / sf, b.origin.y / sf, b.origin.z / sf};
      for (const auto& c : b.coarse) f.coords.push_back(o + c);
    } else {
      for (const auto& c : b.coarse) f.coords.push_back(b.origin + c * b.sf);
    }
  }
  std::sort(f.coords.begin(), f.coords.end());
  return f;
}

}  // namespace jpcc
