// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jpcc/byte_io.hpp"
#include "jpcc/models.hpp"
#include "jpcc/point_cloud.hpp"

namespace jpcc {

constexpr int kMaxGeoIdx = 4;

struct BlockCodingParams {
  int sf = 1;
  float qs = 1.0f;
  uint32_t k_c = 0;
  uint32_t k_s = 0;  // 0 = no super-resolution
  int geo_idx = 0;

  void validate() const;
};

struct GeometryBlockStream {
  Vec3i origin;
  BlockCodingParams params;
  std::vector<uint8_t> coords;
  std::vector<uint8_t> hyper;
  std::vector<uint8_t> features;

  bool empty() const { return coords.empty(); }
};

// Coding and SR models by index, loaded lazily from a weight directory or
// installed directly (tests, training).
class ModelStore {
 public:
  ModelStore() = default;
  explicit ModelStore(std::string weights_dir) : dir_(std::move(weights_dir)) {}

  CodingModel& coding(int geo_idx);
  SrModel& sr(int sf);
  bool has_sr(int sf);
  void put_coding(int geo_idx, CodingModel m);
  void put_sr(int sf, SrModel m);
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::map<int, std::unique_ptr<CodingModel>> coding_;
  std::map<int, std::unique_ptr<SrModel>> sr_;
};

struct BlockEncodeStats {
  size_t hyper_clamps = 0;
  size_t residue_clamps = 0;
};

// Everything the encoder computes for one block, kept for inspection.
struct BlockLatents {
  SparseTensor y;         // analysis output
  SparseTensor z_hat;     // rounded hyper latent
  SparseTensor mu;
  std::vector<int32_t> residue;  // rounded, clamped, row-major over y
  FixedTensor sigma;
};

// `coords` are the block-local coordinates after SF down-sampling.
GeometryBlockStream encode_block(std::span<const Vec3i> coords, const BlockCodingParams& params,
                                 ModelStore& models, BlockEncodeStats* stats = nullptr,
                                 BlockLatents* latents = nullptr);

// Latent reconstruction y_hat = (mu + r_hat) * QS on decoded coordinates.
SparseTensor decode_latent(const GeometryBlockStream& stream, ModelStore& models);

// Occupancy probabilities on candidates clipped to [0, clip_hi].
SparseTensor decode_block(const GeometryBlockStream& stream, ModelStore& models, int32_t clip_hi);

// Highest-probability coordinates, ties to the lexicographically smaller
// one; the result is sorted lexicographically.
std::vector<Vec3i> top_k_binarize(const SparseTensor& probs, size_t k);

// Candidate indices by descending probability (stable over the sorted set).
std::vector<size_t> probability_order(const SparseTensor& probs);

// Higher is better.
using GeometryMetric =
    std::function<double(std::span<const Vec3i> decoded, std::span<const Vec3i> reference)>;
GeometryMetric d1_mse_metric();

std::vector<size_t> k_grid(size_t reference_size, size_t candidates);
size_t optimize_k(const SparseTensor& probs, std::span<const Vec3i> reference,
                  const GeometryMetric& metric = d1_mse_metric());
// Every k in [1, |candidates|]; the oracle for the grid search.
size_t optimize_k_exhaustive(const SparseTensor& probs, std::span<const Vec3i> reference,
                             const GeometryMetric& metric = d1_mse_metric());

struct GeometryConfig {
  int32_t block_size = 128;
  int sf = 1;
  double qs = 1.0;
  int geo_idx = 0;
  bool sr = false;
  GeometryMetric metric;  // empty = D1 MSE
};

struct GeometrySection {
  static constexpr uint8_t kVersion = 1;
  bool color_present = false;
  int bit_depth = 0;
  int32_t block_size = 0;
  int geo_idx = 0;
  std::vector<GeometryBlockStream> blocks;

  std::vector<uint8_t> serialize() const;
  static GeometrySection parse(ByteReader& r);
  static GeometrySection parse(std::span<const uint8_t> bytes);
};

struct DecodedBlock {
  Vec3i origin;
  int sf = 1;
  std::vector<Vec3i> coarse;  // top-k of the coding model, down-sampled units
  std::vector<Vec3i> local;   // final block-local coordinates
  size_t sr_candidates = 0;
};

struct GeometryDecodeResult {
  PointCloud pc;
  std::vector<DecodedBlock> blocks;
  bool sr_applied = false;
};

struct GeometryEncodeResult {
  GeometrySection section;
  GeometryDecodeResult decoded;  // decoder-side simulation
  BlockEncodeStats stats;
  std::vector<std::string> warnings;
};

GeometryEncodeResult encode_pc(const PointCloud& pc, const GeometryConfig& cfg, ModelStore& models);
GeometryDecodeResult decode_pc(const GeometrySection& section, ModelStore& models);

// Geometry the colour coder projects: pre-SR coordinates, in down-sampled
// units when every block shares SF and BS % SF == 0.
struct ProjectionFrame {
  std::vector<Vec3i> coords;  // lexicographically sorted, unique
  int32_t scale = 1;          // coords * scale = original-resolution positions
};
ProjectionFrame projection_frame(const GeometryDecodeResult& decoded, int32_t block_size);

}  // namespace jpcc
