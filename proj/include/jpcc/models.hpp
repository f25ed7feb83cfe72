// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "jpcc/entropy.hpp"
#include "jpcc/fixed_point.hpp"
#include "jpcc/layers.hpp"
#include "jpcc/weights.hpp"

namespace jpcc {

constexpr int32_t kLatentStride = 8;
constexpr int32_t kHyperStride = 32;

struct CodingWidths {
  int c1 = 32;
  int c2 = 64;
  int latent = 128;
  int hyper = 128;

  static CodingWidths full() { return {}; }
  static CodingWidths toy() { return {4, 8, 16, 16}; }
  friend bool operator==(const CodingWidths&, const CodingWidths&) = default;
};

// Analysis, synthesis, hyper analysis, hyper mean and hyper scale transforms
// plus the factorized prior of the hyper latent.
class CodingModel {
 public:
  explicit CodingModel(CodingWidths w = CodingWidths::full());

  const CodingWidths& widths() const { return widths_; }
  const Sequential& analysis() const { return analysis_; }
  const Sequential& synthesis() const { return synthesis_; }
  const Sequential& hyper_analysis() const { return hyper_analysis_; }
  const Sequential& hyper_mean() const { return hyper_mean_; }
  const Sequential& hyper_scale() const { return hyper_scale_; }
  std::array<const Sequential*, 5> submodels() const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const FactorizedPrior& prior() const { return prior_; }
  const FixedPointModel& hyper_scale_fixed() const { return fixed_; }
  void set_hyper_scale_fixed(FixedPointModel m) { fixed_ = std::move(m); }

  // Sum over the five transforms (prior parameters excluded).
  int64_t parameter_count() const;

  // Random weights, logistic prior at unit scale, tables and the fixed-point
  // hyper scale path rebuilt. Small weights keep the toy path well-conditioned.
  void init_random(uint64_t seed, double gain = 1.0);
  // Quantized prior tables from the learnable location / log-scale.
  void rebuild_prior();
  // Quantizes the hyper scale transform using the given latent coordinate
  // sets as calibration (random hyper latents are drawn on them).
  void quantize_hyper_scale(const std::vector<CoordSetPtr>& latent_coords, uint64_t seed);

  // Float forward passes. `x` carries one feature per occupied voxel.
  Var run_analysis(Tape* tape, const Var& x);
  Var run_hyper_analysis(Tape* tape, const Var& y);
  Var run_hyper_mean(Tape* tape, const Var& z, const CoordSetPtr& y_coords);
  Var run_hyper_scale(Tape* tape, const Var& z, const CoordSetPtr& y_coords);
  // Candidates with coordinates clipped to [0, clip_hi] on every axis.
  Var run_synthesis(Tape* tape, const Var& y, int32_t clip_hi);

  // Integer sigma codes (sigma * 2^16 before any clamp) on y_coords.
  FixedTensor sigma_codes(const SparseTensor& z_hat, const CoordSetPtr& y_coords) const;

  WeightFile to_weights() const;
  static CodingModel from_weights(const WeightFile& wf);
  void save(const std::string& path) const { to_weights().save(path); }
  static CodingModel load(const std::string& path) { return from_weights(WeightFile::load(path)); }

 private:
  CodingWidths widths_;
  Sequential analysis_{"analysis"};
  Sequential synthesis_{"synthesis"};
  Sequential hyper_analysis_{"hyper_analysis"};
  Sequential hyper_mean_{"hyper_mean"};
  Sequential hyper_scale_{"hyper_scale"};
  ParamStore params_;
  FactorizedPrior prior_;
  FixedPointModel fixed_;
};

// Guide for both hyper synthesis transforms: generated coordinates are kept
// only where the latent lives (stride 8) or its parent grid (stride 16).
LayerGuide hyper_synthesis_guide(const CoordSetPtr& y_coords);
// z_C = floor(r_C / 4) * 4 in latent units.
CoordSetPtr derive_hyper_coords(const CoordSetPtr& y_coords);

struct SrConfig {
  int sf = 2;
  // Stem width followed by the five contracting-level widths.
  std::vector<int> widths{16, 16, 24, 88, 144, 176};

  int kernel() const { return sf == 4 ? 5 : 3; }
  static SrConfig full(int sf);
  static SrConfig toy(int sf);
};

// U-net super-resolution model.
class SrModel {
 public:
  explicit SrModel(SrConfig cfg);

  const SrConfig& config() const { return cfg_; }
  std::vector<LayerSpec> layers() const;
  int64_t parameter_count() const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  void init_random(uint64_t seed, double gain = 1.0);

  // x: up-sampled coordinates at stride SF, one feature each. Output
  // probabilities on generated coordinates within [0, clip_hi].
  Var forward(Tape* tape, const Var& x, int32_t clip_hi);

  WeightFile to_weights() const;
  static SrModel from_weights(const WeightFile& wf);
  void save(const std::string& path) const { to_weights().save(path); }
  static SrModel load(const std::string& path) { return from_weights(WeightFile::load(path)); }

 private:
  struct Level {
    LayerSpec down;
    std::vector<std::string> enc;  // LIRB prefixes
    LayerSpec up;
    std::vector<std::string> dec;
    LayerSpec fuse;
  };
  SrConfig cfg_;
  LayerSpec stem_;
  std::vector<Level> levels_;
  LayerSpec gen_;
  LayerSpec out_;
  ParamStore params_;
};

// Every .weight / .bias of the store written with conv shapes.
void store_params(WeightFile& wf, const ParamStore& params, const std::vector<LayerSpec>& layers);
void load_params(const WeightFile& wf, ParamStore& params, const std::vector<LayerSpec>& layers);

std::string describe_layer(const LayerSpec& l);

}  // namespace jpcc
