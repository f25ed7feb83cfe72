// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jpcc/models.hpp"

namespace jpcc {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  // Trained in ascending order, each run starting from the previous weights.
  std::vector<double> lambdas{0.05, 0.025, 0.01, 0.005, 0.0025};
  double alpha = 0.5;
  double gamma = 2.0;
  double lr = 1e-4;
  double lr_drop = 1e-5;
  int plateau_patience = 10;
  int stop_patience = 25;
  double tolerance = 1e-3;  // relative improvement that resets the patience counters
  int batch = 8;
  int max_epochs = 1000;
  double qs = 1.0;
  // "block": lambda weights bits per block; "point": bits per input point.
  std::string rate_unit = "block";
  // Distortion-only epochs before the first lambda (coding models only).
  int warmup_epochs = 0;
  uint64_t seed = 1;

  void validate() const;
};

// `key = value` lines, '#' comments. Unknown keys are rejected. Keys are the
// TrainConfig field names (lambdas as a comma list); anything else the caller
// wants is returned in `extra` when given.
TrainConfig parse_train_config(const std::string& text,
                               std::map<std::string, std::string>* extra = nullptr,
                               const std::vector<std::string>& extra_keys = {});
TrainConfig load_train_config(const std::string& path,
                              std::map<std::string, std::string>* extra = nullptr,
                              const std::vector<std::string>& extra_keys = {});

// Random thin surfaces (planes, spheres, cylinders) voxelized in a
// block_size^3 cube, at least min_points each.
std::vector<std::vector<Vec3i>> synthetic_blocks(size_t count, int32_t block_size, uint64_t seed,
                                                 size_t min_points = 0);

// Latent rate estimate. With a noise source, rounding is replaced by
// additive U(-0.5, 0.5); without one, symbols are hard-rounded and clamped
// like the encoder does (gradient passes straight through either way).
struct RateTerms {
  Var bits;          // scalar, residue + hyper bits
  Var y_hat;         // (mu + residue) * QS, input of the synthesis
  double residue_bits = 0;
  double hyper_bits = 0;
};
RateTerms rate_proxy(Tape* tape, CodingModel& model, const Var& y, double qs,
                     std::mt19937_64* noise);

struct BlockLoss {
  Var loss;  // scalar
  double distortion = 0;
  double bits = 0;
};
// Focal loss of the reconstruction plus lambda * bits for one block.
BlockLoss coding_loss(Tape* tape, CodingModel& model, std::span<const Vec3i> block,
                      int32_t block_size, double lambda, const TrainConfig& cfg,
                      std::mt19937_64* noise);
// Distortion only: the SR output of the down-sampled block against the block.
BlockLoss sr_loss(Tape* tape, SrModel& model, std::span<const Vec3i> block, int32_t block_size,
                  const TrainConfig& cfg);

class Adam {
 public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore& params);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  int64_t steps() const { return t_; }

  void store(WeightFile& wf) const;
  void restore(const WeightFile& wf, const ParamStore& params);

 private:
  struct Moments {
    Matrix m, v;
  };
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

// LR drop after `plateau_patience` stale epochs (once), stop after
// `stop_patience` stale epochs. An epoch is stale unless its loss beats the
// best so far by the relative tolerance.
class EpochSchedule {
 public:
  explicit EpochSchedule(const TrainConfig& cfg);
  // Returns false once training should stop.
  bool update(double loss);
  double lr() const { return lr_; }
  int stale() const { return stale_; }
  double best() const { return best_; }
  bool dropped() const { return dropped_; }

 private:
  TrainConfig cfg_;
  double lr_;
  double best_;
  int stale_ = 0;
  int since_drop_ = 0;
  bool dropped_ = false;
};

struct EpochRecord {
  double lambda = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double distortion = 0;
  double bits = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> stop_reasons;  // one per lambda run

  std::string to_csv() const;
};

// Generic epoch loop with the LR schedule and early stopping. `run_epoch`
// gets the epoch number (from 1) and the learning rate.
std::string fit(const TrainConfig& cfg, double lambda,
                const std::function<EpochRecord(int epoch, double lr)>& run_epoch,
                TrainHistory& history);

struct TrainHooks {
  std::string checkpoint;  // checkpoint path written after every epoch and on divergence
  std::function<void(double lambda, const CodingModel&)> on_lambda_done;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Sequential-lambda training of the coding model. After every lambda the
// prior tables and the fixed-point hyper scale path are rebuilt.
TrainHistory train_coding(CodingModel& model, const std::vector<std::vector<Vec3i>>& blocks,
                          int32_t block_size, const TrainConfig& cfg, const TrainHooks& hooks = {});
// Distortion-only training; cfg.lambdas is ignored.
TrainHistory train_sr(SrModel& model, const std::vector<std::vector<Vec3i>>& blocks,
                      int32_t block_size, const TrainConfig& cfg, const TrainHooks& hooks = {});

// Latent coordinate sets of the blocks, for fixed-point calibration.
std::vector<CoordSetPtr> latent_coords(CodingModel& model,
                                       const std::vector<std::vector<Vec3i>>& blocks);

// Model weights plus an "adam.*" optimizer state.
void save_checkpoint(const std::string& path, WeightFile model, const Adam& opt, double lambda,
                     int epoch);
struct Checkpoint {
  WeightFile weights;
  double lambda = 0;
  int epoch = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace jpcc
