// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "jpcc/layers.hpp"

namespace jpcc {

// Integer features: value = data / 2^frac, row-major [rows, channels].
struct FixedTensor {
  CoordSetPtr coords;
  int channels = 0;
  int frac = 0;
  std::vector<int64_t> data;

  size_t size() const { return coords ? coords->size() : 0; }
  int64_t at(size_t row, int ch) const { return data[row * size_t(channels) + size_t(ch)]; }
};

// One quantized convolution. Weights are round(w * 2^w_frac), biases are
// round(b * 2^(w_frac + in_frac)) so they add straight into the accumulator.
struct FixedLayer {
  LayerSpec spec;
  std::vector<int64_t> weight;  // [volume * in, out]
  std::vector<int64_t> bias;    // [out] (empty without bias)
  int w_frac = 0;
  int in_frac = 0;
  int out_frac = 0;
};

struct FixedPointModel {
  std::vector<FixedLayer> layers;
  bool empty() const { return layers.empty(); }
};

struct QuantizeOptions {
  int act_frac = 20;     // intermediate activations
  int out_frac = 16;     // final output
  int max_w_frac = 30;
  int margin_bits = 6;   // headroom over the calibrated activation bound
  double input_bound = 255.0;  // |input| bound of the first layer
};

// Quantizes a chain of plain layers. `calib` holds float inputs with their
// guides; they are run through the float model to bound each layer's input.
FixedPointModel quantize_sequential(const Sequential& seq, ParamStore& params,
                                    const std::vector<std::pair<Var, LayerGuide>>& calib,
                                    const QuantizeOptions& opt = {});

// Integer-only inference. Throws OverflowError if any accumulator or shift
// leaves the int64 range.
FixedTensor fixed_point_forward(const FixedPointModel& model, const FixedTensor& input,
                                const LayerGuide* guide = nullptr);

// Round-half-up arithmetic rescale from `from` to `to` fractional bits.
int64_t rescale(int64_t v, int from, int to);

}  // namespace jpcc
