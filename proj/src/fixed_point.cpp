// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/fixed_point.hpp"

#include <algorithm>
#include <cmath>

namespace jpcc {

int64_t rescale(int64_t v, int from, int to) {
  if (from == to) return v;
  if (from > to) {
    const int sh = from - to;
    if (sh >= 63) return v < 0 ? -1 : 0;
    int64_t r;
    if (__builtin_add_overflow(v, int64_t(1) << (sh - 1), &r))
      throw OverflowError("fixed point: rounding overflow");
    return r >> sh;
  }
  const int sh = to - from;
  if (sh >= 63) throw OverflowError("fixed point: shift too large");
  int64_t r;
  if (__builtin_mul_overflow(v, int64_t(1) << sh, &r)) throw OverflowError("fixed point: left shift overflow");
  return r;
}

FixedPointModel quantize_sequential(const Sequential& seq, ParamStore& params,
                                    const std::vector<std::pair<Var, LayerGuide>>& calib,
                                    const QuantizeOptions& opt) {
  FixedPointModel model;
  std::vector<Var> h;
  for (const auto& c : calib) h.push_back(c.first);
  const auto& stages = seq.stages();
  for (size_t li = 0; li < stages.size(); ++li) {
    if (stages[li].type != Stage::Type::Layer)
      throw ConfigError("fixed point: only plain layer chains can be quantized");
    const LayerSpec& spec = stages[li].layer;
    double bound = li == 0 ? opt.input_bound : 0.0;
    for (size_t i = 0; i < h.size(); ++i) {
      if (h[i]->value.features.size()) bound = std::max(bound, h[i]->value.features.cwiseAbs().maxCoeff());
      h[i] = apply_layer(nullptr, spec, params, h[i], &calib[i].second);
    }
    if (li > 0) bound = std::max(bound, 1.0) * std::ldexp(1.0, opt.margin_bits);

    FixedLayer fl;
    fl.spec = spec;
    fl.in_frac = li == 0 ? 0 : opt.act_frac;
    fl.out_frac = li + 1 == stages.size() ? opt.out_frac : opt.act_frac;
    const Matrix& W = params.weight(spec.name).value;
    const Param* B = params.bias(spec.name);
    // Worst case |acc| / 2^w_frac over output channels.
    double worst = 0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      double s = W.col(j).cwiseAbs().sum() * bound * std::ldexp(1.0, fl.in_frac);
      if (B) s += std::abs(B->value(0, j)) * std::ldexp(1.0, fl.in_frac);
      worst = std::max(worst, s);
    }
    int w_frac = opt.max_w_frac;
    while (w_frac > 0 && worst * std::ldexp(1.0, w_frac) >= std::ldexp(1.0, 62)) --w_frac;
    if (worst * std::ldexp(1.0, w_frac) >= std::ldexp(1.0, 62))
      throw OverflowError("fixed point: layer " + spec.name + " cannot fit the accumulator");
    fl.w_frac = w_frac;
    fl.weight.resize(size_t(W.size()));
    for (Eigen::Index i = 0; i < W.size(); ++i)
      fl.weight[size_t(i)] = std::llround(std::ldexp(W.data()[i], w_frac));
    if (B) {
      fl.bias.resize(size_t(B->value.cols()));
      for (Eigen::Index j = 0; j < B->value.cols(); ++j)
        fl.bias[size_t(j)] = std::llround(std::ldexp(B->value(0, j), w_frac + fl.in_frac));
    }
    model.layers.push_back(std::move(fl));
  }
  return model;
}

FixedTensor fixed_point_forward(const FixedPointModel& model, const FixedTensor& input,
                                const LayerGuide* guide) {
  FixedTensor x = input;
  for (const FixedLayer& L : model.layers) {
    const LayerSpec& spec = L.spec;
    if (x.channels != spec.in_channels) throw ShapeError(spec.name + ": channel mismatch in fixed path");
    if (x.frac != L.in_frac) throw ShapeError(spec.name + ": input scale mismatch in fixed path");
    LayerPlan plan = plan_layer(spec, x.coords, guide);
    const size_t cin = size_t(spec.in_channels);
    const size_t cout = size_t(spec.out_channels);
    const size_t rows = plan.out->size();
    std::vector<int64_t> acc(rows * cout, 0);
    if (!L.bias.empty())
      for (size_t r = 0; r < rows; ++r)
        std::copy(L.bias.begin(), L.bias.end(), acc.begin() + ptrdiff_t(r * cout));
    // Fixed accumulation order: offset, pair, input channel, output channel.
    for (size_t k = 0; k < plan.map->volume(); ++k) {
      const auto& ir = plan.map->in_rows[k];
      const auto& orow = plan.map->out_rows[k];
      const int64_t* Wk = L.weight.data() + k * cin * cout;
      for (size_t p = 0; p < ir.size(); ++p) {
        const int64_t* xi = x.data.data() + size_t(ir[p]) * cin;
        int64_t* ao = acc.data() + size_t(orow[p]) * cout;
        for (size_t i = 0; i < cin; ++i) {
          const int64_t xv = xi[i];
          if (xv == 0) continue;
          const int64_t* wr = Wk + i * cout;
          for (size_t o = 0; o < cout; ++o) {
            int64_t prod;
            if (__builtin_mul_overflow(xv, wr[o], &prod) || __builtin_add_overflow(ao[o], prod, &ao[o]))
              throw OverflowError("fixed point: accumulator overflow in " + spec.name);
          }
        }
      }
    }
    const int acc_frac = L.w_frac + L.in_frac;
    for (auto& v : acc) {
      v = rescale(v, acc_frac, L.out_frac);
      if (spec.activation == Activation::ReLU && v < 0) v = 0;
    }
    if (spec.activation == Activation::Sigmoid)
      throw ConfigError("fixed point: sigmoid layers are not supported");
    x.coords = plan.out;
    x.channels = int(cout);
    x.frac = L.out_frac;
    x.data = std::move(acc);
  }
  return x;
}

}  // namespace jpcc
