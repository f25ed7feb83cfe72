// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/layers.hpp"

#include <cmath>

namespace jpcc {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::SpConv: return "SpConv";
    case LayerKind::TSpConv: return "TSpConv";
    case LayerKind::GTSpConv: return "GTSpConv";
  }
  return "?";
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "SpConv") return LayerKind::SpConv;
  if (s == "TSpConv") return LayerKind::TSpConv;
  if (s == "GTSpConv") return LayerKind::GTSpConv;
  throw ParseError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::None;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ParseError("unknown activation '" + s + "'");
}

LayerSpec spconv(std::string name, Vec3i k, int in, int out, int down, Activation act, bool bias) {
  return LayerSpec{std::move(name), LayerKind::SpConv, k, in, out, down, bias, act};
}
LayerSpec spconv(std::string name, int k, int in, int out, int down, Activation act, bool bias) {
  return spconv(std::move(name), Vec3i{k, k, k}, in, out, down, act, bias);
}
LayerSpec tspconv(std::string name, int k, int in, int out, int up, Activation act, bool bias) {
  return LayerSpec{std::move(name), LayerKind::TSpConv, {k, k, k}, in, out, up, bias, act};
}
LayerSpec gtspconv(std::string name, int k, int in, int out, int up, Activation act, bool bias) {
  return LayerSpec{std::move(name), LayerKind::GTSpConv, {k, k, k}, in, out, up, bias, act};
}

void ParamStore::declare(const LayerSpec& spec) {
  add(spec.name + ".weight", Eigen::Index(kernel_volume(spec.kernel)) * spec.in_channels,
      spec.out_channels);
  if (spec.has_bias) add(spec.name + ".bias", 1, spec.out_channels);
}

Param& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  Param& p = params_[name];
  p.value = Matrix::Zero(rows, cols);
  p.grad.resize(0, 0);
  return p;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}
const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

Param& ParamStore::weight(const std::string& layer) { return at(layer + ".weight"); }
const Param& ParamStore::weight(const std::string& layer) const { return at(layer + ".weight"); }
Param* ParamStore::bias(const std::string& layer) {
  auto it = params_.find(layer + ".bias");
  return it == params_.end() ? nullptr : &it->second;
}
const Param* ParamStore::bias(const std::string& layer) const {
  auto it = params_.find(layer + ".bias");
  return it == params_.end() ? nullptr : &it->second;
}

void ParamStore::zero_grad() {
  for (auto& [n, p] : params_) p.zero_grad();
}

LayerPlan plan_layer(const LayerSpec& spec, const CoordSetPtr& in, const LayerGuide* guide) {
  LayerPlan p;
  switch (spec.kind) {
    case LayerKind::SpConv:
      if (spec.stride == 1) {
        p.out = in;
        p.map = in->self_map(spec.kernel);
      } else {
        p.out = downsample_grid(*in, spec.stride);
        p.map = std::make_shared<const KernelMap>(forward_map(*in, *p.out, spec.kernel));
      }
      break;
    case LayerKind::TSpConv: {
      if (!guide || !guide->target)
        throw ShapeError(spec.name + ": transposed convolution needs target coordinates");
      if (in->stride() % spec.stride != 0)
        throw ShapeError(spec.name + ": up-sampling factor does not divide tensor stride");
      p.out = guide->target(in->stride() / spec.stride);
      if (!p.out || p.out->stride() != in->stride() / spec.stride)
        throw ShapeError(spec.name + ": skip coordinates at wrong stride");
      p.map = std::make_shared<const KernelMap>(transposed_map(*in, *p.out, spec.kernel));
      break;
    }
    case LayerKind::GTSpConv: {
      p.out = generate_grid(*in, spec.kernel, spec.stride);
      if (guide && guide->target) {
        if (auto t = guide->target(p.out->stride())) p.out = intersect_grid(*p.out, *t);
      }
      if (guide && guide->clip) p.out = clip_grid(*p.out, guide->clip->first, guide->clip->second);
      p.map = std::make_shared<const KernelMap>(transposed_map(*in, *p.out, spec.kernel));
      break;
    }
  }
  return p;
}

Var apply_layer(Tape* tape, const LayerSpec& spec, ParamStore& params, const Var& x,
                const LayerGuide* guide) {
  if (x->value.channels() != spec.in_channels)
    throw ShapeError(spec.name + ": expected " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(x->value.channels()));
  LayerPlan p = plan_layer(spec, x->value.coords, guide);
  Var y = ag::conv(tape, x, params.weight(spec.name), params.bias(spec.name), std::move(p.map),
                   std::move(p.out));
  switch (spec.activation) {
    case Activation::None: return y;
    case Activation::ReLU: return ag::relu(tape, y);
    case Activation::Sigmoid: return ag::sigmoid(tape, y);
  }
  return y;
}

std::vector<LayerSpec> irb_layers(const std::string& p, int n) {
  if (n % 4 != 0) throw ShapeError("IRB width must be divisible by 4");
  const int q = n / 4;
  const auto R = Activation::ReLU;
  return {
      spconv(p + ".a0", 1, n, q, 1, R), spconv(p + ".a1", Vec3i{3, 1, 1}, q, q, 1, R),
      spconv(p + ".a2", Vec3i{1, 3, 1}, q, q, 1, R), spconv(p + ".a3", Vec3i{1, 1, 3}, q, q, 1, R),
      spconv(p + ".b0", 1, n, q, 1, R), spconv(p + ".b1", 3, q, q, 1, R),
      spconv(p + ".b2", 1, q, q, 1, R), spconv(p + ".c0", 3, n, q, 1, R),
      spconv(p + ".c1", 3, q, q, 1, R), spconv(p + ".d0", 5, n, q, 1, R),
  };
}

std::vector<LayerSpec> lirb_layers(const std::string& p, int n) {
  if (n % 4 != 0) throw ShapeError("LIRB width must be divisible by 4");
  const int q = n / 4;
  const auto R = Activation::ReLU;
  return {
      spconv(p + ".b0", 1, n, q, 1, R), spconv(p + ".b1", 3, q, q, 1, R),
      spconv(p + ".b2", 1, q, n / 2, 1, R), spconv(p + ".c0", 3, n, q, 1, R),
      spconv(p + ".c1", 3, q, n / 2, 1, R),
  };
}

namespace {

Var chain(Tape* tape, ParamStore& params, const std::vector<LayerSpec>& layers, size_t from,
          size_t to, const Var& x) {
  Var h = x;
  for (size_t i = from; i < to; ++i) h = apply_layer(tape, layers[i], params, h);
  return h;
}

}  // namespace

Var irb_forward(Tape* tape, ParamStore& params, const std::string& prefix, int n, const Var& x) {
  const auto L = irb_layers(prefix, n);
  Var a = chain(tape, params, L, 0, 4, x);
  Var b = chain(tape, params, L, 4, 7, x);
  Var c = chain(tape, params, L, 7, 9, x);
  Var d = chain(tape, params, L, 9, 10, x);
  Var cat = ag::concat(tape, ag::concat(tape, a, b), ag::concat(tape, c, d));
  return ag::add(tape, cat, x);
}

Var lirb_forward(Tape* tape, ParamStore& params, const std::string& prefix, int n, const Var& x) {
  const auto L = lirb_layers(prefix, n);
  Var b = chain(tape, params, L, 0, 3, x);
  Var c = chain(tape, params, L, 3, 5, x);
  return ag::add(tape, ag::concat(tape, b, c), x);
}

void Sequential::add_irb(int n) {
  Stage s;
  s.type = Stage::Type::Irb;
  s.prefix = name_ + ".irb" + std::to_string(block_counter_++);
  s.channels = n;
  stages_.push_back(std::move(s));
}

void Sequential::add_lirb(int n) {
  Stage s;
  s.type = Stage::Type::Lirb;
  s.prefix = name_ + ".lirb" + std::to_string(block_counter_++);
  s.channels = n;
  stages_.push_back(std::move(s));
}

std::vector<LayerSpec> Sequential::layers() const {
  std::vector<LayerSpec> out;
  for (const auto& s : stages_) {
    switch (s.type) {
      case Stage::Type::Layer: out.push_back(s.layer); break;
      case Stage::Type::Irb:
        for (auto& l : irb_layers(s.prefix, s.channels)) out.push_back(l);
        break;
      case Stage::Type::Lirb:
        for (auto& l : lirb_layers(s.prefix, s.channels)) out.push_back(l);
        break;
    }
  }
  return out;
}

int64_t Sequential::parameter_count() const {
  int64_t n = 0;
  for (const auto& l : layers()) n += l.parameter_count();
  return n;
}

void Sequential::declare(ParamStore& params) const {
  for (const auto& l : layers()) params.declare(l);
}

Var Sequential::forward(Tape* tape, ParamStore& params, const Var& x, const LayerGuide* guide) const {
  Var h = x;
  for (const auto& s : stages_) {
    switch (s.type) {
      case Stage::Type::Layer: h = apply_layer(tape, s.layer, params, h, guide); break;
      case Stage::Type::Irb: h = irb_forward(tape, params, s.prefix, s.channels, h); break;
      case Stage::Type::Lirb: h = lirb_forward(tape, params, s.prefix, s.channels, h); break;
    }
  }
  return h;
}

void init_params(ParamStore& params, uint64_t seed, double gain) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, p] : params.all()) {
    const bool is_bias = name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    if (is_bias || name.find(".weight") == std::string::npos) continue;
    // Fan-in of a [volume*in, out] weight is its row count.
    const double std = gain * std::sqrt(2.0 / double(p.value.rows()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = std * normal(rng);
  }
}

}  // namespace jpcc
