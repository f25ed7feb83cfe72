// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "jpcc/autograd.hpp"

namespace jpcc {

enum class LayerKind { SpConv, TSpConv, GTSpConv };
enum class Activation { None, ReLU, Sigmoid };

const char* to_string(LayerKind k);
const char* to_string(Activation a);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

// One convolution. `stride` is the down-sampling factor for SpConv and the
// up-sampling factor for the transposed kinds.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::SpConv;
  Vec3i kernel{1, 1, 1};
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  bool has_bias = true;
  Activation activation = Activation::None;

  int64_t parameter_count() const {
    return int64_t(kernel_volume(kernel)) * in_channels * out_channels +
           (has_bias ? out_channels : 0);
  }
};

LayerSpec spconv(std::string name, int k, int in, int out, int down = 1,
                 Activation act = Activation::None, bool bias = true);
LayerSpec spconv(std::string name, Vec3i k, int in, int out, int down = 1,
                 Activation act = Activation::None, bool bias = true);
LayerSpec tspconv(std::string name, int k, int in, int out, int up,
                  Activation act = Activation::None, bool bias = true);
LayerSpec gtspconv(std::string name, int k, int in, int out, int up,
                   Activation act = Activation::None, bool bias = true);

// Named parameters; iteration order is the name order.
class ParamStore {
 public:
  void declare(const LayerSpec& spec);
  Param& weight(const std::string& layer);
  Param* bias(const std::string& layer);
  const Param& weight(const std::string& layer) const;
  const Param* bias(const std::string& layer) const;

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  std::map<std::string, Param>& all() { return params_; }
  const std::map<std::string, Param>& all() const { return params_; }
  void zero_grad();

 private:
  std::map<std::string, Param> params_;
};

// How a transposed layer picks its output coordinates.
struct LayerGuide {
  // Required output grid per stride for TSpConv; for GTSpConv the generated
  // grid is intersected with it when present.
  std::function<CoordSetPtr(int32_t stride)> target;
  // Generated coordinates outside [lo, hi] are dropped.
  std::optional<std::pair<Vec3i, Vec3i>> clip;
};

// Output coordinates and kernel map of one layer; depends on coordinates only.
struct LayerPlan {
  CoordSetPtr out;
  std::shared_ptr<const KernelMap> map;
};
LayerPlan plan_layer(const LayerSpec& spec, const CoordSetPtr& in, const LayerGuide* guide);

Var apply_layer(Tape* tape, const LayerSpec& spec, ParamStore& params, const Var& x,
                const LayerGuide* guide = nullptr);

// Inception-residual blocks. The first layer of every branch reads all N
// input channels.
std::vector<LayerSpec> irb_layers(const std::string& prefix, int n);
std::vector<LayerSpec> lirb_layers(const std::string& prefix, int n);
Var irb_forward(Tape* tape, ParamStore& params, const std::string& prefix, int n, const Var& x);
Var lirb_forward(Tape* tape, ParamStore& params, const std::string& prefix, int n, const Var& x);

// Sequential chain of convolutions and residual blocks.
struct Stage {
  enum class Type { Layer, Irb, Lirb } type = Type::Layer;
  LayerSpec layer;     // Type::Layer
  std::string prefix;  // block prefix
  int channels = 0;    // block width
};

class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::string name) : name_(std::move(name)) {}

  void add_layer(LayerSpec spec) { stages_.push_back({Stage::Type::Layer, std::move(spec), {}, 0}); }
  void add_irb(int n);
  void add_lirb(int n);

  const std::string& name() const { return name_; }
  const std::vector<Stage>& stages() const { return stages_; }
  // All convolutions in forward order, including those inside blocks.
  std::vector<LayerSpec> layers() const;
  int64_t parameter_count() const;
  void declare(ParamStore& params) const;

  Var forward(Tape* tape, ParamStore& params, const Var& x, const LayerGuide* guide = nullptr) const;

 private:
  std::string name_;
  std::vector<Stage> stages_;
  int block_counter_ = 0;
};

// Kaiming-style normal init for weights, zero biases, deterministic per seed.
void init_params(ParamStore& params, uint64_t seed, double gain = 1.0);

}  // namespace jpcc
