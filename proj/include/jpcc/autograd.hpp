// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "jpcc/sparse_tensor.hpp"

namespace jpcc {

// A trainable tensor. Convolution weights are stored as [volume * in, out]
// with one [in, out] block per kernel offset; biases as [1, out].
struct Param {
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index numel() const { return value.size(); }
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  SparseTensor value;
  Matrix grad;  // empty until something flows into it
  std::function<void(const Matrix&)> backward;

  void accumulate(const Matrix& g);
};

// Records nodes in creation order so that walking it backwards is a valid
// reverse topological order. Operations given a null tape run in inference
// mode and record nothing.
class Tape {
 public:
  void push(const Var& v) { nodes_.push_back(v); }
  void backward(const Var& root, const Matrix& seed);
  void backward(const Var& scalar_root);
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Var> nodes_;
};

namespace ag {

Var leaf(SparseTensor value);

// out = bias + sum_k W_k^T x[in_k] over the pairs listed by the map.
Var conv(Tape* tape, const Var& x, Param& weight, Param* bias,
         std::shared_ptr<const KernelMap> map, CoordSetPtr out_coords);

Var relu(Tape* tape, const Var& x);
Var sigmoid(Tape* tape, const Var& x);
// max(|x|, floor); used to turn a linear output into a positive scale.
Var abs_floor(Tape* tape, const Var& x, double floor);
Var add(Tape* tape, const Var& a, const Var& b);
Var sub(Tape* tape, const Var& a, const Var& b);
Var scale(Tape* tape, const Var& x, double s);
// x + c where c carries no gradient (noise relaxation of rounding).
Var add_constant(Tape* tape, const Var& x, const Matrix& c);
Var concat(Tape* tape, const Var& a, const Var& b);

// Scalar nodes carry a 1x1 feature matrix on an empty grid.
double scalar_value(const Var& s);
Var weighted_sum(Tape* tape, const Var& a, double wa, const Var& b, double wb);

// Mean focal loss over the union of the candidate coordinates of `v`
// (one probability channel) and `truth`. Truth voxels that are not
// candidates count as v = eps. Probabilities are clamped to [eps, 1 - eps].
Var focal_loss(Tape* tape, const Var& v, const CoordSet& truth, double alpha, double gamma,
               double eps = 1e-6);

// Sum of -log2 of the interval mass over [r - 0.5, r + 0.5] under N(0, sigma),
// element-wise over two same-shape tensors. Masses are floored at
// `min_mass`; floored elements pass no gradient.
Var gaussian_bits(Tape* tape, const Var& r, const Var& sigma, double min_mass = 1e-9);
// Same for a per-channel logistic with location loc[c] and scale exp(log_scale[c]).
Var logistic_bits(Tape* tape, const Var& z, Param& loc, Param& log_scale, double min_mass = 1e-9);

}  // namespace ag
}  // namespace jpcc
