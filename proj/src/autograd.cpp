// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/autograd.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace jpcc {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) grad = g;
  else grad += g;
}

void Tape::backward(const Var& root, const Matrix& seed) {
  root->accumulate(seed);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(n.grad);
  }
}

void Tape::backward(const Var& scalar_root) {
  Matrix seed = Matrix::Ones(1, 1);
  backward(scalar_root, seed);
}

namespace ag {
namespace {

CoordSetPtr scalar_grid() {
  static const CoordSetPtr g = make_coords({}, 1);
  return g;
}

Var make_node(Tape* tape, SparseTensor value, std::function<void(const Matrix&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (tape) {
    n->backward = std::move(bw);
    tape->push(n);
  }
  return n;
}

void require_same_grid(const Var& a, const Var& b, const char* op) {
  if (a->value.coords != b->value.coords &&
      a->value.coords->coords() != b->value.coords->coords())
    throw ShapeError(std::string(op) + ": operands live on different coordinate sets");
  if (a->value.features.cols() != b->value.features.cols())
    throw ShapeError(std::string(op) + ": channel mismatch");
}

}  // namespace

Var leaf(SparseTensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var conv(Tape* tape, const Var& x, Param& weight, Param* bias,
         std::shared_ptr<const KernelMap> map, CoordSetPtr out_coords) {
  const Matrix& X = x->value.features;
  const Eigen::Index cin = X.cols();
  const Eigen::Index cout = weight.value.cols();
  const Eigen::Index volume = Eigen::Index(map->volume());
  if (weight.value.rows() != volume * cin)
    throw ShapeError("conv: weight has " + std::to_string(weight.value.rows()) +
                     " rows, expected " + std::to_string(volume * cin));
  Matrix Y = Matrix::Zero(Eigen::Index(out_coords->size()), cout);
  if (bias) Y.rowwise() += bias->value.row(0);
  for (Eigen::Index k = 0; k < volume; ++k) {
    const auto& ir = map->in_rows[size_t(k)];
    const auto& orow = map->out_rows[size_t(k)];
    if (ir.empty()) continue;
    const auto Wk = weight.value.middleRows(k * cin, cin);
    Matrix G(Eigen::Index(ir.size()), cin);
    for (size_t p = 0; p < ir.size(); ++p) G.row(Eigen::Index(p)) = X.row(ir[p]);
    const Matrix R = G * Wk;
    for (size_t p = 0; p < ir.size(); ++p) Y.row(orow[p]) += R.row(Eigen::Index(p));
  }
  Var xin = x;
  Param* w = &weight;
  return make_node(tape, make_tensor(std::move(out_coords), std::move(Y)),
                   [xin, w, bias, map, cin, volume](const Matrix& dY) {
                     const Matrix& X = xin->value.features;
                     if (w->grad.size() == 0) w->zero_grad();
                     if (bias) {
                       if (bias->grad.size() == 0) bias->zero_grad();
                       bias->grad.row(0) += dY.colwise().sum();
                     }
                     Matrix dX = Matrix::Zero(X.rows(), X.cols());
                     for (Eigen::Index k = 0; k < volume; ++k) {
                       const auto& ir = map->in_rows[size_t(k)];
                       const auto& orow = map->out_rows[size_t(k)];
                       if (ir.empty()) continue;
                       const auto Wk = w->value.middleRows(k * cin, cin);
                       Matrix Gx(Eigen::Index(ir.size()), cin);
                       Matrix Gy(Eigen::Index(ir.size()), dY.cols());
                       for (size_t p = 0; p < ir.size(); ++p) {
                         Gx.row(Eigen::Index(p)) = X.row(ir[p]);
                         Gy.row(Eigen::Index(p)) = dY.row(orow[p]);
                       }
                       w->grad.middleRows(k * cin, cin).noalias() += Gx.transpose() * Gy;
                       const Matrix back = Gy * Wk.transpose();
                       for (size_t p = 0; p < ir.size(); ++p) dX.row(ir[p]) += back.row(Eigen::Index(p));
                     }
                     xin->accumulate(dX);
                   });
}

Var relu(Tape* tape, const Var& x) {
  Matrix Y = x->value.features.cwiseMax(0.0);
  Var xin = x;
  return make_node(tape, make_tensor(x->value.coords, std::move(Y)), [xin](const Matrix& dY) {
    xin->accumulate((xin->value.features.array() > 0.0).select(dY, 0.0));
  });
}

Var sigmoid(Tape* tape, const Var& x) {
  Matrix Y = (1.0 / (1.0 + (-x->value.features.array()).exp())).matrix();
  Var xin = x;
  auto node = make_node(tape, make_tensor(x->value.coords, std::move(Y)), nullptr);
  if (tape) {
    Node* self = node.get();
    node->backward = [xin, self](const Matrix& dY) {
      const auto& s = self->value.features.array();
      xin->accumulate((dY.array() * s * (1.0 - s)).matrix());
    };
  }
  return node;
}

Var abs_floor(Tape* tape, const Var& x, double floor) {
  const auto& X = x->value.features.array();
  Matrix Y = X.abs().max(floor).matrix();
  Var xin = x;
  return make_node(tape, make_tensor(x->value.coords, std::move(Y)), [xin, floor](const Matrix& dY) {
    const auto& X = xin->value.features.array();
    Matrix g = (X.abs() > floor).select(dY.array() * X.sign(), 0.0).matrix();
    xin->accumulate(g);
  });
}

Var add(Tape* tape, const Var& a, const Var& b) {
  require_same_grid(a, b, "add");
  Matrix Y = a->value.features + b->value.features;
  Var ai = a, bi = b;
  return make_node(tape, make_tensor(a->value.coords, std::move(Y)), [ai, bi](const Matrix& dY) {
    ai->accumulate(dY);
    bi->accumulate(dY);
  });
}

Var sub(Tape* tape, const Var& a, const Var& b) {
  require_same_grid(a, b, "sub");
  Matrix Y = a->value.features - b->value.features;
  Var ai = a, bi = b;
  return make_node(tape, make_tensor(a->value.coords, std::move(Y)), [ai, bi](const Matrix& dY) {
    ai->accumulate(dY);
    bi->accumulate(-dY);
  });
}

Var scale(Tape* tape, const Var& x, double s) {
  Matrix Y = x->value.features * s;
  Var xin = x;
  return make_node(tape, make_tensor(x->value.coords, std::move(Y)),
                   [xin, s](const Matrix& dY) { xin->accumulate(dY * s); });
}

Var add_constant(Tape* tape, const Var& x, const Matrix& c) {
  if (c.rows() != x->value.features.rows() || c.cols() != x->value.features.cols())
    throw ShapeError("add_constant: shape mismatch");
  Matrix Y = x->value.features + c;
  Var xin = x;
  return make_node(tape, make_tensor(x->value.coords, std::move(Y)),
                   [xin](const Matrix& dY) { xin->accumulate(dY); });
}

Var concat(Tape* tape, const Var& a, const Var& b) {
  if (a->value.coords->coords() != b->value.coords->coords())
    throw ShapeError("concat: operands live on different coordinate sets");
  const Eigen::Index ca = a->value.features.cols();
  const Eigen::Index cb = b->value.features.cols();
  Matrix Y(a->value.features.rows(), ca + cb);
  Y.leftCols(ca) = a->value.features;
  Y.rightCols(cb) = b->value.features;
  Var ai = a, bi = b;
  return make_node(tape, make_tensor(a->value.coords, std::move(Y)), [ai, bi, ca, cb](const Matrix& dY) {
    ai->accumulate(dY.leftCols(ca));
    bi->accumulate(dY.rightCols(cb));
  });
}

double scalar_value(const Var& s) { return s->value.features(0, 0); }

Var weighted_sum(Tape* tape, const Var& a, double wa, const Var& b, double wb) {
  Matrix Y(1, 1);
  Y(0, 0) = wa * scalar_value(a) + wb * scalar_value(b);
  Var ai = a, bi = b;
  SparseTensor t{scalar_grid(), std::move(Y)};
  return make_node(tape, std::move(t), [ai, bi, wa, wb](const Matrix& dY) {
    ai->accumulate(dY * wa);
    bi->accumulate(dY * wb);
  });
}

Var focal_loss(Tape* tape, const Var& v, const CoordSet& truth, double alpha, double gamma,
               double eps) {
  if (v->value.features.cols() != 1) throw ShapeError("focal_loss: expects one probability channel");
  const CoordSet& cand = *v->value.coords;
  const Matrix& V = v->value.features;
  const auto term = [&](double p, bool u) {
    return u ? -alpha * std::pow(1 - p, gamma) * std::log(p)
             : -(1 - alpha) * std::pow(p, gamma) * std::log(1 - p);
  };
  std::vector<uint8_t> label(cand.size());
  double sum = 0;
  for (size_t i = 0; i < cand.size(); ++i) {
    label[i] = truth.contains(cand[i]);
    sum += term(std::clamp(V(Eigen::Index(i), 0), eps, 1 - eps), label[i]);
  }
  size_t missing = 0;
  for (const auto& c : truth.coords())
    if (!cand.contains(c)) ++missing;
  sum += double(missing) * term(eps, true);
  const double n = double(cand.size() + missing);
  Matrix Y(1, 1);
  Y(0, 0) = n > 0 ? sum / n : 0.0;
  Var vin = v;
  SparseTensor t{scalar_grid(), std::move(Y)};
  return make_node(tape, std::move(t), [vin, label, alpha, gamma, eps, n](const Matrix& dY) {
    const Matrix& V = vin->value.features;
    Matrix g = Matrix::Zero(V.rows(), 1);
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const double p = V(i, 0);
      if (p < eps || p > 1 - eps) continue;
      double d;
      if (label[size_t(i)]) {
        const double q = 1 - p;
        d = alpha * ((gamma > 0 ? gamma * std::pow(q, gamma - 1) * std::log(p) : 0.0) -
                     std::pow(q, gamma) / p);
      } else {
        d = -(1 - alpha) * ((gamma > 0 ? gamma * std::pow(p, gamma - 1) * std::log(1 - p) : 0.0) -
                            std::pow(p, gamma) / (1 - p));
      }
      g(i, 0) = dY(0, 0) * d / n;
    }
    vin->accumulate(g);
  });
}

namespace {

constexpr double kInvLn2 = 1.4426950408889634;

// Upper tail of the standard normal.
double normal_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var gaussian_bits(Tape* tape, const Var& r, const Var& sigma, double min_mass) {
  const Matrix& R = r->value.features;
  const Matrix& S = sigma->value.features;
  if (R.rows() != S.rows() || R.cols() != S.cols()) throw ShapeError("gaussian_bits: shape mismatch");
  const Eigen::Index n = R.size();
  // Per element: dm/dr, dm/dsigma and the mass, kept for the backward pass.
  auto cache = std::make_shared<std::vector<std::array<double, 3>>>(size_t(n));
  double bits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = S.data()[i];
    if (s <= 0) throw DomainError("gaussian_bits: sigma must be positive");
    // Evaluate on the side of zero where the tail mass is well-conditioned.
    const double x = std::abs(R.data()[i]);
    const double a = (x - 0.5) / s, b = (x + 0.5) / s;
    const double m = normal_q(a) - normal_q(b);
    const double sign = R.data()[i] < 0 ? -1.0 : 1.0;
    const double dr = sign * (normal_pdf(a) - normal_pdf(b)) / s * -1.0;
    const double ds = (a * normal_pdf(a) - b * normal_pdf(b)) / s;
    (*cache)[size_t(i)] = {dr, ds, m};
    bits -= std::log2(std::max(m, min_mass));
  }
  Matrix Y(1, 1);
  Y(0, 0) = bits;
  Var ri = r, si = sigma;
  SparseTensor t{scalar_grid(), std::move(Y)};
  return make_node(tape, std::move(t), [ri, si, cache, min_mass](const Matrix& dY) {
    const Matrix& R = ri->value.features;
    Matrix gr = Matrix::Zero(R.rows(), R.cols()), gs = gr;
    for (Eigen::Index i = 0; i < R.size(); ++i) {
      const auto& [dr, ds, m] = (*cache)[size_t(i)];
      if (m < min_mass) continue;
      const double k = -dY(0, 0) * kInvLn2 / m;
      gr.data()[i] = k * dr;
      gs.data()[i] = k * ds;
    }
    ri->accumulate(gr);
    si->accumulate(gs);
  });
}

Var logistic_bits(Tape* tape, const Var& z, Param& loc, Param& log_scale, double min_mass) {
  const Matrix& Z = z->value.features;
  const Eigen::Index C = Z.cols();
  if (loc.value.cols() != C || log_scale.value.cols() != C)
    throw ShapeError("logistic_bits: prior channel mismatch");
  auto cache = std::make_shared<std::vector<std::array<double, 3>>>(size_t(Z.size()));
  double bits = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index c = 0; c < C; ++c) {
      const double s = std::exp(log_scale.value(0, c));
      // Mirror to the lower tail for accuracy: mass is symmetric about loc.
      const double d = Z(i, c) - loc.value(0, c);
      const double x = -std::abs(d);
      const double a = (x - 0.5) / s, b = (x + 0.5) / s;
      const double la = logistic(a), lb = logistic(b);
      const double m = lb - la;
      const double ga = la * (1 - la), gb = lb * (1 - lb);
      const double sign = d < 0 ? 1.0 : -1.0;
      const double dz = sign * (gb - ga) / s;
      const double dls = a * ga - b * gb;
      (*cache)[size_t(i * C + c)] = {dz, dls, m};
      bits -= std::log2(std::max(m, min_mass));
    }
  Matrix Y(1, 1);
  Y(0, 0) = bits;
  Var zi = z;
  Param* lp = &loc;
  Param* sp = &log_scale;
  SparseTensor t{scalar_grid(), std::move(Y)};
  return make_node(tape, std::move(t), [zi, lp, sp, cache, min_mass, C](const Matrix& dY) {
    const Matrix& Z = zi->value.features;
    Matrix gz = Matrix::Zero(Z.rows(), Z.cols());
    if (lp->grad.size() == 0) lp->zero_grad();
    if (sp->grad.size() == 0) sp->zero_grad();
    for (Eigen::Index i = 0; i < Z.rows(); ++i)
      for (Eigen::Index c = 0; c < C; ++c) {
        const auto& [dz, dls, m] = (*cache)[size_t(i * C + c)];
        if (m < min_mass) continue;
        const double k = -dY(0, 0) * kInvLn2 / m;
        gz(i, c) = k * dz;
        lp->grad(0, c) -= k * dz;
        sp->grad(0, c) += k * dls;
      }
    zi->accumulate(gz);
  });
}

}  // namespace ag
}  // namespace jpcc
