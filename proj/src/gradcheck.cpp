// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "jpcc/layers.hpp"
#include "jpcc/models.hpp"
#include "jpcc/training.hpp"

namespace jpcc {

GradCheckResult check_gradients(const std::string& name, const std::function<Var(Tape*)>& f,
                                const std::vector<GradTarget>& targets, std::mt19937_64& rng,
                                size_t max_entries, double step) {
  Tape tape;
  Var out = f(&tape);
  const Matrix& Y = out->value.features;
  Matrix W = Matrix::Ones(Y.rows(), Y.cols());
  if (Y.size() != 1) {
    std::normal_distribution<double> g(0, 1);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = g(rng);
  }
  for (const auto& t : targets) *t.grad = Matrix();
  tape.backward(out, W);
  std::vector<Matrix> analytic;
  for (const auto& t : targets)
    analytic.push_back(t.grad->size() ? *t.grad : Matrix::Zero(t.value->rows(), t.value->cols()));

  auto objective = [&] {
    Var o = f(nullptr);
    if (o->value.features.rows() != W.rows() || o->value.features.cols() != W.cols())
      throw ShapeError(name + ": output shape changed under perturbation");
    return (o->value.features.array() * W.array()).sum();
  };

  GradCheckResult res;
  res.name = name;
  const double f0 = objective();
  for (size_t t = 0; t < targets.size(); ++t) {
    Matrix& v = *targets[t].value;
    std::vector<Eigen::Index> idx(size_t(v.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index(0));
    if (idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    double diff = 0, na = 0, nn = 0;
    for (Eigen::Index i : idx) {
      const double x0 = v.data()[i];
      // A kink inside [x0-h, x0+h] shows up as disagreeing one-sided slopes;
      // shrink the step, and drop the entry if it never goes away.
      bool smooth = false;
      double num = 0;
      for (double h = step * std::max(1.0, std::abs(x0)), tries = 0; tries < 3; h /= 16, ++tries) {
        v.data()[i] = x0 + h;
        const double fp = objective();
        v.data()[i] = x0 - h;
        const double fm = objective();
        v.data()[i] = x0;
        const double sp = (fp - f0) / h, sm = (f0 - fm) / h;
        num = (fp - fm) / (2 * h);
        if (std::abs(sp - sm) <= 1e-3 * std::max(std::abs(sp), std::abs(sm)) + 1e-12 * (1 + std::abs(f0)) / h) {
          smooth = true;
          break;
        }
      }
      if (!smooth) {
        ++res.skipped;
        continue;
      }
      const double a = analytic[t].data()[i];
      diff += (a - num) * (a - num);
      na += a * a;
      nn += num * num;
      ++res.entries;
    }
    const double scale = std::sqrt(std::max(na, nn));
    const double err = scale < 1e-10 ? 0.0 : std::sqrt(diff) / scale;
    res.max_rel_error = std::max(res.max_rel_error, err);
  }
  return res;
}

namespace {

struct Suite {
  std::mt19937_64 rng;
  std::vector<GradCheckResult> results;

  Matrix normal(Eigen::Index r, Eigen::Index c, double sd = 1.0) {
    std::normal_distribution<double> g(0, sd);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  }
  Matrix uniform(Eigen::Index r, Eigen::Index c, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  }
  // Values kept at least `gap` away from zero so no kink sits within a step.
  Matrix away_from_zero(Eigen::Index r, Eigen::Index c, double gap) {
    Matrix m = normal(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = (m.data()[i] < 0 ? -1 : 1) * (gap + std::abs(m.data()[i]));
    return m;
  }
  Var leaf(const CoordSetPtr& cs, Matrix f) { return ag::leaf(make_tensor(cs, std::move(f))); }
  static GradTarget of(const std::string& n, const Var& v) {
    return {n, &v->value.features, &v->grad};
  }
  static GradTarget of(const std::string& n, Param& p) { return {n, &p.value, &p.grad}; }

  void run(const std::string& name, const std::function<Var(Tape*)>& f,
           const std::vector<GradTarget>& targets, size_t max_entries = 24) {
    results.push_back(check_gradients(name, f, targets, rng, max_entries));
  }
};

std::vector<Vec3i> random_points(std::mt19937_64& rng, size_t n, int32_t extent, int32_t stride) {
  std::uniform_int_distribution<int32_t> d(0, extent - 1);
  std::set<Vec3i> s;
  const size_t cap = size_t(extent) * size_t(extent) * size_t(extent);
  while (s.size() < std::min(n, cap)) s.insert(Vec3i{d(rng), d(rng), d(rng)} * stride);
  return {s.begin(), s.end()};
}

void init_with_bias(ParamStore& ps, Suite& s) {
  init_params(ps, s.rng(), 1.0);
  for (auto& [name, p] : ps.all())
    if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0)
      p.value = s.normal(p.value.rows(), p.value.cols(), 0.3);
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(uint64_t seed, size_t points) {
  Suite s{std::mt19937_64(seed), {}};
  const int C = 4;
  auto cs = make_coords(random_points(s.rng, points, 6, 1), 1);
  auto coarse = downsample_grid(*cs, 2);

  // Convolution kinds.
  struct ConvCase {
    std::string name;
    LayerSpec spec;
    CoordSetPtr in;
    LayerGuide guide;
  };
  std::vector<ConvCase> convs;
  convs.push_back({"spconv", spconv("t", 3, C, C), cs, {}});
  convs.push_back({"spconv_strided", spconv("t", 2, C, C, 2), cs, {}});
  {
    LayerGuide g;
    g.target = [cs](int32_t st) -> CoordSetPtr { return st == 1 ? cs : nullptr; };
    convs.push_back({"tspconv", tspconv("t", 2, C, C, 2), coarse, g});
  }
  {
    LayerGuide g;
    g.clip = std::make_pair(Vec3i{0, 0, 0}, Vec3i{5, 5, 5});
    convs.push_back({"gtspconv", gtspconv("t", 3, C, C, 2), coarse, g});
  }
  for (auto& c : convs) {
    ParamStore ps;
    ps.declare(c.spec);
    init_with_bias(ps, s);
    Var x = s.leaf(c.in, s.normal(Eigen::Index(c.in->size()), C));
    const LayerGuide* g = (c.guide.target || c.guide.clip) ? &c.guide : nullptr;
    s.run(c.name, [&](Tape* t) { return apply_layer(t, c.spec, ps, x, g); },
          {Suite::of("x", x), Suite::of("weight", ps.weight("t")), Suite::of("bias", *ps.bias("t"))});
  }

  // Point-wise ops.
  const Eigen::Index n = Eigen::Index(cs->size());
  {
    Var x = s.leaf(cs, s.away_from_zero(n, C, 0.05));
    s.run("relu", [&](Tape* t) { return ag::relu(t, x); }, {Suite::of("x", x)});
  }
  {
    Var x = s.leaf(cs, s.normal(n, C, 2.0));
    s.run("sigmoid", [&](Tape* t) { return ag::sigmoid(t, x); }, {Suite::of("x", x)});
  }
  {
    Var x = s.leaf(cs, s.away_from_zero(n, C, 0.2));
    s.run("abs_floor", [&](Tape* t) { return ag::abs_floor(t, x, 0.1); }, {Suite::of("x", x)});
  }
  {
    Var a = s.leaf(cs, s.normal(n, C)), b = s.leaf(cs, s.normal(n, C));
    s.run("add", [&](Tape* t) { return ag::add(t, a, b); }, {Suite::of("a", a), Suite::of("b", b)});
    s.run("sub", [&](Tape* t) { return ag::sub(t, a, b); }, {Suite::of("a", a), Suite::of("b", b)});
    s.run("scale", [&](Tape* t) { return ag::scale(t, a, -1.7); }, {Suite::of("a", a)});
    const Matrix noise = s.uniform(n, C, -0.5, 0.5);
    s.run("add_constant", [&](Tape* t) { return ag::add_constant(t, a, noise); }, {Suite::of("a", a)});
    Var c = s.leaf(cs, s.normal(n, 2));
    s.run("concat", [&](Tape* t) { return ag::concat(t, a, c); }, {Suite::of("a", a), Suite::of("c", c)});
  }
  {
    auto scalar = [&] {
      SparseTensor t{make_coords({}, 1), s.normal(1, 1)};
      return ag::leaf(std::move(t));
    };
    Var a = scalar(), b = scalar();
    s.run("weighted_sum", [&](Tape* t) { return ag::weighted_sum(t, a, 0.3, b, -2.0); },
          {Suite::of("a", a), Suite::of("b", b)});
  }

  // Residual blocks.
  for (const bool light : {false, true}) {
    ParamStore ps;
    for (const auto& l : light ? lirb_layers("blk", C) : irb_layers("blk", C)) ps.declare(l);
    init_with_bias(ps, s);
    Var x = s.leaf(cs, s.normal(n, C));
    std::vector<GradTarget> targets{Suite::of("x", x)};
    for (const auto* w : light ? std::vector<const char*>{"blk.b0", "blk.c1"}
                               : std::vector<const char*>{"blk.a0", "blk.b1", "blk.d0"})
      targets.push_back(Suite::of(w, ps.weight(w)));
    s.run(light ? "lirb" : "irb",
          [&](Tape* t) {
            return light ? lirb_forward(t, ps, "blk", C, x) : irb_forward(t, ps, "blk", C, x);
          },
          targets);
  }

  // Focal loss, including truth voxels outside the candidates.
  {
    Var v = s.leaf(cs, s.uniform(n, 1, 0.05, 0.95));
    std::vector<Vec3i> truth;
    for (size_t i = 0; i < cs->size(); ++i)
      if (s.rng() % 2) truth.push_back((*cs)[i]);
    for (int i = 0; i < 5; ++i) truth.push_back({10 + i, 10, 10});
    auto tc = make_coords(truth, 1);
    s.run("focal_loss", [&](Tape* t) { return ag::focal_loss(t, v, *tc, 0.5, 2.0); },
          {Suite::of("v", v)});
    s.run("focal_loss_gamma0", [&](Tape* t) { return ag::focal_loss(t, v, *tc, 0.25, 0.0); },
          {Suite::of("v", v)});
  }

  // Entropy terms.
  {
    Var r = s.leaf(cs, s.normal(n, C, 1.5));
    Var sigma = s.leaf(cs, s.uniform(n, C, 0.3, 3.0));
    s.run("gaussian_bits", [&](Tape* t) { return ag::gaussian_bits(t, r, sigma); },
          {Suite::of("r", r), Suite::of("sigma", sigma)});
    Param loc, ls;
    loc.value = s.normal(1, C, 0.5);
    ls.value = s.normal(1, C, 0.3);
    Var z = s.leaf(cs, s.normal(n, C, 2.0));
    s.run("logistic_bits", [&](Tape* t) { return ag::logistic_bits(t, z, loc, ls); },
          {Suite::of("z", z), Suite::of("loc", loc), Suite::of("log_scale", ls)});
  }

  // Rate proxy through the hyper transforms, with the noise fixed.
  CodingModel m(CodingWidths::toy());
  m.init_random(s.rng(), 0.5);
  {
    auto yc = make_coords(random_points(s.rng, points, 4, kLatentStride), kLatentStride);
    Var y = s.leaf(yc, s.normal(Eigen::Index(yc->size()), m.widths().latent, 2.0));
    const uint64_t noise_seed = s.rng();
    auto& P = m.params();
    s.run("rate_proxy",
          [&](Tape* t) {
            std::mt19937_64 noise(noise_seed);
            return rate_proxy(t, m, y, 1.3, &noise).bits;
          },
          {Suite::of("y", y), Suite::of("hyper_analysis", P.weight(m.hyper_analysis().layers()[0].name)),
           Suite::of("hyper_mean", P.weight(m.hyper_mean().layers().back().name)),
           Suite::of("hyper_scale", P.weight(m.hyper_scale().layers().back().name)),
           Suite::of("prior.loc", P.at("prior.loc")), Suite::of("prior.log_scale", P.at("prior.log_scale"))},
          12);
  }

  // End to end: analysis, rate proxy, synthesis and focal loss.
  {
    const auto block = random_points(s.rng, points, 16, 1);
    const uint64_t noise_seed = s.rng();
    TrainConfig cfg;
    auto& P = m.params();
    s.run("coding_loss",
          [&](Tape* t) {
            std::mt19937_64 noise(noise_seed);
            return coding_loss(t, m, block, 16, 0.01, cfg, &noise).loss;
          },
          {Suite::of("analysis", P.weight(m.analysis().layers().front().name)),
           Suite::of("synthesis", P.weight(m.synthesis().layers().back().name)),
           Suite::of("hyper_scale", P.weight(m.hyper_scale().layers().back().name))},
          8);
  }
  return s.results;
}

}  // namespace jpcc
