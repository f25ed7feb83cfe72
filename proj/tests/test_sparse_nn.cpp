// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <random>

#include "doctest.h"
#include "jpcc/fixed_point.hpp"
#include "jpcc/models.hpp"

using namespace jpcc;

namespace {

Var ones(std::vector<Vec3i> c, int32_t stride = 1, int ch = 1, double v = 1.0) {
  auto cs = make_coords(std::move(c), stride);
  return ag::leaf(make_tensor(cs, Matrix::Constant(Eigen::Index(cs->size()), ch, v)));
}

std::vector<Vec3i> random_coords(std::mt19937_64& rng, size_t n, int32_t extent) {
  std::uniform_int_distribution<int32_t> d(0, extent - 1);
  std::vector<Vec3i> c;
  for (size_t i = 0; i < n; ++i) c.push_back({d(rng), d(rng), d(rng)});
  return c;
}

}  // namespace

TEST_CASE("kernel map: stride-2 output grid") {
  auto in = make_coords({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}}, 1);
  auto r = build_kernel_map(in, {3, 3, 3}, 2);
  CHECK(r.out->coords() == std::vector<Vec3i>{{0, 0, 0}, {2, 2, 2}});
  CHECK(r.out->stride() == 2);
}

TEST_CASE("kernel map: 1^3 identity and 3^3 neighbours") {
  auto in = make_coords({{0, 0, 0}, {1, 1, 0}}, 1);
  auto id = build_kernel_map(in, {1, 1, 1}, 1);
  REQUIRE(id.map.volume() == 1);
  CHECK(id.map.in_rows[0] == std::vector<int32_t>{0, 1});
  CHECK(id.map.out_rows[0] == std::vector<int32_t>{0, 1});
  auto nb = build_kernel_map(in, {3, 3, 3}, 1);
  CHECK(nb.map.pair_count() == 4);  // each output sees both inputs
}

TEST_CASE("kernel offsets: odd centred, even anchored") {
  auto odd = kernel_offsets({3, 1, 1});
  CHECK(odd == std::vector<Vec3i>{{-1, 0, 0}, {0, 0, 0}, {1, 0, 0}});
  auto even = kernel_offsets({2, 2, 2});
  CHECK(even.front() == Vec3i{0, 0, 0});
  CHECK(even.back() == Vec3i{1, 1, 1});
}

TEST_CASE("sparse conv semantics") {
  ParamStore ps;
  SUBCASE("1^3 identity weight is the identity") {
    auto spec = spconv("id", 1, 3, 3);
    ps.declare(spec);
    ps.weight("id").value = Matrix::Identity(3, 3);
    std::mt19937_64 rng(1);
    auto cs = make_coords(random_coords(rng, 20, 8), 1);
    Matrix f = Matrix::Random(Eigen::Index(cs->size()), 3);
    auto y = apply_layer(nullptr, spec, ps, ag::leaf(make_tensor(cs, f)));
    CHECK((y->value.features - f).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single point only sees the centre tap") {
    auto spec = spconv("c", 3, 1, 1);
    ps.declare(spec);
    ps.weight("c").value.setOnes();
    auto y = apply_layer(nullptr, spec, ps, ones({{4, 4, 4}}, 1, 1, 2.0));
    CHECK(y->value.features(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("relu clamps negatives") {
    auto spec = spconv("r", 1, 1, 1, 1, Activation::ReLU);
    ps.declare(spec);
    ps.weight("r").value.setOnes();
    auto y = apply_layer(nullptr, spec, ps, ones({{0, 0, 0}}, 1, 1, -1.0));
    CHECK(y->value.features(0, 0) == 0.0);
  }
  SUBCASE("channel mismatch") {
    auto spec = spconv("m", 1, 2, 1);
    ps.declare(spec);
    CHECK_THROWS_AS(apply_layer(nullptr, spec, ps, ones({{0, 0, 0}})), ShapeError);
  }
}

TEST_CASE("generative transposed conv") {
  ParamStore ps;
  auto g2 = gtspconv("g2", 2, 1, 1, 2);
  ps.declare(g2);
  auto y = apply_layer(nullptr, g2, ps, ones({{0, 0, 0}}, 2));
  CHECK(y->value.size() == 8);
  CHECK(y->value.coords->stride() == 1);
  CHECK(y->value.features.cwiseAbs().maxCoeff() == 0.0);  // zero weights, coords still generated

  auto g3 = gtspconv("g3", 3, 1, 1, 1);
  ps.declare(g3);
  auto z = apply_layer(nullptr, g3, ps, ones({{0, 0, 0}}, 1));
  CHECK(z->value.size() == 27);
  LayerGuide clip;
  clip.clip = std::make_pair(Vec3i{0, 0, 0}, Vec3i{10, 10, 10});
  auto zc = apply_layer(nullptr, g3, ps, ones({{0, 0, 0}}, 1), &clip);
  CHECK(zc->value.size() == 8);

  std::mt19937_64 rng(3);
  auto pts = random_coords(rng, 30, 6);
  for (auto& p : pts) p = p * 2;
  auto x = ones(pts, 2);
  auto out = apply_layer(nullptr, g3, ps, x);
  CHECK(out->value.size() <= x->value.size() * 27);
}

TEST_CASE("transposed conv follows skip coordinates") {
  ParamStore ps;
  auto t = tspconv("t", 2, 1, 1, 2);
  ps.declare(t);
  auto skip = make_coords({{0, 0, 0}, {1, 1, 1}}, 1);
  LayerGuide g;
  g.target = [&](int32_t) { return skip; };
  auto y = apply_layer(nullptr, t, ps, ones({{0, 0, 0}}, 2), &g);
  CHECK(y->value.size() == 2);
  CHECK(y->value.coords == skip);

  auto wrong = make_coords({{0, 0, 0}}, 2);
  LayerGuide bad;
  bad.target = [&](int32_t) { return wrong; };
  CHECK_THROWS_AS(apply_layer(nullptr, t, ps, ones({{0, 0, 0}}, 2), &bad), ShapeError);
}

TEST_CASE("IRB and LIRB") {
  CHECK([] {
    int64_t n = 0;
    for (auto& l : irb_layers("b", 32)) n += l.parameter_count();
    return n;
  }() == 43600);
  CHECK_THROWS_AS(irb_layers("b", 6), ShapeError);
  CHECK_THROWS_AS(lirb_layers("b", 6), ShapeError);

  for (bool light : {false, true}) {
    ParamStore ps;
    for (auto& l : light ? lirb_layers("b", 8) : irb_layers("b", 8)) ps.declare(l);
    std::mt19937_64 rng(2);
    auto cs = make_coords(random_coords(rng, 30, 6), 1);
    Matrix f = Matrix::Random(Eigen::Index(cs->size()), 8);
    auto x = ag::leaf(make_tensor(cs, f));
    auto y = light ? lirb_forward(nullptr, ps, "b", 8, x) : irb_forward(nullptr, ps, "b", 8, x);
    CHECK(y->value.coords == cs);
    CHECK(y->value.channels() == 8);
    CHECK((y->value.features - f).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("coding model parameter counts") {
  CodingModel m;
  CHECK(m.analysis().parameter_count() == 1208432);
  CHECK(m.synthesis().parameter_count() == 1127728);
  CHECK(m.hyper_analysis().parameter_count() == 1327360);
  CHECK(m.hyper_mean().parameter_count() == 704896);
  CHECK(m.hyper_scale().parameter_count() == 704896);
  CHECK(m.parameter_count() == 5073312);
}

TEST_CASE("sr model parameter counts") {
  SrModel s2(SrConfig::full(2)), s4(SrConfig::full(4));
  CHECK(s2.parameter_count() == 7253817);
  CHECK(s4.parameter_count() == 7278905);
  CHECK(s4.parameter_count() - s2.parameter_count() == 25088);
  CHECK_THROWS_AS(SrModel(SrConfig::full(3)), ConfigError);
}

TEST_CASE("full analysis on one point gives a 128-channel latent") {
  CodingModel m;
  init_params(m.params(), 7, 0.1);
  auto y = m.run_analysis(nullptr, ones({{3, 5, 7}}));
  CHECK(y->value.channels() == 128);
  CHECK(y->value.coords->stride() == kLatentStride);
  CHECK(y->value.coords->coords() == std::vector<Vec3i>{{0, 0, 0}});
}

TEST_CASE("toy coding model strides and candidate bound") {
  CodingModel m(CodingWidths::toy());
  m.init_random(11);
  std::mt19937_64 rng(5);
  auto x = ones(random_coords(rng, 200, 32));
  auto y = m.run_analysis(nullptr, x);
  CHECK(y->value.coords->stride() == 8);
  auto z = m.run_hyper_analysis(nullptr, y);
  CHECK(z->value.coords->stride() == 32);
  CHECK(z->value.coords->coords() == derive_hyper_coords(y->value.coords)->coords());
  auto mu = m.run_hyper_mean(nullptr, z, y->value.coords);
  CHECK(mu->value.coords->coords() == y->value.coords->coords());
  auto xh = m.run_synthesis(nullptr, y, 31);
  CHECK(xh->value.size() <= y->value.size() * 512);
  CHECK(xh->value.channels() == 1);
  CHECK(xh->value.features.minCoeff() > 0.0);
  CHECK(xh->value.features.maxCoeff() < 1.0);
}

TEST_CASE("derive_hyper_coords") {
  auto y = make_coords({{0, 0, 0}, {32, 0, 0}, {56, 0, 0}}, 8);  // latent units 0, 4, 7
  auto z = derive_hyper_coords(y);
  CHECK(z->coords() == std::vector<Vec3i>{{0, 0, 0}, {32, 0, 0}});
  CHECK(z->stride() == 32);
}

TEST_CASE("fixed-point hyper scale path") {
  CodingModel m(CodingWidths::toy());
  m.init_random(23);
  std::mt19937_64 rng(9);
  std::vector<Vec3i> yc;
  for (auto& c : random_coords(rng, 40, 6)) yc.push_back(c * 8);
  auto ycs = make_coords(yc, 8);
  auto zcs = derive_hyper_coords(ycs);
  std::uniform_int_distribution<int> s(-3, 3);
  Matrix zf(Eigen::Index(zcs->size()), 16);
  for (Eigen::Index i = 0; i < zf.size(); ++i) zf.data()[i] = s(rng);
  SparseTensor zh = make_tensor(zcs, zf);

  auto a = m.sigma_codes(zh, ycs);
  auto b = m.sigma_codes(zh, ycs);
  CHECK(a.data == b.data);
  CHECK(a.frac == 16);

  auto fl = m.run_hyper_scale(nullptr, ag::leaf(zh), ycs);
  double worst = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data[i]) / 65536.0 - fl->value.features.data()[i]));
  CHECK(worst <= std::ldexp(1.0, -15));

  SUBCASE("zero input gives bias-only output") {
    SparseTensor z0 = make_tensor(zcs, Matrix::Zero(zf.rows(), zf.cols()));
    auto f0 = m.sigma_codes(z0, ycs);
    auto r0 = m.run_hyper_scale(nullptr, ag::leaf(z0), ycs);
    for (size_t i = 0; i < f0.data.size(); ++i)
      CHECK(std::abs(double(f0.data[i]) / 65536.0 - r0->value.features.data()[i]) <= std::ldexp(1.0, -15));
  }
}

TEST_CASE("fixed-point overflow is detected") {
  FixedPointModel fm;
  FixedLayer L;
  L.spec = spconv("o", 1, 1, 1);
  L.weight = {int64_t(1) << 62};
  L.bias = {0};
  L.w_frac = 0;
  fm.layers.push_back(L);
  FixedTensor in;
  in.coords = make_coords({{0, 0, 0}}, 1);
  in.channels = 1;
  in.data = {4};
  CHECK_THROWS_AS(fixed_point_forward(fm, in), OverflowError);
  CHECK(rescale(3, 1, 0) == 2);    // 1.5 rounds up
  CHECK(rescale(-3, 1, 0) == -1);  // -1.5 rounds up
}

TEST_CASE("weight container round trip and validation") {
  CodingModel m(CodingWidths::toy());
  m.init_random(4);
  const auto bytes = m.to_weights().serialize();
  CodingModel back = CodingModel::from_weights(WeightFile::parse(bytes));
  CHECK(back.to_weights().serialize() == bytes);
  for (const auto& [name, p] : m.params().all())
    CHECK((back.params().at(name).value - p.value).cwiseAbs().maxCoeff() == 0.0);

  WeightFile wf = m.to_weights();
  wf.set_meta("layer.0003", "analysis.bogus SpConv 1x1x1 1 1 1 bias none");
  CHECK_THROWS_AS(CodingModel::from_weights(wf), ConfigError);

  WeightFile miss = m.to_weights();
  miss.erase("analysis.conv0.weight");
  CHECK_THROWS_AS(CodingModel::from_weights(miss), ConfigError);

  SrModel s(SrConfig::toy(2));
  s.init_random(3);
  const auto sb = s.to_weights().serialize();
  CHECK(SrModel::from_weights(WeightFile::parse(sb)).to_weights().serialize() == sb);
  CHECK_THROWS_AS(WeightFile::parse(std::vector<uint8_t>{'X', 'X', 'X', 'X'}), ParseError);
}

TEST_CASE("toy SR forward") {
  SrModel s(SrConfig::toy(2));
  s.init_random(8, 0.5);
  std::mt19937_64 rng(6);
  std::vector<Vec3i> c;
  for (auto& p : random_coords(rng, 60, 8)) c.push_back(p * 2);
  auto x = ones(c, 2);
  auto y = s.forward(nullptr, x, 15);
  CHECK(y->value.size() <= x->value.size() * 27);
  CHECK(y->value.coords->stride() == 1);
  for (const auto& p : y->value.coords->coords()) {
    CHECK(p.x >= 0);
    CHECK(p.x <= 15);
  }
}
