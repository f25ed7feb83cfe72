// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/models.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace jpcc {

std::string describe_layer(const LayerSpec& l) {
  std::ostringstream s;
  s << l.name << ' ' << to_string(l.kind) << ' ' << l.kernel.x << 'x' << l.kernel.y << 'x'
    << l.kernel.z << ' ' << l.in_channels << ' ' << l.out_channels << ' ' << l.stride << ' '
    << (l.has_bias ? "bias" : "nobias") << ' ' << to_string(l.activation);
  return s.str();
}

void store_params(WeightFile& wf, const ParamStore& params, const std::vector<LayerSpec>& layers) {
  for (const auto& l : layers) {
    wf.put_matrix(l.name + ".weight", params.weight(l.name).value,
                  {kernel_volume(l.kernel), l.in_channels, l.out_channels});
    if (const Param* b = params.bias(l.name)) wf.put_matrix(l.name + ".bias", b->value, {l.out_channels});
  }
}

void load_params(const WeightFile& wf, ParamStore& params, const std::vector<LayerSpec>& layers) {
  for (const auto& l : layers) {
    try {
      Param& w = params.weight(l.name);
      w.value = wf.get_matrix(l.name + ".weight", w.value.rows(), w.value.cols());
      if (Param* b = params.bias(l.name)) b->value = wf.get_matrix(l.name + ".bias", 1, b->value.cols());
      else if (wf.has(l.name + ".bias")) throw ShapeError("unexpected bias");
    } catch (const Error& e) {
      throw ConfigError("weights: layer '" + describe_layer(l) + "' does not validate: " + e.what());
    }
  }
}

namespace {

void write_manifest(WeightFile& wf, const std::vector<LayerSpec>& layers) {
  wf.set_meta("layers", std::to_string(layers.size()));
  for (size_t i = 0; i < layers.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "layer.%04zu", i);
    wf.set_meta(key, describe_layer(layers[i]));
  }
}

void check_manifest(const WeightFile& wf, const std::vector<LayerSpec>& layers) {
  const size_t n = std::stoul(wf.meta("layers"));
  if (n != layers.size())
    throw ConfigError("weights: manifest lists " + std::to_string(n) + " layers, model has " +
                      std::to_string(layers.size()));
  for (size_t i = 0; i < n; ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "layer.%04zu", i);
    const std::string want = describe_layer(layers[i]);
    if (wf.meta(key) != want)
      throw ConfigError("weights: layer " + std::to_string(i) + " is '" + wf.meta(key) +
                        "', expected '" + want + "'");
  }
}

std::vector<LayerSpec> all_layers(const std::array<const Sequential*, 5>& subs) {
  std::vector<LayerSpec> out;
  for (const auto* s : subs)
    for (auto& l : s->layers()) out.push_back(l);
  return out;
}

}  // namespace

CodingModel::CodingModel(CodingWidths w) : widths_(w) {
  const auto R = Activation::ReLU;
  const auto N = Activation::None;
  const int c1 = w.c1, c2 = w.c2, L = w.latent, H = w.hyper;

  analysis_.add_layer(spconv("analysis.conv0", 3, 1, c1, 2, R));
  analysis_.add_irb(c1);
  analysis_.add_layer(spconv("analysis.conv1", 3, c1, c2, 2, R));
  analysis_.add_irb(c2);
  analysis_.add_layer(spconv("analysis.conv2", 3, c2, L, 2, R));
  analysis_.add_irb(L);
  analysis_.add_layer(spconv("analysis.conv3", 1, L, L, 1, N, false));

  synthesis_.add_layer(gtspconv("synthesis.up0", 2, L, L, 2, R));
  synthesis_.add_irb(L);
  synthesis_.add_layer(gtspconv("synthesis.up1", 2, L, c2, 2, R));
  synthesis_.add_irb(c2);
  synthesis_.add_layer(gtspconv("synthesis.up2", 2, c2, c1, 2, R));
  synthesis_.add_irb(c1);
  synthesis_.add_layer(spconv("synthesis.out", 1, c1, 1, 1, Activation::Sigmoid, false));

  hyper_analysis_.add_layer(spconv("hyper_analysis.conv0", 3, L, H, 1, R));
  hyper_analysis_.add_layer(spconv("hyper_analysis.conv1", 3, H, H, 2, R));
  hyper_analysis_.add_layer(spconv("hyper_analysis.conv2", 3, H, H, 2, N, false));

  for (Sequential* s : {&hyper_mean_, &hyper_scale_}) {
    const std::string p = s->name();
    s->add_layer(gtspconv(p + ".up0", 2, H, H, 2, R));
    s->add_layer(gtspconv(p + ".up1", 2, H, H, 2, R));
    s->add_layer(spconv(p + ".conv", 3, H, L, 1, N));
  }

  for (const auto* s : submodels()) s->declare(params_);
  params_.add("prior.loc", 1, H);
  params_.add("prior.log_scale", 1, H);
  rebuild_prior();
}

std::array<const Sequential*, 5> CodingModel::submodels() const {
  return {&analysis_, &synthesis_, &hyper_analysis_, &hyper_mean_, &hyper_scale_};
}

int64_t CodingModel::parameter_count() const {
  int64_t n = 0;
  for (const auto* s : submodels()) n += s->parameter_count();
  return n;
}

void CodingModel::rebuild_prior() {
  const Matrix& loc = params_.at("prior.loc").value;
  const Matrix& ls = params_.at("prior.log_scale").value;
  std::vector<double> l(size_t(loc.cols())), s(size_t(loc.cols()));
  for (Eigen::Index c = 0; c < loc.cols(); ++c) {
    l[size_t(c)] = loc(0, c);
    s[size_t(c)] = std::exp(ls(0, c));
  }
  prior_ = FactorizedPrior::from_logistic(l, s);
}

void CodingModel::init_random(uint64_t seed, double gain) {
  init_params(params_, seed, gain);
  params_.at("prior.loc").value.setZero();
  params_.at("prior.log_scale").value.setZero();
  rebuild_prior();
  std::vector<Vec3i> cube;
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 0; z < 4; ++z) cube.push_back(Vec3i{x, y, z} * kLatentStride);
  quantize_hyper_scale({make_coords(std::move(cube), kLatentStride)}, seed ^ 0x5eedULL);
}

void CodingModel::quantize_hyper_scale(const std::vector<CoordSetPtr>& latent_coords, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> sym(-4, 4);
  std::vector<std::pair<Var, LayerGuide>> calib;
  for (const auto& yc : latent_coords) {
    auto zc = derive_hyper_coords(yc);
    Matrix f(Eigen::Index(zc->size()), widths_.hyper);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = sym(rng);
    calib.emplace_back(ag::leaf(make_tensor(zc, std::move(f))), hyper_synthesis_guide(yc));
  }
  fixed_ = quantize_sequential(hyper_scale_, params_, calib);
}

Var CodingModel::run_analysis(Tape* tape, const Var& x) { return analysis_.forward(tape, params_, x); }

Var CodingModel::run_hyper_analysis(Tape* tape, const Var& y) {
  return hyper_analysis_.forward(tape, params_, y);
}

Var CodingModel::run_hyper_mean(Tape* tape, const Var& z, const CoordSetPtr& y_coords) {
  const LayerGuide g = hyper_synthesis_guide(y_coords);
  return hyper_mean_.forward(tape, params_, z, &g);
}

Var CodingModel::run_hyper_scale(Tape* tape, const Var& z, const CoordSetPtr& y_coords) {
  const LayerGuide g = hyper_synthesis_guide(y_coords);
  return hyper_scale_.forward(tape, params_, z, &g);
}

Var CodingModel::run_synthesis(Tape* tape, const Var& y, int32_t clip_hi) {
  LayerGuide g;
  g.clip = std::make_pair(Vec3i{0, 0, 0}, Vec3i{clip_hi, clip_hi, clip_hi});
  return synthesis_.forward(tape, params_, y, &g);
}

FixedTensor CodingModel::sigma_codes(const SparseTensor& z_hat, const CoordSetPtr& y_coords) const {
  if (fixed_.empty()) throw ConfigError("coding model has no fixed-point hyper scale transform");
  FixedTensor in;
  in.coords = z_hat.coords;
  in.channels = z_hat.channels();
  in.frac = 0;
  in.data.resize(size_t(z_hat.features.size()));
  for (Eigen::Index i = 0; i < z_hat.features.size(); ++i) {
    const double v = z_hat.features.data()[i];
    if (v != std::floor(v)) throw DomainError("hyper latent must be integer-valued");
    in.data[size_t(i)] = int64_t(v);
  }
  const LayerGuide g = hyper_synthesis_guide(y_coords);
  FixedTensor out = fixed_point_forward(fixed_, in, &g);
  if (out.coords->coords() != y_coords->coords())
    throw IntegrityError("hyper scale output does not cover the latent coordinates");
  return out;
}

LayerGuide hyper_synthesis_guide(const CoordSetPtr& y_coords) {
  LayerGuide g;
  auto parent = downsample_grid(*y_coords, 2);
  g.target = [y_coords, parent](int32_t stride) -> CoordSetPtr {
    if (stride == y_coords->stride()) return y_coords;
    if (stride == parent->stride()) return parent;
    return nullptr;
  };
  return g;
}

CoordSetPtr derive_hyper_coords(const CoordSetPtr& y_coords) {
  return downsample_grid(*y_coords, kHyperStride / y_coords->stride());
}

WeightFile CodingModel::to_weights() const {
  WeightFile wf;
  wf.set_meta("model", "coding");
  wf.set_meta("widths", std::to_string(widths_.c1) + " " + std::to_string(widths_.c2) + " " +
                            std::to_string(widths_.latent) + " " + std::to_string(widths_.hyper));
  wf.set_meta("parameters", std::to_string(parameter_count()));
  const auto layers = all_layers(submodels());
  write_manifest(wf, layers);
  store_params(wf, params_, layers);
  wf.put_matrix("prior.loc", params_.at("prior.loc").value, {widths_.hyper});
  wf.put_matrix("prior.log_scale", params_.at("prior.log_scale").value, {widths_.hyper});
  std::vector<uint32_t> cdfs;
  int64_t width = 0;
  for (const auto& t : prior_.tables) {
    cdfs.insert(cdfs.end(), t.cdf.begin(), t.cdf.end());
    width = int64_t(t.cdf.size());
  }
  if (!prior_.tables.empty()) {
    wf.put_u32("prior.cdf", cdfs, {int64_t(prior_.tables.size()), width});
    wf.set_meta("prior.smin", std::to_string(prior_.tables[0].smin));
  }
  wf.set_meta("fixed.layers", std::to_string(fixed_.layers.size()));
  for (const auto& L : fixed_.layers) {
    const auto& s = L.spec;
    wf.put_i64("fixed." + s.name + ".weight", L.weight,
               {kernel_volume(s.kernel), s.in_channels, s.out_channels}, std::ldexp(1.0, L.w_frac));
    if (!L.bias.empty())
      wf.put_i64("fixed." + s.name + ".bias", L.bias, {s.out_channels}, std::ldexp(1.0, L.w_frac + L.in_frac));
    wf.set_meta("fixed." + s.name, std::to_string(L.w_frac) + " " + std::to_string(L.in_frac) + " " +
                                       std::to_string(L.out_frac));
  }
  return wf;
}

CodingModel CodingModel::from_weights(const WeightFile& wf) {
  if (wf.meta("model") != "coding") throw ConfigError("weights: not a coding model file");
  CodingWidths w;
  std::istringstream ws(wf.meta("widths"));
  if (!(ws >> w.c1 >> w.c2 >> w.latent >> w.hyper)) throw ConfigError("weights: bad widths meta");
  CodingModel m(w);
  const auto layers = all_layers(m.submodels());
  check_manifest(wf, layers);
  load_params(wf, m.params_, layers);
  m.params_.at("prior.loc").value = wf.get_matrix("prior.loc", 1, w.hyper);
  m.params_.at("prior.log_scale").value = wf.get_matrix("prior.log_scale", 1, w.hyper);
  const auto cdfs = wf.get_u32("prior.cdf");
  const auto& shape = wf.chunk("prior.cdf").shape;
  if (shape.size() != 2 || shape[0] != w.hyper) throw ConfigError("weights: prior table shape mismatch");
  const int32_t smin = std::stoi(wf.meta("prior.smin"));
  m.prior_.tables.clear();
  for (int64_t c = 0; c < shape[0]; ++c) {
    QuantizedCdf t;
    t.smin = smin;
    t.smax = smin + int32_t(shape[1]) - 2;
    t.cdf.assign(cdfs.begin() + c * shape[1], cdfs.begin() + (c + 1) * shape[1]);
    t.validate();
    m.prior_.tables.push_back(std::move(t));
  }
  const size_t nfixed = std::stoul(wf.meta("fixed.layers"));
  m.fixed_.layers.clear();
  if (nfixed) {
    const auto specs = m.hyper_scale_.layers();
    if (nfixed != specs.size()) throw ConfigError("weights: fixed-point layer count mismatch");
    for (const auto& s : specs) {
      FixedLayer L;
      L.spec = s;
      std::istringstream fs(wf.meta("fixed." + s.name));
      if (!(fs >> L.w_frac >> L.in_frac >> L.out_frac)) throw ConfigError("weights: bad fixed meta for " + s.name);
      L.weight = wf.get_i64("fixed." + s.name + ".weight");
      if (int64_t(L.weight.size()) != int64_t(kernel_volume(s.kernel)) * s.in_channels * s.out_channels)
        throw ConfigError("weights: fixed layer '" + describe_layer(s) + "' has wrong size");
      if (s.has_bias) L.bias = wf.get_i64("fixed." + s.name + ".bias");
      m.fixed_.layers.push_back(std::move(L));
    }
  }
  return m;
}

SrConfig SrConfig::full(int sf) {
  SrConfig c;
  c.sf = sf;
  return c;
}

SrConfig SrConfig::toy(int sf) {
  SrConfig c;
  c.sf = sf;
  c.widths = {4, 4, 4, 8, 8, 8};
  return c;
}

SrModel::SrModel(SrConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.sf != 2 && cfg_.sf != 4) throw ConfigError("SR model supports SF 2 or 4, got " + std::to_string(cfg_.sf));
  if (cfg_.widths.size() != 6) throw ConfigError("SR model needs 6 widths (stem + 5 levels)");
  const auto R = Activation::ReLU;
  const auto& w = cfg_.widths;
  stem_ = spconv("sr.stem", 3, 1, w[0], 1, R);
  for (int i = 1; i <= 5; ++i) {
    Level lv;
    const std::string si = std::to_string(i);
    lv.down = spconv("sr.down" + si, 2, w[size_t(i - 1)], w[size_t(i)], 2, R);
    lv.up = tspconv("sr.up" + si, 2, w[size_t(i)], w[size_t(i - 1)], 2, R);
    lv.fuse = spconv("sr.fuse" + si, 1, 2 * w[size_t(i - 1)], w[size_t(i - 1)], 1, R);
    for (int j = 0; j < 3; ++j) {
      lv.enc.push_back("sr.enc" + si + ".lirb" + std::to_string(j));
      lv.dec.push_back("sr.dec" + si + ".lirb" + std::to_string(j));
    }
    levels_.push_back(std::move(lv));
  }
  gen_ = gtspconv("sr.gen", cfg_.kernel(), w[0], w[0], cfg_.sf, R);
  out_ = spconv("sr.out", 1, w[0], 1, 1, Activation::Sigmoid);
  for (const auto& l : layers()) params_.declare(l);
}

std::vector<LayerSpec> SrModel::layers() const {
  std::vector<LayerSpec> out{stem_};
  const auto& w = cfg_.widths;
  for (size_t i = 0; i < levels_.size(); ++i) {
    out.push_back(levels_[i].down);
    for (const auto& p : levels_[i].enc)
      for (auto& l : lirb_layers(p, w[i + 1])) out.push_back(l);
  }
  for (size_t i = levels_.size(); i-- > 0;) {
    out.push_back(levels_[i].up);
    for (const auto& p : levels_[i].dec)
      for (auto& l : lirb_layers(p, 2 * w[i])) out.push_back(l);
    out.push_back(levels_[i].fuse);
  }
  out.push_back(gen_);
  out.push_back(out_);
  return out;
}

int64_t SrModel::parameter_count() const {
  int64_t n = 0;
  for (const auto& l : layers()) n += l.parameter_count();
  return n;
}

void SrModel::init_random(uint64_t seed, double gain) { init_params(params_, seed, gain); }

Var SrModel::forward(Tape* tape, const Var& x, int32_t clip_hi) {
  const auto& w = cfg_.widths;
  if (x->value.coords->stride() != cfg_.sf)
    throw ShapeError("SR input must be at stride SF");
  Var h = apply_layer(tape, stem_, params_, x);
  std::vector<Var> skips{h};
  for (size_t i = 0; i < levels_.size(); ++i) {
    h = apply_layer(tape, levels_[i].down, params_, h);
    for (const auto& p : levels_[i].enc) h = lirb_forward(tape, params_, p, w[i + 1], h);
    skips.push_back(h);
  }
  for (size_t i = levels_.size(); i-- > 0;) {
    const Var& skip = skips[i];
    LayerGuide g;
    g.target = [&skip](int32_t stride) -> CoordSetPtr {
      return stride == skip->value.coords->stride() ? skip->value.coords : nullptr;
    };
    Var u = apply_layer(tape, levels_[i].up, params_, h, &g);
    Var c = ag::concat(tape, u, skip);
    for (const auto& p : levels_[i].dec) c = lirb_forward(tape, params_, p, 2 * w[i], c);
    h = apply_layer(tape, levels_[i].fuse, params_, c);
  }
  LayerGuide clip;
  clip.clip = std::make_pair(Vec3i{0, 0, 0}, Vec3i{clip_hi, clip_hi, clip_hi});
  h = apply_layer(tape, gen_, params_, h, &clip);
  return apply_layer(tape, out_, params_, h);
}

WeightFile SrModel::to_weights() const {
  WeightFile wf;
  wf.set_meta("model", "sr");
  wf.set_meta("sf", std::to_string(cfg_.sf));
  std::string ws;
  for (size_t i = 0; i < cfg_.widths.size(); ++i) ws += (i ? " " : "") + std::to_string(cfg_.widths[i]);
  wf.set_meta("widths", ws);
  wf.set_meta("parameters", std::to_string(parameter_count()));
  wf.set_meta("widths_note",
              "level widths are not published; chosen so the totals reach 7253817 (SF=2) and 7278905 (SF=4)");
  const auto L = layers();
  write_manifest(wf, L);
  store_params(wf, params_, L);
  return wf;
}

SrModel SrModel::from_weights(const WeightFile& wf) {
  if (wf.meta("model") != "sr") throw ConfigError("weights: not an SR model file");
  SrConfig cfg;
  cfg.sf = std::stoi(wf.meta("sf"));
  cfg.widths.clear();
  std::istringstream ws(wf.meta("widths"));
  for (int v; ws >> v;) cfg.widths.push_back(v);
  SrModel m(cfg);
  const auto L = m.layers();
  check_manifest(wf, L);
  load_params(wf, m.params_, L);
  return m;
}

}  // namespace jpcc
