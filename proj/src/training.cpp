// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "jpcc/byte_io.hpp"
#include "jpcc/entropy.hpp"
#include "jpcc/point_cloud.hpp"

namespace jpcc {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("train config: '" + key + "' expects a number, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_number(key, v);
  if (d != std::floor(d) || std::abs(d) > 2e9)
    throw ConfigError("train config: '" + key + "' expects an integer, got '" + v + "'");
  return int(d);
}

Var ones_leaf(std::vector<Vec3i> coords, int32_t stride) {
  auto cs = make_coords(std::move(coords), stride);
  Matrix f = Matrix::Ones(Eigen::Index(cs->size()), 1);
  return ag::leaf(make_tensor(std::move(cs), std::move(f)));
}

// Rounding stand-in: additive uniform noise, or the encoder's clamped
// round-half-up expressed as a constant offset.
Var relax(Tape* tape, const Var& x, std::mt19937_64* noise) {
  const Matrix& X = x->value.features;
  Matrix c(X.rows(), X.cols());
  if (noise) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(*noise);
  } else {
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const double v = X.data()[i];
      const double q = std::clamp(std::floor(v + 0.5), double(kSymbolMin), double(kSymbolMax));
      c.data()[i] = q - v;
    }
  }
  return ag::add_constant(tape, x, c);
}

}  // namespace

void TrainConfig::validate() const {
  if (lambdas.empty()) throw ConfigError("train config: at least one lambda is required");
  for (double l : lambdas)
    if (!(l > 0) || !std::isfinite(l)) throw ConfigError("train config: lambda must be > 0");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("train config: alpha must be in (0, 1)");
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw ConfigError("train config: gamma must be >= 0");
  if (!(lr > 0) || !(lr_drop > 0)) throw ConfigError("train config: learning rates must be > 0");
  if (plateau_patience < 1 || stop_patience < 1)
    throw ConfigError("train config: patience must be >= 1");
  if (!(tolerance >= 0)) throw ConfigError("train config: tolerance must be >= 0");
  if (batch < 1) throw ConfigError("train config: batch must be >= 1");
  if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
  if (!(qs > 0) || !std::isfinite(qs)) throw ConfigError("train config: qs must be > 0");
  if (warmup_epochs < 0) throw ConfigError("train config: warmup_epochs must be >= 0");
  if (rate_unit != "block" && rate_unit != "point")
    throw ConfigError("train config: rate_unit must be block or point");
}

TrainConfig parse_train_config(const std::string& text, std::map<std::string, std::string>* extra,
                               const std::vector<std::string>& extra_keys) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("train config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (key == "lambdas") {
      c.lambdas.clear();
      std::istringstream ls(v);
      std::string item;
      while (std::getline(ls, item, ',')) c.lambdas.push_back(parse_number(key, trim(item)));
    } else if (key == "alpha") c.alpha = parse_number(key, v);
    else if (key == "gamma") c.gamma = parse_number(key, v);
    else if (key == "lr") c.lr = parse_number(key, v);
    else if (key == "lr_drop") c.lr_drop = parse_number(key, v);
    else if (key == "plateau_patience") c.plateau_patience = parse_int(key, v);
    else if (key == "stop_patience") c.stop_patience = parse_int(key, v);
    else if (key == "tolerance") c.tolerance = parse_number(key, v);
    else if (key == "batch") c.batch = parse_int(key, v);
    else if (key == "max_epochs") c.max_epochs = parse_int(key, v);
    else if (key == "qs") c.qs = parse_number(key, v);
    else if (key == "rate_unit") c.rate_unit = v;
    else if (key == "warmup_epochs") c.warmup_epochs = parse_int(key, v);
    else if (key == "seed") c.seed = uint64_t(parse_number(key, v));
    else if (extra && std::find(extra_keys.begin(), extra_keys.end(), key) != extra_keys.end())
      (*extra)[key] = v;
    else throw ConfigError("train config: unknown key '" + key + "'");
  }
  std::sort(c.lambdas.begin(), c.lambdas.end());
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path, std::map<std::string, std::string>* extra,
                              const std::vector<std::string>& extra_keys) {
  const auto bytes = read_file(path);
  return parse_train_config(std::string(bytes.begin(), bytes.end()), extra, extra_keys);
}

std::vector<std::vector<Vec3i>> synthetic_blocks(size_t count, int32_t block_size, uint64_t seed,
                                                 size_t min_points) {
  if (block_size < 4) throw ConfigError("synthetic blocks need block_size >= 4");
  if (min_points == 0) min_points = size_t(block_size) * size_t(block_size) / 4;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  const double B = block_size;
  auto unit = [&] {
    std::array<double, 3> n{g(rng), g(rng), g(rng)};
    const double l = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (l < 1e-9) return std::array<double, 3>{0, 0, 1};
    for (double& v : n) v /= l;
    return n;
  };
  std::vector<std::vector<Vec3i>> out;
  while (out.size() < count) {
    std::set<Vec3i> pts;
    const int surfaces = u(rng) < 0.3 ? 2 : 1;
    for (int s = 0; s < surfaces; ++s) {
      const int kind = int(rng() % 3);
      std::array<double, 3> c;
      for (double& v : c) v = B * (0.25 + 0.5 * u(rng));
      const auto n = unit();
      const double r = B * (0.3 + 0.4 * u(rng));
      for (int x = 0; x < block_size; ++x)
        for (int y = 0; y < block_size; ++y)
          for (int z = 0; z < block_size; ++z) {
            const double d0 = x - c[0], d1 = y - c[1], d2 = z - c[2];
            const double along = d0 * n[0] + d1 * n[1] + d2 * n[2];
            const double len2 = d0 * d0 + d1 * d1 + d2 * d2;
            double dist;
            if (kind == 0) dist = along;
            else if (kind == 1) dist = std::sqrt(len2) - r;
            else dist = std::sqrt(std::max(len2 - along * along, 0.0)) - r;
            if (std::abs(dist) <= 0.5) pts.insert({x, y, z});
          }
    }
    if (pts.size() < min_points) continue;
    out.emplace_back(pts.begin(), pts.end());
  }
  return out;
}

RateTerms rate_proxy(Tape* tape, CodingModel& model, const Var& y, double qs,
                     std::mt19937_64* noise) {
  const CoordSetPtr yc = y->value.coords;
  Var yqs = ag::scale(tape, y, 1.0 / qs);
  Var zt = relax(tape, model.run_hyper_analysis(tape, yqs), noise);
  Var mu = model.run_hyper_mean(tape, zt, yc);
  Var rt = relax(tape, ag::sub(tape, yqs, mu), noise);
  Var sigma = ag::abs_floor(tape, model.run_hyper_scale(tape, zt, yc), kSigmaMin);
  auto& P = model.params();
  Var rb = ag::gaussian_bits(tape, rt, sigma);
  Var zb = ag::logistic_bits(tape, zt, P.at("prior.loc"), P.at("prior.log_scale"));
  RateTerms t;
  t.residue_bits = ag::scalar_value(rb);
  t.hyper_bits = ag::scalar_value(zb);
  t.bits = ag::weighted_sum(tape, rb, 1.0, zb, 1.0);
  t.y_hat = ag::scale(tape, ag::add(tape, mu, rt), qs);
  return t;
}

BlockLoss coding_loss(Tape* tape, CodingModel& model, std::span<const Vec3i> block,
                      int32_t block_size, double lambda, const TrainConfig& cfg,
                      std::mt19937_64* noise) {
  if (block.empty()) throw DomainError("coding_loss: empty block");
  std::vector<Vec3i> pts(block.begin(), block.end());
  sort_unique(pts);
  auto truth = make_coords(pts, 1);
  Var y = model.run_analysis(tape, ones_leaf(std::move(pts), 1));
  RateTerms r = rate_proxy(tape, model, y, cfg.qs, noise);
  Var probs = model.run_synthesis(tape, r.y_hat, block_size - 1);
  Var fl = ag::focal_loss(tape, probs, *truth, cfg.alpha, cfg.gamma);
  BlockLoss out;
  out.distortion = ag::scalar_value(fl);
  out.bits = ag::scalar_value(r.bits);
  const double w = cfg.rate_unit == "point" ? lambda / double(truth->size()) : lambda;
  out.loss = ag::weighted_sum(tape, fl, 1.0, r.bits, w);
  return out;
}

BlockLoss sr_loss(Tape* tape, SrModel& model, std::span<const Vec3i> block, int32_t block_size,
                  const TrainConfig& cfg) {
  if (block.empty()) throw DomainError("sr_loss: empty block");
  std::vector<Vec3i> pts(block.begin(), block.end());
  sort_unique(pts);
  auto truth = make_coords(pts, 1);
  const int sf = model.config().sf;
  const auto coarse = downsample(pts, sf);
  Var probs = model.forward(tape, ones_leaf(upsample(coarse, sf), sf), block_size - 1);
  BlockLoss out;
  out.loss = ag::focal_loss(tape, probs, *truth, cfg.alpha, cfg.gamma);
  out.distortion = ag::scalar_value(out.loss);
  return out;
}

void Adam::step(ParamStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  for (auto& [name, p] : params.all()) {
    if (p.grad.size() == 0) continue;
    auto& s = state_[name];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(p.value.rows(), p.value.cols());
      s.v = s.m;
    }
    s.m = b1_ * s.m + (1 - b1_) * p.grad;
    s.v = b2_ * s.v + (1 - b2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

void Adam::store(WeightFile& wf) const {
  for (const auto& [name, s] : state_) {
    wf.put_matrix("adam.m." + name, s.m);
    wf.put_matrix("adam.v." + name, s.v);
  }
  wf.set_meta("adam.t", std::to_string(t_));
  wf.set_meta("adam.lr", fmt_double(lr_));
}

void Adam::restore(const WeightFile& wf, const ParamStore& params) {
  if (!wf.has_meta("adam.t")) throw ConfigError("checkpoint has no optimizer state");
  t_ = std::stoll(wf.meta("adam.t"));
  lr_ = std::stod(wf.meta("adam.lr"));
  state_.clear();
  for (const auto& [name, p] : params.all()) {
    if (!wf.has("adam.m." + name)) continue;
    auto& s = state_[name];
    s.m = wf.get_matrix("adam.m." + name, p.value.rows(), p.value.cols());
    s.v = wf.get_matrix("adam.v." + name, p.value.rows(), p.value.cols());
  }
}

EpochSchedule::EpochSchedule(const TrainConfig& cfg)
    : cfg_(cfg), lr_(cfg.lr), best_(std::numeric_limits<double>::infinity()) {}

bool EpochSchedule::update(double loss) {
  if (!std::isfinite(best_) || loss < best_ - cfg_.tolerance * std::abs(best_)) {
    best_ = loss;
    stale_ = 0;
    since_drop_ = 0;
    return true;
  }
  ++stale_;
  ++since_drop_;
  if (!dropped_ && since_drop_ >= cfg_.plateau_patience) {
    lr_ = cfg_.lr_drop;
    dropped_ = true;
  }
  return stale_ < cfg_.stop_patience;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream o;
  o.precision(10);
  o << "lambda,epoch,lr,loss,distortion,bits\n";
  for (const auto& e : epochs)
    o << e.lambda << ',' << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.distortion << ','
      << e.bits << '\n';
  return o.str();
}

std::string fit(const TrainConfig& cfg, double lambda,
                const std::function<EpochRecord(int epoch, double lr)>& run_epoch,
                TrainHistory& history) {
  EpochSchedule sched(cfg);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = sched.lr();
    EpochRecord rec = run_epoch(epoch, lr);
    rec.lambda = lambda;
    rec.epoch = epoch;
    rec.lr = lr;
    history.epochs.push_back(rec);
    if (!std::isfinite(rec.loss))
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    if (!sched.update(rec.loss)) return "early-stop";
  }
  return "max-epochs";
}

std::vector<CoordSetPtr> latent_coords(CodingModel& model,
                                       const std::vector<std::vector<Vec3i>>& blocks) {
  std::vector<CoordSetPtr> out;
  for (const auto& b : blocks) {
    if (b.empty()) continue;
    std::vector<Vec3i> pts = b;
    sort_unique(pts);
    out.push_back(model.run_analysis(nullptr, ones_leaf(std::move(pts), 1))->value.coords);
  }
  return out;
}

namespace {

// One pass over the blocks in a seeded shuffled order, one optimizer step
// per minibatch. Gradients are summed in block order.
template <typename Model, typename LossFn>
EpochRecord run_epoch(Model& model, ParamStore& params, Adam& opt,
                      const std::vector<std::vector<Vec3i>>& blocks, const TrainConfig& cfg,
                      uint64_t shuffle_seed, double lr, const LossFn& loss_fn,
                      const std::function<void()>& on_divergence) {
  std::vector<size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::mt19937_64 shuf(shuffle_seed);
  std::shuffle(order.begin(), order.end(), shuf);
  opt.set_lr(lr);
  EpochRecord rec;
  const size_t bs = size_t(cfg.batch);
  for (size_t start = 0; start < order.size(); start += bs) {
    const size_t end = std::min(order.size(), start + bs);
    params.zero_grad();
    for (size_t i = start; i < end; ++i) {
      Tape tape;
      BlockLoss bl = loss_fn(&tape, model, blocks[order[i]]);
      const double l = ag::scalar_value(bl.loss);
      if (!std::isfinite(l)) {
        on_divergence();
        throw DivergenceError("training loss is not finite");
      }
      tape.backward(bl.loss, Matrix::Constant(1, 1, 1.0 / double(end - start)));
      rec.loss += l;
      rec.distortion += bl.distortion;
      rec.bits += bl.bits;
    }
    opt.step(params);
  }
  const double n = double(std::max<size_t>(blocks.size(), 1));
  rec.loss /= n;
  rec.distortion /= n;
  rec.bits /= n;
  return rec;
}

}  // namespace

TrainHistory train_coding(CodingModel& model, const std::vector<std::vector<Vec3i>>& blocks,
                          int32_t block_size, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (blocks.empty()) throw ConfigError("training needs at least one block");
  std::vector<double> lambdas = cfg.lambdas;
  std::sort(lambdas.begin(), lambdas.end());
  TrainHistory history;
  std::mt19937_64 noise(cfg.seed);
  if (cfg.warmup_epochs > 0) {
    // Distortion only; recorded with lambda 0.
    Adam opt(cfg.lr);
    auto loss_fn = [&](Tape* tape, CodingModel& m, const std::vector<Vec3i>& b) {
      return coding_loss(tape, m, b, block_size, 0.0, cfg, &noise);
    };
    for (int epoch = 1; epoch <= cfg.warmup_epochs; ++epoch) {
      EpochRecord r = run_epoch(model, model.params(), opt, blocks, cfg,
                                cfg.seed * 1000003ULL + 999983ULL * uint64_t(epoch), cfg.lr, loss_fn, [&] {
                                  if (!hooks.checkpoint.empty())
                                    save_checkpoint(hooks.checkpoint, model.to_weights(), opt, 0.0, epoch);
                                });
      r.lambda = 0;
      r.epoch = epoch;
      r.lr = cfg.lr;
      history.epochs.push_back(r);
      if (hooks.on_epoch) hooks.on_epoch(r);
    }
    history.stop_reasons.push_back("warmup");
  }
  for (double lambda : lambdas) {
    Adam opt(cfg.lr);
    int current_epoch = 0;
    auto checkpoint = [&] {
      if (!hooks.checkpoint.empty())
        save_checkpoint(hooks.checkpoint, model.to_weights(), opt, lambda, current_epoch);
    };
    auto loss_fn = [&](Tape* tape, CodingModel& m, const std::vector<Vec3i>& b) {
      return coding_loss(tape, m, b, block_size, lambda, cfg, &noise);
    };
    const std::string reason = fit(
        cfg, lambda,
        [&](int epoch, double lr) {
          current_epoch = epoch;
          EpochRecord r = run_epoch(model, model.params(), opt, blocks, cfg,
                                    cfg.seed * 1000003ULL + uint64_t(epoch), lr, loss_fn, checkpoint);
          checkpoint();
          if (hooks.on_epoch) {
            r.lambda = lambda;
            r.epoch = epoch;
            r.lr = lr;
            hooks.on_epoch(r);
          }
          return r;
        },
        history);
    history.stop_reasons.push_back(reason);
    model.rebuild_prior();
    model.quantize_hyper_scale(latent_coords(model, blocks), cfg.seed ^ 0x5eedULL);
    if (hooks.on_lambda_done) hooks.on_lambda_done(lambda, model);
  }
  return history;
}

TrainHistory train_sr(SrModel& model, const std::vector<std::vector<Vec3i>>& blocks,
                      int32_t block_size, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (blocks.empty()) throw ConfigError("training needs at least one block");
  TrainHistory history;
  Adam opt(cfg.lr);
  int current_epoch = 0;
  auto checkpoint = [&] {
    if (!hooks.checkpoint.empty())
      save_checkpoint(hooks.checkpoint, model.to_weights(), opt, 0.0, current_epoch);
  };
  auto loss_fn = [&](Tape* tape, SrModel& m, const std::vector<Vec3i>& b) {
    return sr_loss(tape, m, b, block_size, cfg);
  };
  history.stop_reasons.push_back(fit(
      cfg, 0.0,
      [&](int epoch, double lr) {
        current_epoch = epoch;
        EpochRecord r = run_epoch(model, model.params(), opt, blocks, cfg,
                                  cfg.seed * 1000003ULL + uint64_t(epoch), lr, loss_fn, checkpoint);
        checkpoint();
        if (hooks.on_epoch) {
          r.epoch = epoch;
          r.lr = lr;
          hooks.on_epoch(r);
        }
        return r;
      },
      history));
  return history;
}

void save_checkpoint(const std::string& path, WeightFile model, const Adam& opt, double lambda,
                     int epoch) {
  opt.store(model);
  model.set_meta("train.lambda", fmt_double(lambda));
  model.set_meta("train.epoch", std::to_string(epoch));
  model.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint c;
  c.weights = WeightFile::load(path);
  if (!c.weights.has_meta("train.epoch")) throw ConfigError(path + " is not a training checkpoint");
  c.lambda = std::stod(c.weights.meta("train.lambda"));
  c.epoch = std::stoi(c.weights.meta("train.epoch"));
  return c;
}

}  // namespace jpcc
