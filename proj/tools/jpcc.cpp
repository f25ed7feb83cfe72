// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

// jpcc command-line front end: encode, decode, eval, train, sweep,
// init-weights.

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "jpcc/codec.hpp"
#include "jpcc/normals.hpp"
#include "jpcc/ply.hpp"
#include "jpcc/training.hpp"

using namespace jpcc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitCodec = 4;

struct EncodeFlags {
  int block_size = 128;
  int sf = 1;
  double qs = 1.0;
  int geo_model = 0;
  int color_model = 0;
  bool sr = false;
  bool no_color = false;
  std::string image_codec = "builtin";
  std::string topk_metric = "d1";
};

void add_encode_flags(CLI::App* c, EncodeFlags& f) {
  c->add_option("--block-size", f.block_size, "Block size BS")->capture_default_str();
  c->add_option("--sf", f.sf, "Sampling factor")->capture_default_str();
  c->add_option("--qs", f.qs, "Latent quantization step")->capture_default_str();
  c->add_option("--geo-model", f.geo_model, "Geometry model index (0 = lowest rate)")
      ->capture_default_str();
  c->add_option("--color-model", f.color_model, "Colour model index")->capture_default_str();
  c->add_flag("--sr,!--no-sr", f.sr, "Decoder-side super-resolution");
  c->add_flag("--no-color", f.no_color, "Code geometry only");
  c->add_option("--image-codec", f.image_codec, "builtin or exec:PATH")->capture_default_str();
  c->add_option("--topk-metric", f.topk_metric, "Top-k selection metric (d1, d2)")
      ->check(CLI::IsMember({"d1", "d2"}))
      ->capture_default_str();
}

// -D2 MSE with the reference normals estimated once per reference block.
GeometryMetric d2_metric() {
  struct Cache {
    std::vector<Vec3i> ref;
    std::vector<Vec3d> normals;
  };
  auto cache = std::make_shared<Cache>();
  return [cache](std::span<const Vec3i> decoded, std::span<const Vec3i> ref) {
    if (ref.size() < 3) return -d1_mse(decoded, ref);
    if (!std::equal(ref.begin(), ref.end(), cache->ref.begin(), cache->ref.end())) {
      cache->ref.assign(ref.begin(), ref.end());
      cache->normals = estimate_normals(ref);
    }
    return -d2_mse(decoded, ref, cache->normals);
  };
}

CodecConfig codec_config(const EncodeFlags& f) {
  CodecConfig c;
  c.geometry.block_size = f.block_size;
  c.geometry.sf = f.sf;
  c.geometry.qs = f.qs;
  c.geometry.geo_idx = f.geo_model;
  c.geometry.sr = f.sr;
  if (f.topk_metric == "d2") c.geometry.metric = d2_metric();
  c.color = !f.no_color;
  c.color_idx = f.color_model;
  c.image_codec = f.image_codec;
  return c;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()),
                                                   text.size()));
}

void print_warnings(const std::vector<std::string>& w) {
  for (const auto& s : w) std::cerr << "warning: " << s << "\n";
}

std::vector<std::pair<std::string, ReportValue>> encode_fields(const EncodeReport& r) {
  std::vector<std::pair<std::string, ReportValue>> f{
      {"points", double(r.points)},
      {"geometry_bytes", double(r.geometry_bytes)},
      {"color_bytes", double(r.color_bytes)},
      {"total_bytes", double(r.total_bytes)},
      {"geometry_bpp", r.rate.geometry_bpp},
      {"total_bpp", r.rate.total_bpp},
  };
  if (r.color_bytes) f.push_back({"unprojected_fraction", r.color_stats.unprojected_fraction()});
  return f;
}

int cmd_encode(const std::string& in, const std::string& out, const EncodeFlags& flags,
               const std::string& weights, const std::string& report) {
  const PointCloud pc = load_ply(in);
  ModelStore models(resolve_weights_dir(weights));
  EncodeReport rep;
  const auto bytes = encode_cloud(pc, codec_config(flags), models, &rep);
  write_file_atomic(out, bytes);
  print_warnings(rep.warnings);
  std::cout << format_report(encode_fields(rep), report);
  return 0;
}

int cmd_decode(const std::string& in, const std::string& out, const std::string& weights,
               const std::string& image_codec, bool ascii) {
  const auto bytes = read_file(in);
  ModelStore models(resolve_weights_dir(weights));
  const PointCloud pc = decode_cloud(bytes, models, {}, image_codec);
  write_text_atomic(out, serialize_ply(pc, !ascii));
  return 0;
}

std::vector<std::pair<std::string, ReportValue>> eval_fields(const PointCloud& dec,
                                                             const PointCloud& orig, int bit_depth,
                                                             PeakConvention peak, bool characterize) {
  std::vector<std::pair<std::string, ReportValue>> f{
      {"points_decoded", double(dec.size())},
      {"points_original", double(orig.size())},
      {"d1_mse", d1_mse(dec.coords, orig.coords)},
      {"d1_psnr", psnr_d1(dec, orig, bit_depth, peak)},
  };
  if (orig.size() >= 3) f.push_back({"d2_psnr", psnr_d2(dec, orig, bit_depth, true, peak)});
  if (dec.has_colors() && orig.has_colors()) {
    const ColorPsnr c = psnr_color(dec, orig);
    f.push_back({"y_psnr", c.y});
    f.push_back({"u_psnr", c.u});
    f.push_back({"v_psnr", c.v});
    f.push_back({"yuv_psnr", c.yuv});
  }
  if (characterize) {
    const double df = density_factor(orig.coords);
    const double hf = homogeneity_factor(orig.coords);
    f.push_back({"density_factor", df});
    f.push_back({"density_class", std::string(to_string(classify_density(df)))});
    f.push_back({"homogeneity_factor", hf});
    f.push_back({"homogeneous", std::string(is_homogeneous(hf) ? "yes" : "no")});
    if (orig.has_colors()) f.push_back({"color_gamut_volume", color_gamut_volume(orig)});
  }
  return f;
}

int cmd_eval(const std::string& dec_path, const std::string& orig_path, int bit_depth,
             const std::string& peak, bool characterize, const std::string& report) {
  const PointCloud dec = load_ply(dec_path);
  const PointCloud orig = load_ply(orig_path);
  const int d = bit_depth > 0 ? bit_depth : std::max(orig.bit_depth, 1);
  const PeakConvention pc = peak == "p2" ? PeakConvention::P2 : PeakConvention::ThreeP2;
  std::cout << format_report(eval_fields(dec, orig, d, pc, characterize), report);
  return 0;
}

std::vector<std::vector<Vec3i>> load_training_blocks(const std::string& dir, int32_t block_size,
                                                     size_t min_points) {
  std::vector<std::vector<Vec3i>> out;
  if (!std::filesystem::is_directory(dir)) throw IoError("training data directory not found: " + dir);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".ply") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files)
    for (auto& b : partition_blocks(load_ply(p.string()), block_size))
      if (b.local_coords.size() >= min_points) out.push_back(std::move(b.local_coords));
  if (out.empty()) throw ConfigError("no training block in " + dir + " has enough points");
  return out;
}

int cmd_train(const std::string& config_path, const std::string& weights, std::string history,
              std::string checkpoint) {
  std::map<std::string, std::string> extra;
  const std::vector<std::string> keys{"model", "widths", "sf", "blocks", "block_size",
                                      "data", "min_points", "init_seed", "start_from"};
  const TrainConfig cfg = load_train_config(config_path, &extra, keys);
  auto get = [&](const std::string& k, const std::string& def) {
    auto it = extra.find(k);
    return it == extra.end() ? def : it->second;
  };
  auto get_int = [&](const std::string& k, int def) {
    try {
      return std::stoi(get(k, std::to_string(def)));
    } catch (const std::exception&) {
      throw ConfigError("train config: '" + k + "' expects an integer");
    }
  };
  const std::string kind = get("model", "coding");
  const std::string widths = get("widths", "toy");
  if (kind != "coding" && kind != "sr") throw ConfigError("train config: model must be coding or sr");
  if (widths != "toy" && widths != "full") throw ConfigError("train config: widths must be toy or full");
  const int32_t bs = get_int("block_size", 16);
  const uint64_t init_seed = uint64_t(get_int("init_seed", 1));
  std::vector<std::vector<Vec3i>> blocks;
  if (extra.count("data")) blocks = load_training_blocks(extra["data"], bs, size_t(get_int("min_points", 500)));
  else blocks = synthetic_blocks(size_t(get_int("blocks", 50)), bs, cfg.seed);

  const std::string dir = resolve_weights_dir(weights);
  std::filesystem::create_directories(dir);
  if (history.empty()) history = (std::filesystem::path(dir) / "history.csv").string();
  if (checkpoint.empty()) checkpoint = (std::filesystem::path(dir) / "checkpoint.pccw").string();
  TrainHooks hooks;
  hooks.checkpoint = checkpoint;
  hooks.on_epoch = [](const EpochRecord& r) {
    std::cerr << "lambda " << r.lambda << " epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss
              << " distortion " << r.distortion << " bits " << r.bits << "\n";
  };

  TrainHistory h;
  if (kind == "coding") {
    CodingModel m = extra.count("start_from") ? CodingModel::load(extra["start_from"])
                                              : CodingModel(widths == "toy" ? CodingWidths::toy()
                                                                            : CodingWidths::full());
    if (!extra.count("start_from")) m.init_random(init_seed, widths == "toy" ? 0.5 : 1.0);
    // Model index: 0 for the largest lambda.
    std::vector<double> desc = cfg.lambdas;
    std::sort(desc.rbegin(), desc.rend());
    hooks.on_lambda_done = [&](double lambda, const CodingModel& trained) {
      const auto idx = int(std::find(desc.begin(), desc.end(), lambda) - desc.begin());
      const auto path = coding_weights_path(dir, idx);
      trained.save(path);
      std::cerr << "wrote " << path << " (lambda " << lambda << ")\n";
    };
    h = train_coding(m, blocks, bs, cfg, hooks);
  } else {
    const int sf = get_int("sf", 2);
    SrModel m = extra.count("start_from") ? SrModel::load(extra["start_from"])
                                          : SrModel(widths == "toy" ? SrConfig::toy(sf) : SrConfig::full(sf));
    if (!extra.count("start_from")) m.init_random(init_seed, widths == "toy" ? 0.5 : 1.0);
    h = train_sr(m, blocks, bs, cfg, hooks);
    const auto path = sr_weights_path(dir, m.config().sf);
    m.save(path);
    std::cerr << "wrote " << path << "\n";
  }
  write_text_atomic(history, h.to_csv());
  for (const auto& r : h.stop_reasons) std::cerr << "stopped: " << r << "\n";
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream v(item);
    T x;
    if (!(v >> x)) throw ConfigError(std::string("bad value in ") + what + ": '" + item + "'");
    out.push_back(x);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

int cmd_sweep(const std::string& in, EncodeFlags base, const std::string& sfs, const std::string& srs,
              const std::string& geos, const std::string& colors, const std::string& targets,
              const std::string& weights, const std::string& report) {
  const PointCloud pc = load_ply(in);
  ModelStore models(resolve_weights_dir(weights));
  struct Row {
    EncodeFlags f;
    EncodeReport rep;
    double d1 = 0, yuv = 0, score = 0;
  };
  std::vector<Row> rows;
  const int d = std::max(pc.bit_depth, 1);
  for (int sf : parse_list<int>(sfs, "--sf-list"))
    for (int sr : parse_list<int>(srs, "--sr-list"))
      for (int g : parse_list<int>(geos, "--geo-list"))
        for (int c : parse_list<int>(colors, "--color-list")) {
          if (sr && sf == 1) continue;
          EncodeFlags f = base;
          f.sf = sf;
          f.sr = sr != 0;
          f.geo_model = g;
          f.color_model = c;
          Row row;
          row.f = f;
          const auto bytes = encode_cloud(pc, codec_config(f), models, &row.rep);
          const PointCloud dec = decode_cloud(bytes, models, {}, "");
          row.d1 = psnr_d1(dec, pc, d);
          row.score = row.d1;
          if (dec.has_colors() && pc.has_colors()) {
            row.yuv = psnr_color(dec, pc).yuv;
            row.score += row.yuv;
          }
          rows.push_back(std::move(row));
        }
  std::ostringstream o;
  o << "config,sf,sr,geo_idx,color_idx,geometry_bpp,total_bpp,d1_psnr,yuv_psnr,score\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    o << i << ',' << r.f.sf << ',' << int(r.f.sr) << ',' << r.f.geo_model << ',' << r.f.color_model
      << ',' << r.rep.rate.geometry_bpp << ',' << r.rep.rate.total_bpp << ',' << r.d1 << ','
      << r.yuv << ',' << r.score << '\n';
  }
  // Best score within each target rate.
  o << "target_bpp,config\n";
  for (double t : parse_list<double>(targets, "--targets")) {
    int best = -1;
    for (size_t i = 0; i < rows.size(); ++i)
      if (rows[i].rep.rate.total_bpp <= t && (best < 0 || rows[i].score > rows[size_t(best)].score))
        best = int(i);
    o << t << ',' << (best < 0 ? std::string("none") : std::to_string(best)) << '\n';
  }
  if (report != "csv" && report != "text") throw ConfigError("sweep reports are csv");
  std::cout << o.str();
  return 0;
}

int cmd_init_weights(const std::string& weights, const std::string& widths, int geo_models,
                     const std::string& sr_sfs, uint64_t seed) {
  const std::string dir = resolve_weights_dir(weights);
  std::filesystem::create_directories(dir);
  const bool toy = widths == "toy";
  if (!toy && widths != "full") throw ConfigError("--widths must be toy or full");
  if (geo_models < 1 || geo_models > kMaxGeoIdx + 1) throw ConfigError("--geo-models must be in [1, 5]");
  for (int i = 0; i < geo_models; ++i) {
    CodingModel m(toy ? CodingWidths::toy() : CodingWidths::full());
    m.init_random(seed + uint64_t(i), toy ? 0.5 : 1.0);
    m.save(coding_weights_path(dir, i));
  }
  if (!sr_sfs.empty())
    for (int sf : parse_list<int>(sr_sfs, "--sr-sf")) {
      if (sf != 2 && sf != 4) throw ConfigError("SR models exist for SF 2 and 4");
      SrModel m(toy ? SrConfig::toy(sf) : SrConfig::full(sf));
      m.init_random(seed + 100 + uint64_t(sf), toy ? 0.5 : 1.0);
      m.save(sr_weights_path(dir, sf));
    }
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e)) return kExitIo;
  if (dynamic_cast<const Error*>(&e)) return kExitCodec;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jpcc: learning-based point cloud codec"};
  app.require_subcommand(1);
  std::string weights, report = "text";

  EncodeFlags ef;
  std::string in, out;
  auto* enc = app.add_subcommand("encode", "Encode a PLY into a bitstream");
  enc->add_option("input", in, "Input PLY")->required();
  enc->add_option("output", out, "Output bitstream")->required();
  add_encode_flags(enc, ef);

  std::string dec_codec;
  bool ascii = false;
  auto* dec = app.add_subcommand("decode", "Decode a bitstream into a PLY");
  dec->add_option("input", in, "Input bitstream")->required();
  dec->add_option("output", out, "Output PLY")->required();
  dec->add_option("--image-codec", dec_codec, "Override the image plugin named in the stream");
  dec->add_flag("--ascii", ascii, "Write ASCII PLY");

  std::string original, peak = "3p2";
  int bit_depth = 0;
  bool characterize = false;
  auto* ev = app.add_subcommand("eval", "Compare a decoded cloud with the original");
  ev->add_option("decoded", in, "Decoded PLY")->required();
  ev->add_option("original", original, "Original PLY")->required();
  ev->add_option("--bit-depth", bit_depth, "Geometry precision for the PSNR peak");
  ev->add_option("--peak", peak, "Peak convention")->check(CLI::IsMember({"3p2", "p2"}));
  ev->add_flag("--characterize", characterize, "Add density, homogeneity and gamut");

  std::string config, history, checkpoint;
  auto* tr = app.add_subcommand("train", "Train coding or SR models from a config file");
  tr->add_option("config", config, "key = value training config")->required();
  tr->add_option("--history", history, "History CSV (default WEIGHTS/history.csv)");
  tr->add_option("--checkpoint", checkpoint, "Checkpoint path (default WEIGHTS/checkpoint.pccw)");

  EncodeFlags sf_base;
  std::string sfs = "1,2", srs = "0,1", geos = "0", colors = "0", targets = "1";
  auto* sw = app.add_subcommand("sweep", "Search (SF, SR, geo, colour) configurations");
  sw->add_option("input", in, "Input PLY")->required();
  add_encode_flags(sw, sf_base);
  sw->add_option("--sf-list", sfs, "Comma list of SF values")->capture_default_str();
  sw->add_option("--sr-list", srs, "Comma list of SR settings (0/1)")->capture_default_str();
  sw->add_option("--geo-list", geos, "Comma list of geometry model indices")->capture_default_str();
  sw->add_option("--color-list", colors, "Comma list of colour model indices")->capture_default_str();
  sw->add_option("--targets", targets, "Comma list of target total bpp")->capture_default_str();

  std::string widths = "toy", sr_sfs = "2,4";
  int geo_models = 5;
  uint64_t seed = 1;
  auto* iw = app.add_subcommand("init-weights", "Write randomly initialised weight files");
  iw->add_option("--widths", widths, "toy or full")->capture_default_str();
  iw->add_option("--geo-models", geo_models, "Number of coding models")->capture_default_str();
  iw->add_option("--sr-sf", sr_sfs, "SR models to write (empty for none)")->capture_default_str();
  iw->add_option("--seed", seed, "Initialisation seed")->capture_default_str();

  for (auto* c : {enc, dec, ev, tr, sw, iw})
    c->add_option("--weights", weights, "Weight directory (default $JPCC_WEIGHTS or ./weights)");
  for (auto* c : {enc, ev, sw})
    c->add_option("--report", report, "Report format: text, json, csv")
        ->check(CLI::IsMember({"text", "json", "csv"}))
        ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*enc) return cmd_encode(in, out, ef, weights, report);
    if (*dec) return cmd_decode(in, out, weights, dec_codec, ascii);
    if (*ev) return cmd_eval(in, original, bit_depth, peak, characterize, report);
    if (*tr) return cmd_train(config, weights, history, checkpoint);
    if (*sw) return cmd_sweep(in, sf_base, sfs, srs, geos, colors, targets, weights, report);
    if (*iw) return cmd_init_weights(weights, widths, geo_models, sr_sfs, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
