// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/codec.hpp"

namespace jpcc {

std::vector<uint8_t> Container::serialize() const {
  if (geometry.color_present != color.has_value())
    throw IntegrityError("container: colour flag and colour section disagree");
  auto out = geometry.serialize();
  if (color) {
    const auto c = color->serialize();
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

Container Container::parse(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  Container c;
  c.geometry = GeometrySection::parse(r);
  if (c.geometry.color_present) c.color = ColorSection::parse(r);
  if (!r.at_end()) throw DecodeError("container: trailing bytes after the last section");
  return c;
}

void CodecConfig::validate() const {
  if (geometry.block_size < 2 || geometry.block_size > 65535)
    throw ConfigError("block size must be in [2, 65535]");
  BlockCodingParams p;
  p.sf = geometry.sf;
  p.qs = float(geometry.qs);
  p.geo_idx = geometry.geo_idx;
  p.validate();
  if (color_idx < 0 || color_idx > kMaxColorIdx)
    throw ConfigError("color_idx must be in [0, " + std::to_string(kMaxColorIdx) + "]");
}

std::vector<uint8_t> encode_cloud(const PointCloud& pc, const CodecConfig& cfg, ModelStore& models,
                                  EncodeReport* report) {
  cfg.validate();
  const bool with_color = cfg.color && pc.has_colors();
  std::unique_ptr<ImageCodec> codec;
  if (with_color) codec = make_image_codec(cfg.image_codec);

  GeometryEncodeResult geo = encode_pc(pc, cfg.geometry, models);
  Container c;
  c.geometry = std::move(geo.section);
  c.geometry.color_present = with_color;
  ColorStats cstats;
  if (with_color) {
    const ProjectionFrame frame = projection_frame(geo.decoded, c.geometry.block_size);
    c.color = encode_color(frame.coords, frame.scale, pc, *codec, cfg.color_idx, cfg.color_config,
                           &cstats);
  }
  auto bytes = c.serialize();
  if (report) {
    report->points = pc.size();
    report->total_bytes = bytes.size();
    report->color_bytes = c.color ? c.color->serialize().size() : 0;
    report->geometry_bytes = bytes.size() - report->color_bytes;
    report->rate = rate_report(report->geometry_bytes, report->total_bytes, pc.size());
    report->color_stats = cstats;
    report->block_stats = geo.stats;
    report->warnings = geo.warnings;
    if (geo.stats.hyper_clamps || geo.stats.residue_clamps)
      report->warnings.push_back(std::to_string(geo.stats.hyper_clamps + geo.stats.residue_clamps) +
                                 " latent symbols clamped to the coder alphabet");
    if (cstats.far_clamps)
      report->warnings.push_back(std::to_string(cstats.far_clamps) +
                                 " far-layer differences clamped");
  }
  return bytes;
}

PointCloud decode_cloud(std::span<const uint8_t> bytes, ModelStore& models,
                        const ColorConfig& color_config, const std::string& image_codec) {
  const Container c = Container::parse(bytes);
  GeometryDecodeResult geo = decode_pc(c.geometry, models);
  PointCloud out = std::move(geo.pc);
  out.bit_depth = c.geometry.bit_depth;
  if (!c.color || out.empty()) return out;

  auto codec = make_image_codec(image_codec.empty() ? c.color->plugin : image_codec);
  const ProjectionFrame frame = projection_frame(geo, c.geometry.block_size);
  const auto colors = decode_color(*c.color, frame.coords, *codec, color_config);
  // Colours live on the pre-SR points; carry them to the final points.
  PointCloud pre;
  pre.coords.reserve(frame.coords.size());
  for (const auto& p : frame.coords) pre.coords.push_back(p * frame.scale);
  pre.colors = colors;
  out.colors = *color_super_resolve(out.coords, pre).colors;
  return out;
}

}  // namespace jpcc
