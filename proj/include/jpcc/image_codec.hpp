// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), data(size_t(w) * size_t(h) * 3, fill) {}
  bool empty() const { return width == 0 || height == 0; }
  uint8_t* px(int x, int y) { return &data[(size_t(y) * size_t(width) + size_t(x)) * 3]; }
  const uint8_t* px(int x, int y) const {
    return &data[(size_t(y) * size_t(width) + size_t(x)) * 3];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// 2-D image coder used for the projected colour layers.
class ImageCodec {
 public:
  virtual ~ImageCodec() = default;
  virtual std::string id() const = 0;
  virtual std::vector<uint8_t> encode(const RgbImage& im, int color_idx) = 0;
  virtual RgbImage decode(const std::vector<uint8_t>& bytes, int color_idx) = 0;
};

// Raw RGB through zlib; exact.
class BuiltinImageCodec : public ImageCodec {
 public:
  std::string id() const override { return "builtin"; }
  std::vector<uint8_t> encode(const RgbImage& im, int color_idx) override;
  RgbImage decode(const std::vector<uint8_t>& bytes, int color_idx) override;
};

// External program run as `PROGRAM encode|decode <color_idx>`.
// encode: stdin = u32 width, u32 height (little endian) + raw RGB; stdout = bytes.
// decode: stdin = bytes; stdout = the same header + raw RGB.
class ExecImageCodec : public ImageCodec {
 public:
  explicit ExecImageCodec(std::string program) : program_(std::move(program)) {}
  std::string id() const override { return "exec:" + program_; }
  std::vector<uint8_t> encode(const RgbImage& im, int color_idx) override;
  RgbImage decode(const std::vector<uint8_t>& bytes, int color_idx) override;

 private:
  std::vector<uint8_t> run(const std::string& mode, const std::vector<uint8_t>& input, int color_idx);
  std::string program_;
};

// "builtin" or "exec:PATH".
std::unique_ptr<ImageCodec> make_image_codec(const std::string& spec);

std::vector<uint8_t> raw_image_bytes(const RgbImage& im);
RgbImage parse_raw_image(const std::vector<uint8_t>& bytes);

}  // namespace jpcc
