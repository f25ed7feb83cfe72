// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/image_codec.hpp"

#include <zlib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <unistd.h>

#include "jpcc/byte_io.hpp"

namespace jpcc {

std::vector<uint8_t> raw_image_bytes(const RgbImage& im) {
  ByteWriter w;
  w.u32(uint32_t(im.width));
  w.u32(uint32_t(im.height));
  w.bytes(im.data);
  return w.take();
}

RgbImage parse_raw_image(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  const uint32_t w = r.u32(), h = r.u32();
  if (w > 65535 || h > 65535) throw DecodeError("image dimensions out of range");
  RgbImage im(static_cast<int>(w), static_cast<int>(h));
  auto px = r.bytes(im.data.size());
  std::copy(px.begin(), px.end(), im.data.begin());
  if (!r.at_end()) throw DecodeError("trailing bytes after image data");
  return im;
}

std::vector<uint8_t> BuiltinImageCodec::encode(const RgbImage& im, int) {
  const auto raw = raw_image_bytes(im);
  uLongf len = compressBound(uLong(raw.size()));
  std::vector<uint8_t> out(len + 4);
  if (compress2(out.data() + 4, &len, raw.data(), uLong(raw.size()), 9) != Z_OK)
    throw EncodeError("zlib compression failed");
  out.resize(len + 4);
  for (int i = 0; i < 4; ++i) out[size_t(i)] = uint8_t(raw.size() >> (8 * i));
  return out;
}

RgbImage BuiltinImageCodec::decode(const std::vector<uint8_t>& bytes, int) {
  if (bytes.size() < 4) throw DecodeError("builtin image stream too short");
  uLongf n = uLongf(bytes[0]) | uLongf(bytes[1]) << 8 | uLongf(bytes[2]) << 16 |
             uLongf(bytes[3]) << 24;
  if (n > (uLongf(1) << 31)) throw DecodeError("builtin image stream claims an absurd size");
  std::vector<uint8_t> raw(n);
  uLongf got = n;
  if (uncompress(raw.data(), &got, bytes.data() + 4, uLong(bytes.size() - 4)) != Z_OK || got != n)
    throw DecodeError("builtin image stream is corrupt");
  return parse_raw_image(raw);
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

std::filesystem::path scratch_path(const char* tag) {
  static std::atomic<uint64_t> counter{0};
  return std::filesystem::temp_directory_path() /
         ("jpcc_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + tag);
}

}  // namespace

std::vector<uint8_t> ExecImageCodec::run(const std::string& mode, const std::vector<uint8_t>& input,
                                         int color_idx) {
  const auto in = scratch_path("in"), out = scratch_path("out");
  struct Cleanup {
    std::filesystem::path a, b;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove(a, ec);
      std::filesystem::remove(b, ec);
    }
  } cleanup{in, out};
  write_file_atomic(in.string(), input);
  const std::string cmd = shell_quote(program_) + " " + mode + " " + std::to_string(color_idx) +
                          " < " + shell_quote(in.string()) + " > " + shell_quote(out.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw Error(mode + " exited with status " + std::to_string(rc));
  return read_file(out.string());
}

std::vector<uint8_t> ExecImageCodec::encode(const RgbImage& im, int color_idx) {
  try {
    return run("encode", raw_image_bytes(im), color_idx);
  } catch (const Error& e) {
    throw EncodeError("image plugin " + id() + ": " + e.what());
  }
}

RgbImage ExecImageCodec::decode(const std::vector<uint8_t>& bytes, int color_idx) {
  try {
    return parse_raw_image(run("decode", bytes, color_idx));
  } catch (const Error& e) {
    throw DecodeError("image plugin " + id() + ": " + e.what());
  }
}

std::unique_ptr<ImageCodec> make_image_codec(const std::string& spec) {
  if (spec == "builtin") return std::make_unique<BuiltinImageCodec>();
  if (spec.rfind("exec:", 0) == 0 && spec.size() > 5)
    return std::make_unique<ExecImageCodec>(spec.substr(5));
  throw ConfigError("unknown image codec '" + spec + "' (builtin, exec:PATH)");
}

}  // namespace jpcc
