// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jpcc/common.hpp"

namespace jpcc {

// Little-endian serialization helpers shared by every container format.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { put_le(v); }
  void u32(uint32_t v) { put_le(v); }
  void u64(uint64_t v) { put_le(v); }
  void i64(int64_t v) { put_le(uint64_t(v)); }
  void f32(float v) { put_le(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<uint64_t>(v)); }
  void bytes(std::span<const uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  // u32 length prefix followed by the payload.
  void blob(std::span<const uint8_t> b) {
    u32(uint32_t(b.size()));
    bytes(b);
  }
  void str(std::string_view s) {
    u32(uint32_t(s.size()));
    raw(s);
  }

  size_t size() const { return buf_.size(); }
  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }

  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8() { return get_le<uint8_t>(); }
  uint16_t u16() { return get_le<uint16_t>(); }
  uint32_t u32() { return get_le<uint32_t>(); }
  uint64_t u64() { return get_le<uint64_t>(); }
  int64_t i64() { return int64_t(get_le<uint64_t>()); }
  float f32() { return std::bit_cast<float>(get_le<uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<uint64_t>()); }

  std::span<const uint8_t> bytes(size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const uint8_t> blob() { return bytes(u32()); }
  std::string str() {
    auto b = blob();
    return std::string(b.begin(), b.end());
  }

  // Everything not yet consumed; the reader is left at the end.
  std::span<const uint8_t> rest() { return bytes(remaining()); }

  size_t position() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) const {
    if (n > data_.size() - pos_)
      throw DecodeError("truncated stream: need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_));
  }

  template <typename T>
  T get_le() {
    need(sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
// Writes via a temporary file and rename so readers never see partial output.
void write_file_atomic(const std::string& path, std::span<const uint8_t> data);

}  // namespace jpcc
