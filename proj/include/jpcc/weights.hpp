// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jpcc/sparse_tensor.hpp"

namespace jpcc {

enum class DType { F64, I64, U32 };

const char* to_string(DType t);
size_t dtype_size(DType t);

struct TensorChunk {
  DType dtype = DType::F64;
  std::vector<int64_t> shape;
  double scale = 1.0;  // fixed-point tensors: real value = int / scale
  std::vector<uint8_t> data;

  int64_t numel() const;
};

// "PCCW" container: u32 version, u32 manifest length, text manifest, then one
// u64-length-prefixed little-endian chunk per tensor in manifest order.
//
// Manifest lines:
//   tensor <name> <dtype> <d0>x<d1>x... <scale>
//   meta <key> <value...>
class WeightFile {
 public:
  static constexpr uint32_t kVersion = 1;

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
  const std::string& meta(const std::string& key) const;
  const std::map<std::string, std::string>& all_meta() const { return meta_; }

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  const TensorChunk& chunk(const std::string& name) const;
  const std::map<std::string, TensorChunk>& tensors() const { return tensors_; }
  void erase(const std::string& name) { tensors_.erase(name); }

  void put_matrix(const std::string& name, const Matrix& m, std::vector<int64_t> shape = {});
  Matrix get_matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const;
  void put_i64(const std::string& name, const std::vector<int64_t>& v, std::vector<int64_t> shape,
               double scale);
  std::vector<int64_t> get_i64(const std::string& name) const;
  void put_u32(const std::string& name, const std::vector<uint32_t>& v, std::vector<int64_t> shape);
  std::vector<uint32_t> get_u32(const std::string& name) const;

  std::vector<uint8_t> serialize() const;
  static WeightFile parse(std::span<const uint8_t> bytes);
  void save(const std::string& path) const;
  static WeightFile load(const std::string& path);

 private:
  std::map<std::string, std::string> meta_;
  std::map<std::string, TensorChunk> tensors_;
};

// Directory holding the weight files: explicit flag, else $JPCC_WEIGHTS,
// else "weights".
std::string resolve_weights_dir(const std::string& flag);
std::string coding_weights_path(const std::string& dir, int geo_idx);
std::string sr_weights_path(const std::string& dir, int sf);

}  // namespace jpcc
