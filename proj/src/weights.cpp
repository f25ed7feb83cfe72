// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/weights.hpp"

#include <cstdlib>
#include <cstring>
#include <sstream>

#include "jpcc/byte_io.hpp"

namespace jpcc {

const char* to_string(DType t) {
  switch (t) {
    case DType::F64: return "f64";
    case DType::I64: return "i64";
    case DType::U32: return "u32";
  }
  return "?";
}

size_t dtype_size(DType t) { return t == DType::U32 ? 4 : 8; }

namespace {

DType parse_dtype(const std::string& s) {
  if (s == "f64") return DType::F64;
  if (s == "i64") return DType::I64;
  if (s == "u32") return DType::U32;
  throw ParseError("weights: unknown dtype '" + s + "'");
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "0" : s;
}

std::vector<int64_t> parse_shape(const std::string& s) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) out.push_back(std::stoll(part));
  return out;
}

template <typename T>
void append_le(std::vector<uint8_t>& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(uint8_t(uint64_t(v) >> (8 * i)));
}

template <typename T>
T read_le(const uint8_t* p) {
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(p[i]) << (8 * i);
  return T(v);
}

}  // namespace

int64_t TensorChunk::numel() const {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

const std::string& WeightFile::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw ConfigError("weights: missing meta '" + key + "'");
  return it->second;
}

const TensorChunk& WeightFile::chunk(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("weights: missing tensor '" + name + "'");
  return it->second;
}

void WeightFile::put_matrix(const std::string& name, const Matrix& m, std::vector<int64_t> shape) {
  TensorChunk c;
  c.dtype = DType::F64;
  c.shape = shape.empty() ? std::vector<int64_t>{m.rows(), m.cols()} : std::move(shape);
  if (c.numel() != m.size()) throw ShapeError("weights: shape does not match data for " + name);
  c.data.reserve(size_t(m.size()) * 8);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    uint64_t bits;
    std::memcpy(&bits, m.data() + i, 8);
    append_le(c.data, bits);
  }
  tensors_[name] = std::move(c);
}

Matrix WeightFile::get_matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
  const TensorChunk& c = chunk(name);
  if (c.dtype != DType::F64) throw ShapeError("weights: " + name + " is not f64");
  if (c.numel() != rows * cols)
    throw ShapeError("weights: " + name + " has shape " + shape_str(c.shape) + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " elements");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const uint64_t bits = read_le<uint64_t>(c.data.data() + size_t(i) * 8);
    std::memcpy(m.data() + i, &bits, 8);
  }
  return m;
}

void WeightFile::put_i64(const std::string& name, const std::vector<int64_t>& v,
                         std::vector<int64_t> shape, double scale) {
  TensorChunk c;
  c.dtype = DType::I64;
  c.shape = std::move(shape);
  c.scale = scale;
  if (c.numel() != int64_t(v.size())) throw ShapeError("weights: shape does not match data for " + name);
  for (auto x : v) append_le(c.data, uint64_t(x));
  tensors_[name] = std::move(c);
}

std::vector<int64_t> WeightFile::get_i64(const std::string& name) const {
  const TensorChunk& c = chunk(name);
  if (c.dtype != DType::I64) throw ShapeError("weights: " + name + " is not i64");
  std::vector<int64_t> out(c.data.size() / 8);
  for (size_t i = 0; i < out.size(); ++i) out[i] = int64_t(read_le<uint64_t>(c.data.data() + i * 8));
  return out;
}

void WeightFile::put_u32(const std::string& name, const std::vector<uint32_t>& v,
                         std::vector<int64_t> shape) {
  TensorChunk c;
  c.dtype = DType::U32;
  c.shape = std::move(shape);
  if (c.numel() != int64_t(v.size())) throw ShapeError("weights: shape does not match data for " + name);
  for (auto x : v) append_le(c.data, x);
  tensors_[name] = std::move(c);
}

std::vector<uint32_t> WeightFile::get_u32(const std::string& name) const {
  const TensorChunk& c = chunk(name);
  if (c.dtype != DType::U32) throw ShapeError("weights: " + name + " is not u32");
  std::vector<uint32_t> out(c.data.size() / 4);
  for (size_t i = 0; i < out.size(); ++i) out[i] = read_le<uint32_t>(c.data.data() + i * 4);
  return out;
}

std::vector<uint8_t> WeightFile::serialize() const {
  std::ostringstream man;
  man.precision(17);
  for (const auto& [k, v] : meta_) man << "meta " << k << ' ' << v << '\n';
  for (const auto& [n, c] : tensors_)
    man << "tensor " << n << ' ' << to_string(c.dtype) << ' ' << shape_str(c.shape) << ' ' << c.scale
        << '\n';
  const std::string text = man.str();
  ByteWriter w;
  w.raw("PCCW");
  w.u32(kVersion);
  w.str(text);
  for (const auto& [n, c] : tensors_) {
    w.u64(c.data.size());
    w.bytes(c.data);
  }
  return w.take();
}

WeightFile WeightFile::parse(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), "PCCW", 4) != 0) throw ParseError("weights: bad magic");
  const uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("weights: unsupported version " + std::to_string(version));
  const std::string text = r.str();
  WeightFile wf;
  std::vector<std::string> order;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      wf.meta_[key] = value;
    } else if (kind == "tensor") {
      std::string name, dtype, shape;
      double scale = 1.0;
      if (!(ls >> name >> dtype >> shape >> scale)) throw ParseError("weights: bad manifest line '" + line + "'");
      TensorChunk c;
      c.dtype = parse_dtype(dtype);
      c.shape = parse_shape(shape);
      c.scale = scale;
      wf.tensors_[name] = std::move(c);
      order.push_back(name);
    } else {
      throw ParseError("weights: bad manifest line '" + line + "'");
    }
  }
  for (const auto& name : order) {
    TensorChunk& c = wf.tensors_[name];
    const uint64_t n = r.u64();
    if (n != uint64_t(c.numel()) * dtype_size(c.dtype))
      throw ParseError("weights: chunk size mismatch for " + name);
    auto b = r.bytes(size_t(n));
    c.data.assign(b.begin(), b.end());
  }
  if (!r.at_end()) throw ParseError("weights: trailing bytes");
  return wf;
}

void WeightFile::save(const std::string& path) const { write_file_atomic(path, serialize()); }

WeightFile WeightFile::load(const std::string& path) { return parse(read_file(path)); }

std::string resolve_weights_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("JPCC_WEIGHTS"); env && *env) return env;
  return "weights";
}

std::string coding_weights_path(const std::string& dir, int geo_idx) {
  return dir + "/coding_" + std::to_string(geo_idx) + ".pccw";
}

std::string sr_weights_path(const std::string& dir, int sf) {
  return dir + "/sr_sf" + std::to_string(sf) + ".pccw";
}

}  // namespace jpcc
