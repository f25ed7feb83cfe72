// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include "jpcc/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "jpcc/byte_io.hpp"

namespace jpcc {
namespace {

enum class ScalarType { I8, U8, I16, U16, I32, U32, F32, F64 };

ScalarType parse_type(const std::string& t, int line) {
  if (t == "char" || t == "int8") return ScalarType::I8;
  if (t == "uchar" || t == "uint8") return ScalarType::U8;
  if (t == "short" || t == "int16") return ScalarType::I16;
  if (t == "ushort" || t == "uint16") return ScalarType::U16;
  if (t == "int" || t == "int32") return ScalarType::I32;
  if (t == "uint" || t == "uint32") return ScalarType::U32;
  if (t == "float" || t == "float32") return ScalarType::F32;
  if (t == "double" || t == "float64") return ScalarType::F64;
  throw ParseError("ply: unknown property type '" + t + "' at line " + std::to_string(line));
}

size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::I8:
    case ScalarType::U8: return 1;
    case ScalarType::I16:
    case ScalarType::U16: return 2;
    case ScalarType::I32:
    case ScalarType::U32:
    case ScalarType::F32: return 4;
    case ScalarType::F64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::F32;
  bool is_list = false;
  ScalarType count_type = ScalarType::U8;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
};

double read_binary(const std::string& data, size_t& pos, ScalarType t) {
  const size_t n = type_size(t);
  if (pos + n > data.size())
    throw ParseError("ply: unexpected end of binary data at offset " + std::to_string(pos));
  uint64_t raw = 0;
  for (size_t i = 0; i < n; ++i) raw |= uint64_t(uint8_t(data[pos + i])) << (8 * i);
  pos += n;
  switch (t) {
    case ScalarType::I8: return double(int8_t(raw));
    case ScalarType::U8: return double(uint8_t(raw));
    case ScalarType::I16: return double(int16_t(raw));
    case ScalarType::U16: return double(uint16_t(raw));
    case ScalarType::I32: return double(int32_t(raw));
    case ScalarType::U32: return double(uint32_t(raw));
    case ScalarType::F32: return double(std::bit_cast<float>(uint32_t(raw)));
    case ScalarType::F64: return std::bit_cast<double>(raw);
  }
  return 0.0;
}

}  // namespace

PointCloud parse_ply(const std::string& data) {
  size_t pos = 0;
  int line_no = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= data.size()) throw ParseError("ply: header not terminated");
    size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    std::string line = data.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    ++line_no;
    return line;
  };

  if (next_line() != "ply") throw ParseError("ply: missing magic at line 1");
  bool binary = false;
  int depth_override = -1;
  std::vector<Element> elements;
  for (;;) {
    std::istringstream ss(next_line());
    std::string kw;
    ss >> kw;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw ParseError("ply: unsupported format '" + fmt + "' at line " + std::to_string(line_no));
    } else if (kw == "element") {
      Element e;
      ss >> e.name >> e.count;
      if (ss.fail()) throw ParseError("ply: malformed element at line " + std::to_string(line_no));
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty())
        throw ParseError("ply: property before element at line " + std::to_string(line_no));
      Property p;
      std::string t;
      ss >> t;
      if (t == "list") {
        std::string ct, it;
        ss >> ct >> it;
        p.is_list = true;
        p.count_type = parse_type(ct, line_no);
        p.type = parse_type(it, line_no);
      } else {
        p.type = parse_type(t, line_no);
      }
      ss >> p.name;
      if (p.name.empty())
        throw ParseError("ply: property without name at line " + std::to_string(line_no));
      elements.back().props.push_back(p);
    } else if (kw == "comment") {
      std::string key;
      ss >> key;
      if (key == "bit_depth") ss >> depth_override;
    } else if (kw == "obj_info" || kw.empty()) {
    } else {
      throw ParseError("ply: unexpected keyword '" + kw + "' at line " + std::to_string(line_no));
    }
  }

  PointCloud pc;
  std::istringstream body;
  if (!binary) body.str(data.substr(pos));

  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (size_t k = 0; k < e.props.size(); ++k) {
      const auto& n = e.props[k].name;
      if (n == "x") ix = int(k);
      else if (n == "y") iy = int(k);
      else if (n == "z") iz = int(k);
      else if (n == "red") ir = int(k);
      else if (n == "green") ig = int(k);
      else if (n == "blue") ib = int(k);
    }
    if (is_vertex) {
      if (ix < 0 || iy < 0 || iz < 0) throw ParseError("ply: vertex element lacks x/y/z");
      pc.coords.reserve(e.count);
      if (ir >= 0 && ig >= 0 && ib >= 0) pc.colors.emplace().reserve(e.count);
    }
    std::vector<double> vals(e.props.size());
    for (size_t i = 0; i < e.count; ++i) {
      if (binary) {
        for (size_t k = 0; k < e.props.size(); ++k) {
          const auto& p = e.props[k];
          if (p.is_list) {
            const size_t n = size_t(read_binary(data, pos, p.count_type));
            for (size_t j = 0; j < n; ++j) read_binary(data, pos, p.type);
            vals[k] = 0.0;
          } else {
            vals[k] = read_binary(data, pos, p.type);
          }
        }
      } else {
        std::string line;
        if (!std::getline(body, line))
          throw ParseError("ply: unexpected end of data in element '" + e.name + "' at row " +
                           std::to_string(i));
        std::istringstream ls(line);
        for (size_t k = 0; k < e.props.size(); ++k) {
          const auto& p = e.props[k];
          if (p.is_list) {
            size_t n = 0;
            ls >> n;
            double dummy;
            for (size_t j = 0; j < n; ++j) ls >> dummy;
            vals[k] = 0.0;
          } else {
            ls >> vals[k];
          }
          if (ls.fail())
            throw ParseError("ply: malformed value at data line " + std::to_string(line_no + i + 1));
        }
      }
      if (!is_vertex) continue;
      Vec3i c;
      const double xyz[3] = {vals[size_t(ix)], vals[size_t(iy)], vals[size_t(iz)]};
      for (int a = 0; a < 3; ++a) {
        const double r = std::floor(xyz[a] + 0.5);
        if (r < 0) throw DomainError("ply: negative coordinate at vertex " + std::to_string(i));
        if (r >= double(1 << 30)) throw DomainError("ply: coordinate too large at vertex " + std::to_string(i));
        c[a] = int32_t(r);
      }
      pc.coords.push_back(c);
      if (pc.colors) {
        auto clamp8 = [](double v) { return uint8_t(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); };
        pc.colors->push_back(
            {clamp8(vals[size_t(ir)]), clamp8(vals[size_t(ig)]), clamp8(vals[size_t(ib)])});
      }
    }
  }
  pc.bit_depth = depth_override >= 0 ? depth_override : infer_bit_depth(pc.coords);
  pc.validate();
  return pc;
}

PointCloud load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ply(ss.str());
}

std::string serialize_ply(const PointCloud& input, bool binary) {
  PointCloud pc = input;
  pc.canonicalize();
  const bool colored = pc.colors.has_value();
  std::ostringstream out;
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  if (pc.bit_depth > 0) out << "comment bit_depth " << pc.bit_depth << "\n";
  out << "element vertex " << pc.size() << "\n";
  out << "property int x\nproperty int y\nproperty int z\n";
  if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  if (binary) {
    ByteWriter w;
    for (size_t i = 0; i < pc.size(); ++i) {
      w.u32(uint32_t(pc.coords[i].x));
      w.u32(uint32_t(pc.coords[i].y));
      w.u32(uint32_t(pc.coords[i].z));
      if (colored) {
        const Rgb c = (*pc.colors)[i];
        w.u8(c.r);
        w.u8(c.g);
        w.u8(c.b);
      }
    }
    const auto& d = w.data();
    out.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size()));
  } else {
    for (size_t i = 0; i < pc.size(); ++i) {
      const auto& c = pc.coords[i];
      out << c.x << ' ' << c.y << ' ' << c.z;
      if (colored) {
        const Rgb col = (*pc.colors)[i];
        out << ' ' << int(col.r) << ' ' << int(col.g) << ' ' << int(col.b);
      }
      out << '\n';
    }
  }
  return out.str();
}

void save_ply(const PointCloud& pc, const std::string& path, bool binary) {
  const std::string s = serialize_ply(pc, binary);
  write_file_atomic(path, std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

}  // namespace jpcc
