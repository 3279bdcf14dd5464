#include "mpac/ply_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mpac {

namespace {

enum class PropType { kF32, kF64, kU8, kI8, kU16, kI16, kU32, kI32 };

struct PropInfo {
  std::string name;
  PropType type = PropType::kF32;
  bool is_list = false;
};

struct ElementInfo {
  std::string name;
  std::size_t count = 0;
  std::vector<PropInfo> props;
};

int prop_size(PropType t) {
  switch (t) {
    case PropType::kF32: return 4;
    case PropType::kF64: return 8;
    case PropType::kU8:
    case PropType::kI8: return 1;
    case PropType::kU16:
    case PropType::kI16: return 2;
    case PropType::kU32:
    case PropType::kI32: return 4;
  }
  return 0;
}

bool parse_type(const std::string& s, PropType& out) {
  if (s == "float" || s == "float32") out = PropType::kF32;
  else if (s == "double" || s == "float64") out = PropType::kF64;
  else if (s == "uchar" || s == "uint8") out = PropType::kU8;
  else if (s == "char" || s == "int8") out = PropType::kI8;
  else if (s == "ushort" || s == "uint16") out = PropType::kU16;
  else if (s == "short" || s == "int16") out = PropType::kI16;
  else if (s == "uint" || s == "uint32") out = PropType::kU32;
  else if (s == "int" || s == "int32") out = PropType::kI32;
  else return false;
  return true;
}

double read_binary_value(const u8* p, PropType t) {
  switch (t) {
    case PropType::kF32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PropType::kF64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
    case PropType::kU8: return *p;
    case PropType::kI8: {
      signed char v;
      std::memcpy(&v, p, 1);
      return v;
    }
    case PropType::kU16: {
      u16 v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PropType::kI16: {
      i16 v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PropType::kU32: {
      u32 v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PropType::kI32: {
      i32 v;
      std::memcpy(&v, p, 4);
      return v;
    }
  }
  return 0;
}

[[noreturn]] void fail(const std::string& origin, const std::string& msg) {
  throw CorruptStreamError("ply " + origin + ": " + msg);
}

}  // namespace

PlyCloud parse_ply(std::span<const u8> bytes, const std::string& origin) {
  // --- header ---
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= bytes.size()) fail(origin, "unexpected end of header");
    std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    std::string line(reinterpret_cast<const char*>(bytes.data() + start), pos - start);
    if (pos < bytes.size()) ++pos;  // consume '\n'
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") fail(origin, "missing ply magic");
  bool binary = false;
  bool format_seen = false;
  std::vector<ElementInfo> elements;
  for (;;) {
    std::string line = next_line();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "comment" || word == "obj_info" || word.empty()) continue;
    if (word == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else fail(origin, "unsupported format: " + fmt);
      format_seen = true;
    } else if (word == "element") {
      ElementInfo e;
      if (!(ls >> e.name >> e.count)) fail(origin, "bad element line");
      elements.push_back(std::move(e));
    } else if (word == "property") {
      if (elements.empty()) fail(origin, "property before element");
      PropInfo p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string count_t, item_t;
        if (!(ls >> count_t >> item_t >> p.name)) fail(origin, "bad list property");
        p.is_list = true;
      } else {
        if (!parse_type(t, p.type)) fail(origin, "unknown property type: " + t);
        if (!(ls >> p.name)) fail(origin, "bad property line");
      }
      elements.back().props.push_back(std::move(p));
    } else {
      fail(origin, "unknown header keyword: " + word);
    }
  }
  if (!format_seen) fail(origin, "missing format line");

  std::size_t vertex_idx = elements.size();
  for (std::size_t i = 0; i < elements.size(); ++i)
    if (elements[i].name == "vertex") {
      vertex_idx = i;
      break;
    }
  if (vertex_idx == elements.size()) fail(origin, "no vertex element");
  const ElementInfo& vx = elements[vertex_idx];

  int col_x = -1, col_y = -1, col_z = -1, col_r = -1, col_g = -1, col_b = -1;
  for (std::size_t i = 0; i < vx.props.size(); ++i) {
    const auto& p = vx.props[i];
    if (p.is_list) fail(origin, "list property in vertex element");
    if (p.name == "x") col_x = int(i);
    else if (p.name == "y") col_y = int(i);
    else if (p.name == "z") col_z = int(i);
    else if (p.name == "red" || p.name == "r") col_r = int(i);
    else if (p.name == "green" || p.name == "g") col_g = int(i);
    else if (p.name == "blue" || p.name == "b") col_b = int(i);
  }
  if (col_x < 0 || col_y < 0 || col_z < 0) fail(origin, "vertex element lacks x/y/z");
  bool has_rgb = col_r >= 0 && col_g >= 0 && col_b >= 0;
  if (has_rgb) {
    for (int c : {col_r, col_g, col_b})
      if (vx.props[std::size_t(c)].type != PropType::kU8)
        fail(origin, "color properties must be uchar");
  }

  PlyCloud cloud;
  cloud.has_rgb = has_rgb;
  cloud.xyz.reserve(vx.count);
  if (has_rgb) cloud.rgb.reserve(vx.count);

  if (binary) {
    // Skip preceding elements; list properties make their size unknowable.
    for (std::size_t ei = 0; ei < vertex_idx; ++ei) {
      std::size_t stride = 0;
      for (const auto& p : elements[ei].props) {
        if (p.is_list) fail(origin, "cannot skip list element before vertex data");
        stride += std::size_t(prop_size(p.type));
      }
      std::size_t skip = stride * elements[ei].count;
      if (bytes.size() - pos < skip) fail(origin, "truncated element data");
      pos += skip;
    }
    std::size_t stride = 0;
    std::vector<std::size_t> offsets(vx.props.size());
    for (std::size_t i = 0; i < vx.props.size(); ++i) {
      offsets[i] = stride;
      stride += std::size_t(prop_size(vx.props[i].type));
    }
    if (bytes.size() - pos < stride * vx.count) fail(origin, "truncated vertex data");
    for (std::size_t v = 0; v < vx.count; ++v) {
      const u8* rec = bytes.data() + pos + v * stride;
      auto get = [&](int col) {
        return read_binary_value(rec + offsets[std::size_t(col)], vx.props[std::size_t(col)].type);
      };
      std::array<double, 3> p{get(col_x), get(col_y), get(col_z)};
      if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
        fail(origin, "non-finite vertex position");
      cloud.xyz.push_back(p);
      if (has_rgb)
        cloud.rgb.push_back({u8(get(col_r)), u8(get(col_g)), u8(get(col_b))});
    }
  } else {
    for (std::size_t ei = 0; ei < vertex_idx; ++ei)
      for (std::size_t k = 0; k < elements[ei].count; ++k) next_line();
    for (std::size_t v = 0; v < vx.count; ++v) {
      std::string line = next_line();
      std::istringstream ls(line);
      std::vector<double> vals(vx.props.size());
      for (auto& d : vals)
        if (!(ls >> d)) fail(origin, "short vertex line " + std::to_string(v));
      std::array<double, 3> p{vals[std::size_t(col_x)], vals[std::size_t(col_y)],
                              vals[std::size_t(col_z)]};
      if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
        fail(origin, "non-finite vertex position");
      cloud.xyz.push_back(p);
      if (has_rgb) {
        for (int c : {col_r, col_g, col_b}) {
          double d = vals[std::size_t(c)];
          if (d < 0 || d > 255 || d != std::floor(d))
            fail(origin, "color value out of range");
        }
        cloud.rgb.push_back({u8(vals[std::size_t(col_r)]), u8(vals[std::size_t(col_g)]),
                             u8(vals[std::size_t(col_b)])});
      }
    }
  }
  return cloud;
}

PlyCloud read_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open file: " + path);
  std::vector<u8> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_ply(bytes, path);
}

void write_ply(const std::string& path, const PlyCloud& cloud, bool binary) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open file for writing: " + path);
  f << "ply\n"
    << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
    << "element vertex " << cloud.xyz.size() << "\n"
    << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_rgb)
    f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "end_header\n";
  for (std::size_t i = 0; i < cloud.xyz.size(); ++i) {
    if (binary) {
      float p[3] = {float(cloud.xyz[i][0]), float(cloud.xyz[i][1]), float(cloud.xyz[i][2])};
      f.write(reinterpret_cast<const char*>(p), 12);
      if (cloud.has_rgb) f.write(reinterpret_cast<const char*>(cloud.rgb[i].data()), 3);
    } else {
      f << cloud.xyz[i][0] << " " << cloud.xyz[i][1] << " " << cloud.xyz[i][2];
      if (cloud.has_rgb)
        f << " " << int(cloud.rgb[i][0]) << " " << int(cloud.rgb[i][1]) << " "
          << int(cloud.rgb[i][2]);
      f << "\n";
    }
  }
  if (!f) throw ConfigError("failed writing file: " + path);
}

}  // namespace mpac
