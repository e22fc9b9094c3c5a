#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "plant3d/cloud.hpp"

namespace plant3d {

enum class CloudFormat { Auto, Ply, Xyz };

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
  fail(ErrorKind::ParseError, path + ":" + std::to_string(line) + ": " + what);
}

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

inline double ply_read_binary(const char* p, const std::string& t) {
  auto load = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return load(std::int8_t{});
  if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
  if (t == "short" || t == "int16") return load(std::int16_t{});
  if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
  if (t == "int" || t == "int32") return load(std::int32_t{});
  if (t == "uint" || t == "uint32") return load(std::uint32_t{});
  if (t == "float" || t == "float32") return load(float{});
  return load(double{});
}

inline bool is_float_type(const std::string& t) {
  return t == "float" || t == "float32" || t == "double" || t == "float64";
}

inline PointCloud load_ply(const std::string& path, const std::string& bytes) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= bytes.size()) return false;
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) end = bytes.size();
    line = std::string_view(bytes).substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || line != "ply") parse_fail(path, 1, "missing 'ply' magic");

  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (next_line(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) parse_fail(path, line_no, "malformed format line");
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        parse_fail(path, line_no, "unsupported format '" + std::string(tok[1]) + "'");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) parse_fail(path, line_no, "malformed element line");
      PlyElement el;
      el.name = tok[1];
      double count = 0;
      if (!parse_double(tok[2], count) || count < 0) parse_fail(path, line_no, "bad element count");
      el.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(el));
    } else if (tok[0] == "property") {
      if (elements.empty()) parse_fail(path, line_no, "property before element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        prop.is_list = true;
        prop.count_type = tok[2];
        prop.type = tok[3];
        prop.name = tok[4];
        if (ply_type_size(prop.count_type) == 0) parse_fail(path, line_no, "unknown list count type");
      } else if (tok.size() == 3) {
        prop.type = tok[1];
        prop.name = tok[2];
      } else {
        parse_fail(path, line_no, "malformed property line");
      }
      if (ply_type_size(prop.type) == 0) parse_fail(path, line_no, "unknown property type '" + prop.type + "'");
      elements.back().properties.push_back(std::move(prop));
    } else {
      parse_fail(path, line_no, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!header_done) parse_fail(path, line_no, "missing end_header");
  if (!have_format) parse_fail(path, line_no, "missing format line");

  PointCloud cloud;
  cloud.source_id = path;
  bool saw_vertex = false;

  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    int ix = -1, iy = -1, iz = -1;
    if (is_vertex) {
      saw_vertex = true;
      for (std::size_t i = 0; i < el.properties.size(); ++i) {
        const auto& p = el.properties[i];
        const int* slot = nullptr;
        if (p.name == "x") ix = static_cast<int>(i), slot = &ix;
        if (p.name == "y") iy = static_cast<int>(i), slot = &iy;
        if (p.name == "z") iz = static_cast<int>(i), slot = &iz;
        if (slot && (p.is_list || !is_float_type(p.type))) {
          parse_fail(path, line_no, "vertex property '" + p.name + "' must be float32 or float64");
        }
      }
      if (ix < 0 || iy < 0 || iz < 0) parse_fail(path, line_no, "vertex element lacks x, y, z");
      cloud.points.reserve(el.count);
    }

    for (std::size_t row = 0; row < el.count; ++row) {
      double xyz[3] = {0, 0, 0};
      if (!binary) {
        if (!next_line(line)) parse_fail(path, line_no + 1, "unexpected end of file in element '" + el.name + "'");
        const auto tok = split_ws(line);
        std::size_t t = 0;
        for (std::size_t pi = 0; pi < el.properties.size(); ++pi) {
          const auto& prop = el.properties[pi];
          std::size_t n_values = 1;
          if (prop.is_list) {
            double cnt = 0;
            if (t >= tok.size() || !parse_double(tok[t], cnt) || cnt < 0) parse_fail(path, line_no, "bad list count");
            ++t;
            n_values = static_cast<std::size_t>(cnt);
          }
          for (std::size_t v = 0; v < n_values; ++v, ++t) {
            double value = 0;
            if (t >= tok.size() || !parse_double(tok[t], value)) {
              parse_fail(path, line_no, "malformed value for property '" + prop.name + "'");
            }
            if (is_vertex && static_cast<int>(pi) == ix) xyz[0] = value;
            if (is_vertex && static_cast<int>(pi) == iy) xyz[1] = value;
            if (is_vertex && static_cast<int>(pi) == iz) xyz[2] = value;
          }
        }
        if (t != tok.size()) parse_fail(path, line_no, "trailing values in element '" + el.name + "'");
      } else {
        for (std::size_t pi = 0; pi < el.properties.size(); ++pi) {
          const auto& prop = el.properties[pi];
          std::size_t n_values = 1;
          if (prop.is_list) {
            const std::size_t cs = ply_type_size(prop.count_type);
            if (pos + cs > bytes.size()) parse_fail(path, line_no, "truncated binary body");
            n_values = static_cast<std::size_t>(ply_read_binary(bytes.data() + pos, prop.count_type));
            pos += cs;
          }
          const std::size_t vs = ply_type_size(prop.type);
          if (pos + vs * n_values > bytes.size()) parse_fail(path, line_no, "truncated binary body");
          if (is_vertex && !prop.is_list) {
            const double value = ply_read_binary(bytes.data() + pos, prop.type);
            if (static_cast<int>(pi) == ix) xyz[0] = value;
            if (static_cast<int>(pi) == iy) xyz[1] = value;
            if (static_cast<int>(pi) == iz) xyz[2] = value;
          }
          pos += vs * n_values;
        }
      }
      if (is_vertex) {
        Point3 p(xyz[0], xyz[1], xyz[2]);
        if (!p.allFinite()) parse_fail(path, line_no, "non-finite vertex coordinate");
        cloud.points.push_back(p);
      }
    }
  }
  if (!saw_vertex) parse_fail(path, line_no, "no vertex element");
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, path + ": no vertices");
  return cloud;
}

inline PointCloud load_xyz(const std::string& path, const std::string& bytes) {
  PointCloud cloud;
  cloud.source_id = path;
  std::istringstream in(bytes);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok.size() < 3) parse_fail(path, line_no, "expected 'x y z'");
    double v[3];
    for (int a = 0; a < 3; ++a) {
      if (!parse_double(tok[a], v[a]) || !std::isfinite(v[a])) parse_fail(path, line_no, "malformed coordinate");
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
  }
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, path + ": no points");
  return cloud;
}

}  // namespace detail

/// Reads vertex positions from an ASCII or little-endian binary PLY, or a
/// whitespace-separated XYZ file. Auto-detection looks at the `ply` magic.
inline PointCloud load_cloud(const std::string& path, CloudFormat format = CloudFormat::Auto) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (format == CloudFormat::Auto) {
    const bool magic = bytes.rfind("ply\n", 0) == 0 || bytes.rfind("ply\r\n", 0) == 0;
    format = magic ? CloudFormat::Ply : CloudFormat::Xyz;
  }
  return format == CloudFormat::Ply ? detail::load_ply(path, bytes) : detail::load_xyz(path, bytes);
}

inline void save_ply(const PointCloud& cloud, const std::string& path, bool binary = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::NotFound, "cannot write " + path);
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\nend_header\n";
  if (binary) {
    for (const auto& p : cloud.points) {
      const double v[3] = {p.x(), p.y(), p.z()};
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
  } else {
    out << std::setprecision(17);
    for (const auto& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
}

inline void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::NotFound, "cannot write " + path);
  out << std::setprecision(17);
  for (const auto& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

/// Writes PLY or XYZ depending on the file extension.
inline void save_cloud(const PointCloud& cloud, const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".xyz" || ext == ".txt") {
    save_xyz(cloud, path);
  } else {
    save_ply(cloud, path);
  }
}

}  // namespace plant3d
