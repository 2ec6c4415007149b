#pragma once

// Minimal PLY support for colored point clouds: ascii and
// binary_little_endian, vertex element with x,y,z and red,green,blue.
// Other elements and properties are parsed past and ignored.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/types.hpp"

namespace cpo::io {

namespace ply_detail {

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline bool parse_scalar(const std::string& name, Scalar& out) {
  static const std::pair<const char*, Scalar> kNames[] = {
      {"char", Scalar::Int8},     {"int8", Scalar::Int8},       {"uchar", Scalar::UInt8},
      {"uint8", Scalar::UInt8},   {"short", Scalar::Int16},     {"int16", Scalar::Int16},
      {"ushort", Scalar::UInt16}, {"uint16", Scalar::UInt16},   {"int", Scalar::Int32},
      {"int32", Scalar::Int32},   {"uint", Scalar::UInt32},     {"uint32", Scalar::UInt32},
      {"float", Scalar::Float32}, {"float32", Scalar::Float32}, {"double", Scalar::Float64},
      {"float64", Scalar::Float64}};
  for (const auto& [n, s] : kNames) {
    if (name == n) {
      out = s;
      return true;
    }
  }
  return false;
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::Int8:
    case Scalar::UInt8: return 1;
    case Scalar::Int16:
    case Scalar::UInt16: return 2;
    case Scalar::Int32:
    case Scalar::UInt32:
    case Scalar::Float32: return 4;
    case Scalar::Float64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::Float32;
  bool is_list = false;
  Scalar count_type = Scalar::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

template <typename T>
T read_le(const unsigned char* p) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts not supported");
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double decode(Scalar s, const unsigned char* p) {
  switch (s) {
    case Scalar::Int8: return read_le<std::int8_t>(p);
    case Scalar::UInt8: return read_le<std::uint8_t>(p);
    case Scalar::Int16: return read_le<std::int16_t>(p);
    case Scalar::UInt16: return read_le<std::uint16_t>(p);
    case Scalar::Int32: return read_le<std::int32_t>(p);
    case Scalar::UInt32: return read_le<std::uint32_t>(p);
    case Scalar::Float32: return read_le<float>(p);
    case Scalar::Float64: return read_le<double>(p);
  }
  return 0.0;
}

// Integer color channels are divided by their type's max; floating colors are
// taken as already normalized.
inline double color_scale(Scalar s) {
  switch (s) {
    case Scalar::UInt8: return 255.0;
    case Scalar::UInt16: return 65535.0;
    case Scalar::Float32:
    case Scalar::Float64: return 1.0;
    default: return 0.0;
  }
}

}  // namespace ply_detail

inline PointCloud load_pointcloud(const std::filesystem::path& path) {
  using namespace ply_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open point cloud: " + path.string());

  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
    throw ParseError("missing 'ply' magic in " + path.string());

  bool ascii = false;
  bool have_format = false;
  std::vector<Element> elements;
  while (true) {
    if (!std::getline(in, line)) throw ParseError("unterminated PLY header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") {
        ascii = true;
      } else if (fmt == "binary_little_endian") {
        ascii = false;
      } else {
        throw ParseError("unsupported PLY format: " + fmt);
      }
      have_format = true;
    } else if (key == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw ParseError("malformed element line: " + line);
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw ParseError("property before any element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        if (!parse_scalar(count_type, p.count_type) || !parse_scalar(item_type, p.type))
          throw ParseError("bad list property: " + line);
      } else {
        ls >> p.name;
        if (!parse_scalar(type, p.type)) throw ParseError("unknown property type: " + type);
      }
      if (!ls) throw ParseError("malformed property line: " + line);
      elements.back().properties.push_back(std::move(p));
    } else {
      throw ParseError("unexpected header line: " + line);
    }
  }
  if (!have_format) throw ParseError("PLY header has no format line");

  PointCloud cloud;
  bool found_vertex = false;
  std::vector<unsigned char> buf;
  for (const Element& e : elements) {
    const bool is_vertex = e.name == "vertex";
    int slot[6] = {-1, -1, -1, -1, -1, -1};
    if (is_vertex) {
      found_vertex = true;
      static const char* kWanted[6] = {"x", "y", "z", "red", "green", "blue"};
      for (int k = 0; k < 6; ++k) {
        for (std::size_t j = 0; j < e.properties.size(); ++j) {
          if (e.properties[j].name == kWanted[k] && !e.properties[j].is_list) slot[k] = static_cast<int>(j);
        }
      }
      if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0) throw MissingProperty("vertex element lacks x/y/z");
      if (slot[3] < 0 || slot[4] < 0 || slot[5] < 0)
        throw MissingProperty("vertex element lacks red/green/blue");
      for (int k = 3; k < 6; ++k) {
        if (color_scale(e.properties[slot[k]].type) == 0.0)
          throw ParseError("unsupported color property type");
      }
      cloud.positions.reserve(e.count);
      cloud.colors.reserve(e.count);
    }

    std::vector<double> values(e.properties.size());
    for (std::size_t i = 0; i < e.count; ++i) {
      if (ascii) {
        if (!std::getline(in, line)) throw ParseError("PLY body shorter than declared element count");
        std::istringstream ls(line);
        for (std::size_t j = 0; j < e.properties.size(); ++j) {
          const Property& p = e.properties[j];
          if (p.is_list) {
            long long n = -1;
            ls >> n;
            if (!ls || n < 0) throw ParseError("bad list count in PLY body");
            double dummy;
            for (long long k = 0; k < n; ++k) ls >> dummy;
          } else {
            ls >> values[j];
          }
          if (!ls) throw ParseError("malformed PLY ascii row " + std::to_string(i));
        }
      } else {
        for (std::size_t j = 0; j < e.properties.size(); ++j) {
          const Property& p = e.properties[j];
          if (p.is_list) {
            buf.resize(scalar_size(p.count_type));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
              throw ParseError("truncated PLY binary body");
            const double n = decode(p.count_type, buf.data());
            if (n < 0) throw ParseError("negative list count");
            in.seekg(static_cast<std::streamoff>(n * scalar_size(p.type)), std::ios::cur);
          } else {
            buf.resize(scalar_size(p.type));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
              throw ParseError("truncated PLY binary body");
            values[j] = decode(p.type, buf.data());
          }
        }
      }
      if (is_vertex) {
        const Vec3 pos(values[slot[0]], values[slot[1]], values[slot[2]]);
        Color col;
        for (int k = 0; k < 3; ++k)
          col[k] = values[slot[3 + k]] / color_scale(e.properties[slot[3 + k]].type);
        cloud.positions.push_back(pos);
        cloud.colors.push_back(col);
      }
    }
    if (is_vertex) break;
  }
  if (!found_vertex) throw MissingProperty("PLY has no vertex element");
  validate(cloud);
  return cloud;
}

enum class PlyFormat { Ascii, BinaryLittleEndian };

inline void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path,
                            PlyFormat format = PlyFormat::BinaryLittleEndian) {
  if (path.empty()) throw IoError("empty output path");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write point cloud: " + path.string());

  out << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian")
      << " 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";

  auto to_u8 = [](double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  if (format == PlyFormat::Ascii) {
    out << std::setprecision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3& p = cloud.positions[i];
      const Color& c = cloud.colors[i];
      out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << int(to_u8(c.x())) << ' '
          << int(to_u8(c.y())) << ' ' << int(to_u8(c.z())) << '\n';
    }
  } else {
    std::vector<char> row(3 * sizeof(double) + 3);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3& p = cloud.positions[i];
      const Color& c = cloud.colors[i];
      for (int k = 0; k < 3; ++k) std::memcpy(&row[k * sizeof(double)], &p[k], sizeof(double));
      for (int k = 0; k < 3; ++k) row[3 * sizeof(double) + k] = static_cast<char>(to_u8(c[k]));
      out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cpo::io
