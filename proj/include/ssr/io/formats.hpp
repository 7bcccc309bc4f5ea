#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ssr/errors.hpp"
#include "ssr/scene/geometry.hpp"
#include "ssr/scene/sampling.hpp"
#include "ssr/scene/voxelize.hpp"

// Sample container files. All multi-byte fields are little-endian.
//   PPM   binary P6, maxval 255
//   SSDM  "SSDM" u32 width u32 height u8 dtype(1 = f32) 3 pad bytes, f32 row-major
//   SSBM  "SSBM" u32 width u32 height, rows bit-packed LSB first, each row padded to a byte
//   SSVX  "SSVX" u32 R, R^3 bits x-fastest LSB first, padded to a byte at the end
//   PLY   ASCII, float x y z per vertex
namespace ssr::io {

namespace fs = std::filesystem;
using scene::DepthMap;
using scene::Mask;
using scene::PointCloud;
using scene::RgbImage;
using scene::VoxelGrid;

using Meta = std::map<std::string, std::string>;

namespace detail {

inline std::string read_all(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_all(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& s, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(s[pos + i])) << (8 * i);
  return v;
}

inline void expect(bool ok, const fs::path& path, const std::string& what) {
  if (!ok) throw DataError(path.string() + ": " + what);
}

inline std::string pack_bits(const std::uint8_t* bits, std::size_t n) {
  std::string out((n + 7) / 8, '\0');
  for (std::size_t i = 0; i < n; ++i)
    if (bits[i]) out[i / 8] = char(std::uint8_t(out[i / 8]) | (1u << (i % 8)));
  return out;
}

inline void unpack_bits(const char* src, std::size_t n, std::uint8_t* bits) {
  for (std::size_t i = 0; i < n; ++i) bits[i] = (std::uint8_t(src[i / 8]) >> (i % 8)) & 1u;
}

}  // namespace detail

inline void write_ppm(const fs::path& path, const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.data.size());
  for (float v : img.data) out.push_back(char(std::uint8_t(std::lround(std::clamp(v, 0.f, 1.f) * 255.f))));
  detail::write_all(path, out);
}

inline RgbImage read_ppm(const fs::path& path) {
  const std::string s = detail::read_all(path);
  std::istringstream in(s);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  detail::expect(in && magic == "P6" && maxval == 255 && w > 0 && h > 0, path, "not a P6 image with maxval 255");
  const std::size_t start = std::size_t(in.tellg()) + 1;
  detail::expect(s.size() >= start + w * h * 3, path, "truncated pixel data");
  RgbImage img(w, h);
  for (std::size_t i = 0; i < w * h * 3; ++i) img.data[i] = float(std::uint8_t(s[start + i])) / 255.f;
  return img;
}

inline void write_ssdm(const fs::path& path, const DepthMap& map) {
  std::string out = "SSDM";
  detail::put_u32(out, std::uint32_t(map.width));
  detail::put_u32(out, std::uint32_t(map.height));
  out += std::string("\x01\0\0\0", 4);
  for (float v : map.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  detail::write_all(path, out);
}

inline DepthMap read_ssdm(const fs::path& path) {
  const std::string s = detail::read_all(path);
  detail::expect(s.size() >= 16 && s.compare(0, 4, "SSDM") == 0, path, "bad SSDM header");
  const std::size_t w = detail::get_u32(s, 4), h = detail::get_u32(s, 8);
  detail::expect(s[12] == 1, path, "unsupported SSDM dtype");
  detail::expect(s.size() == 16 + 4 * w * h, path, "SSDM size does not match its dimensions");
  DepthMap map(w, h);
  for (std::size_t i = 0; i < w * h; ++i) map.data[i] = std::bit_cast<float>(detail::get_u32(s, 16 + 4 * i));
  return map;
}

inline void write_ssbm(const fs::path& path, const Mask& mask) {
  std::string out = "SSBM";
  detail::put_u32(out, std::uint32_t(mask.width));
  detail::put_u32(out, std::uint32_t(mask.height));
  for (std::size_t y = 0; y < mask.height; ++y) out += detail::pack_bits(&mask.data[y * mask.width], mask.width);
  detail::write_all(path, out);
}

inline Mask read_ssbm(const fs::path& path) {
  const std::string s = detail::read_all(path);
  detail::expect(s.size() >= 12 && s.compare(0, 4, "SSBM") == 0, path, "bad SSBM header");
  const std::size_t w = detail::get_u32(s, 4), h = detail::get_u32(s, 8), row = (w + 7) / 8;
  detail::expect(s.size() == 12 + row * h, path, "SSBM size does not match its dimensions");
  Mask mask(w, h);
  for (std::size_t y = 0; y < h; ++y) detail::unpack_bits(s.data() + 12 + y * row, w, &mask.data[y * w]);
  return mask;
}

inline void write_ssvx(const fs::path& path, const VoxelGrid& grid) {
  std::string out = "SSVX";
  detail::put_u32(out, std::uint32_t(grid.resolution));
  out += detail::pack_bits(grid.occupancy.data(), grid.occupancy.size());
  detail::write_all(path, out);
}

inline VoxelGrid read_ssvx(const fs::path& path) {
  const std::string s = detail::read_all(path);
  detail::expect(s.size() >= 8 && s.compare(0, 4, "SSVX") == 0, path, "bad SSVX header");
  const std::uint32_t r = detail::get_u32(s, 4);
  detail::expect(r > 0 && r <= 1024, path, "implausible SSVX resolution");
  VoxelGrid grid{int(r)};
  const std::size_t n = grid.occupancy.size();
  detail::expect(s.size() == 8 + (n + 7) / 8, path, "SSVX size does not match its resolution");
  detail::unpack_bits(s.data() + 8, n, grid.occupancy.data());
  return grid;
}

inline void write_ply(const fs::path& path, const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[96];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", double(float(p.x)), double(float(p.y)), double(float(p.z)));
    out += buf;
  }
  detail::write_all(path, out);
}

inline PointCloud read_ply(const fs::path& path) {
  const std::string s = detail::read_all(path);
  std::istringstream in(s);
  std::string line;
  std::size_t n = 0;
  bool header_done = false;
  std::getline(in, line);
  detail::expect(line == "ply", path, "not a PLY file");
  while (std::getline(in, line)) {
    if (line.rfind("format", 0) == 0) detail::expect(line == "format ascii 1.0", path, "only ASCII PLY is supported");
    if (line.rfind("element vertex ", 0) == 0) n = std::stoul(line.substr(15));
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  detail::expect(header_done, path, "missing end_header");
  PointCloud cloud;
  cloud.points.resize(n);
  for (auto& p : cloud.points) {
    float x, y, z;
    detail::expect(bool(in >> x >> y >> z), path, "truncated vertex list");
    p = {x, y, z};
  }
  return cloud;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_meta(const fs::path& path, const Meta& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += k + "=" + v + "\n";
  detail::write_all(path, out);
}

inline Meta read_meta(const fs::path& path) {
  std::istringstream in(detail::read_all(path));
  Meta meta;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    detail::expect(eq != std::string::npos, path, "malformed line: " + line);
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

inline const std::string& meta_get(const Meta& meta, const std::string& key, const fs::path& path) {
  auto it = meta.find(key);
  detail::expect(it != meta.end(), path, "missing key " + key);
  return it->second;
}

}  // namespace ssr::io
