#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ssr/autodiff/parameters.hpp"
#include "ssr/errors.hpp"

namespace ssr::ad {

/// Binary parameter container:
///   "SSCK" | u32 version | u32 header bytes | header (key=value lines)
///   | u32 record count | records
/// record: u16 name length | UTF-8 name | u8 rank | u32 extent * rank | f32 data
/// All integers and floats little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Record {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };

  std::map<std::string, std::string> header;
  std::vector<Record> records;

  const Record* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(char(v)); }
inline void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
  std::uint16_t u16() {
    const char* p = take(2);
    return std::uint16_t(std::uint8_t(p[0]) | (std::uint8_t(p[1]) << 8));
  }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out = "SSCK";
  detail::put_u32(out, Checkpoint::kVersion);
  std::string header;
  for (const auto& [k, v] : ck.header) header += k + "=" + v + "\n";
  detail::put_u32(out, std::uint32_t(header.size()));
  out += header;
  detail::put_u32(out, std::uint32_t(ck.records.size()));
  for (const auto& r : ck.records) {
    if (r.name.size() > 0xFFFF) throw FormatError("record name too long: " + r.name);
    detail::put_u16(out, std::uint16_t(r.name.size()));
    out += r.name;
    detail::put_u8(out, std::uint8_t(r.shape.size()));
    for (auto e : r.shape) detail::put_u32(out, std::uint32_t(e));
    for (float v : r.data) detail::put_f32(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::Reader in(bytes);
  if (in.str(4) != "SSCK") throw FormatError("not a checkpoint (bad magic)");
  const auto version = in.u32();
  if (version != Checkpoint::kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::string header = in.str(in.u32());
  std::size_t start = 0;
  while (start < header.size()) {
    auto end = header.find('\n', start);
    if (end == std::string::npos) end = header.size();
    const std::string line = header.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header line: " + line);
    ck.header[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  const auto count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Record r;
    r.name = in.str(in.u16());
    const auto rank = in.u8();
    for (std::uint8_t d = 0; d < rank; ++d) r.shape.push_back(in.u32());
    r.data.resize(numel_of(r.shape));
    for (auto& v : r.data) v = in.f32();
    ck.records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint records");
  return ck;
}

/// Write-temp-then-rename so a reader never sees a partial file.
inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = encode_checkpoint(ck);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename Real>
void append_registry(Checkpoint& ck, const ParameterRegistry<Real>& registry) {
  for (const auto& e : registry.parameters())
    ck.records.push_back({e.name, e.tensor.shape(),
                          std::vector<float>(e.tensor.data().begin(), e.tensor.data().end())});
  for (const auto& b : registry.buffers()) {
    const Shape shape{b.stats->mean.size()};
    ck.records.push_back({b.name + ".running_mean", shape,
                          std::vector<float>(b.stats->mean.begin(), b.stats->mean.end())});
    ck.records.push_back({b.name + ".running_var", shape,
                          std::vector<float>(b.stats->var.begin(), b.stats->var.end())});
  }
}

/// Loads every registry entry whose name is present; missing names are an
/// error unless `allow_missing`.
template <typename Real>
void load_registry(const Checkpoint& ck, ParameterRegistry<Real>& registry, bool allow_missing = false) {
  auto fill = [&](const std::string& name, const Shape& shape, std::span<Real> dst) {
    const auto* r = ck.find(name);
    if (!r) {
      if (allow_missing) return;
      throw FormatError("checkpoint lacks record " + name);
    }
    if (r->shape != shape)
      throw FormatError("record " + name + " has shape " + to_string(r->shape) + ", model expects " +
                        to_string(shape));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = Real(r->data[i]);
  };
  for (const auto& e : registry.parameters()) {
    Tensor<Real> t = e.tensor;
    fill(e.name, t.shape(), t.data());
  }
  for (const auto& b : registry.buffers()) {
    const Shape shape{b.stats->mean.size()};
    fill(b.name + ".running_mean", shape, b.stats->mean);
    fill(b.name + ".running_var", shape, b.stats->var);
  }
}

}  // namespace ssr::ad
