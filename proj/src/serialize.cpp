#include "selb/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace selb {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

bool get_f64(std::istream& is, double& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  v = std::bit_cast<double>(bits);
  return true;
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::io, "save_tensors: cannot open " + tmp);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    for (const auto& [name, tensor] : entries) {
      put_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<long>(name.size()));
      const Shape& s = tensor.shape();
      put_u32(os, static_cast<std::uint32_t>(s.size()));
      for (std::size_t d : s) put_u32(os, static_cast<std::uint32_t>(d));
      for (double v : tensor.data()) put_f64(os, v);
    }
    if (!os) fail(ErrorCode::io, "save_tensors: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "save_tensors: rename to " + path + " failed: " + ec.message());
}

std::vector<TensorRecord> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "load_tensors: cannot open " + path);

  char magic[4];
  if (!is.read(magic, 4)) {
    fail(ErrorCode::truncated, "load_tensors: " + path + " is shorter than the header");
  }
  if (magic[0] != 'S' || magic[1] != 'E' || magic[2] != 'L' || magic[3] != 'B') {
    fail(ErrorCode::bad_magic,
         "load_tensors: " + path + ": expected magic \"SELB\", found \"" +
             std::string(magic, 4) + "\"");
  }
  std::uint32_t version = 0;
  if (!get_u32(is, version)) {
    fail(ErrorCode::truncated, "load_tensors: " + path + " truncated in header");
  }
  if (version != kVersion) {
    fail(ErrorCode::bad_value, "load_tensors: unsupported version " + std::to_string(version));
  }

  std::vector<TensorRecord> out;
  for (;;) {
    std::uint32_t name_len = 0;
    if (!get_u32(is, name_len)) break;  // clean end of file
    TensorRecord rec;
    rec.name.resize(name_len);
    if (!is.read(rec.name.data(), name_len)) {
      fail(ErrorCode::truncated, "load_tensors: " + path + " truncated inside a record name");
    }
    std::uint32_t rank = 0;
    if (!get_u32(is, rank)) {
      fail(ErrorCode::truncated, "load_tensors: " + path + " truncated before rank");
    }
    rec.shape.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d = 0;
      if (!get_u32(is, d)) {
        fail(ErrorCode::truncated, "load_tensors: " + path + " truncated inside dims");
      }
      rec.shape[i] = d;
    }
    std::size_t n = shape_size(rec.shape);
    rec.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!get_f64(is, rec.data[i])) {
        fail(ErrorCode::truncated,
             "load_tensors: " + path + ": record \"" + rec.name + "\" expects " +
                 std::to_string(n * 8) + " payload bytes, file ended at element " +
                 std::to_string(i));
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::io, "write_text_file: cannot open " + tmp);
    os.write(content.data(), static_cast<long>(content.size()));
    if (!os) fail(ErrorCode::io, "write_text_file: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "write_text_file: rename to " + path + " failed: " + ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "read_text_file: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace selb
