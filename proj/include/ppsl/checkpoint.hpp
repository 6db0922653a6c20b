#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ppsl/nn.hpp"

namespace ppsl {

/// Binary checkpoint layout (all integers and floats little-endian):
///
///   magic        8 bytes, NUL padded
///   version      u32
///   n_meta       u32, then n_meta x { u16 key_len, key bytes, f64 value }
///   n_blocks     u32, then n_blocks x { u16 name_len, name bytes, u32 rows, u32 cols }
///   payload      float32 values of every block in order, column-major
///
/// Loading checks magic, version and every block shape.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using Metadata = std::map<std::string, double>;

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u16(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint64_t get_le(std::istream& is, int bytes) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), bytes);
  if (!is) throw Error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::string get_string(std::istream& is) {
  auto n = static_cast<std::size_t>(get_le(is, 2));
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw Error("checkpoint truncated");
  return s;
}

inline std::string pad_magic(const std::string& magic) {
  std::string m = magic.substr(0, 8);
  m.resize(8, '\0');
  return m;
}

}  // namespace detail

template <ParameterSet P>
void save_checkpoint(const std::string& path, const std::string& magic, const Metadata& meta, const P& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint: " + path);
  os.write(detail::pad_magic(magic).data(), 8);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    detail::put_string(os, k);
    detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  std::uint32_t n_blocks = 0;
  params.for_each_block([&](std::string_view, const Matrix&) { ++n_blocks; });
  detail::put_u32(os, n_blocks);
  params.for_each_block([&](std::string_view name, const Matrix& m) {
    detail::put_string(os, std::string(name));
    detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  });
  params.for_each_block([&](std::string_view, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
  });
  if (!os) throw Error("failed writing checkpoint: " + path);
}

/// Reads only the header metadata, so callers can size the parameter set.
inline Metadata read_checkpoint_metadata(const std::string& path, const std::string& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  std::string m(8, '\0');
  is.read(m.data(), 8);
  if (!is || m != detail::pad_magic(magic)) throw Error("not a '" + magic + "' checkpoint: " + path);
  auto version = static_cast<std::uint32_t>(detail::get_le(is, 4));
  if (version != kCheckpointVersion)
    throw Error("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + "): " + path);
  auto n_meta = detail::get_le(is, 4);
  Metadata meta;
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    auto key = detail::get_string(is);
    meta[key] = std::bit_cast<double>(detail::get_le(is, 8));
  }
  return meta;
}

/// Fills `params`, which must already have the stored shapes.
template <ParameterSet P>
Metadata load_checkpoint(const std::string& path, const std::string& magic, P& params) {
  auto meta = read_checkpoint_metadata(path, magic);
  std::ifstream is(path, std::ios::binary);
  is.seekg(8 + 4);
  auto n_meta = detail::get_le(is, 4);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    detail::get_string(is);
    detail::get_le(is, 8);
  }
  auto n_blocks = detail::get_le(is, 4);
  std::uint64_t expected = 0;
  params.for_each_block([&](std::string_view, const Matrix&) { ++expected; });
  if (n_blocks != expected) throw Error("checkpoint block count mismatch: " + path);
  params.for_each_block([&](std::string_view name, const Matrix& m) {
    auto stored = detail::get_string(is);
    auto rows = detail::get_le(is, 4);
    auto cols = detail::get_le(is, 4);
    if (stored != name || rows != static_cast<std::uint64_t>(m.rows()) ||
        cols != static_cast<std::uint64_t>(m.cols()))
      throw Error("checkpoint block '" + stored + "' does not match expected '" + std::string(name) + "': " + path);
  });
  params.for_each_block([&](std::string_view, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(is, 4))));
  });
  return meta;
}

/// Rounds every parameter through float32, matching what a checkpoint
/// round-trip stores.
template <ParameterSet P>
void round_to_float(P& params) {
  params.for_each_block([](std::string_view, Matrix& m) {
    m = m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
  });
}

}  // namespace ppsl
