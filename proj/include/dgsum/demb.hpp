#pragma once

// DEMB binary matrix record: "DEMB", u32 version (1), u32 n_rows, u32 dim,
// then n_rows*dim little-endian IEEE-754 float32 values in row-major order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dgsum/errors.hpp"

namespace dgsum::demb {

inline constexpr std::array<char, 4> kMagic{'D', 'E', 'M', 'B'};
inline constexpr std::uint32_t kVersion = 1;

struct Header {
  std::uint32_t n_rows = 0;
  std::uint32_t dim = 0;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                     static_cast<char>((v >> 16) & 0xffu), static_cast<char>((v >> 24) & 0xffu)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError(std::string("DEMB: truncated ") + what);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

}  // namespace detail

inline void write_header(std::ostream& os, Header h) {
  os.write(kMagic.data(), kMagic.size());
  detail::put_u32(os, kVersion);
  detail::put_u32(os, h.n_rows);
  detail::put_u32(os, h.dim);
}

inline Header read_header(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size())) throw ParseError("DEMB: truncated magic");
  if (magic != kMagic) throw ParseError("DEMB: bad magic bytes");
  const auto version = detail::get_u32(is, "version");
  if (version != kVersion) throw ParseError("DEMB: unsupported version " + std::to_string(version));
  Header h;
  h.n_rows = detail::get_u32(is, "n_rows");
  h.dim = detail::get_u32(is, "dim");
  return h;
}

inline void write_values(std::ostream& os, const std::vector<float>& values) {
  for (float f : values) detail::put_u32(os, std::bit_cast<std::uint32_t>(f));
}

inline std::vector<float> read_values(std::istream& is, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(detail::get_u32(is, "values"));
  return out;
}

/// Writes a full record (header + row-major values).
inline void write_record(std::ostream& os, std::uint32_t n_rows, std::uint32_t dim,
                         const std::vector<float>& values) {
  if (values.size() != std::size_t{n_rows} * dim) throw ContractError("DEMB: value count != n_rows*dim");
  write_header(os, {n_rows, dim});
  write_values(os, values);
}

}  // namespace dgsum::demb
