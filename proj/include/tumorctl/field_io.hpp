#pragma once

// FLD1 snapshot files: magic "FLD1", uint32 dim, uint32 cells per axis,
// then float64 values in row-major order. Everything little-endian.

#include "tumorctl/grid.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tumorctl {

namespace detail {

template <class T>
void put_le(std::vector<char>& buf, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  buf.insert(buf.end(), bytes.begin(), bytes.end());
}

template <class T>
T get_le(const std::vector<char>& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw std::runtime_error("FLD1: truncated file");
  std::array<char, sizeof(T)> bytes;
  std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(pos), sizeof(T), bytes.begin());
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline std::vector<char> encode_field(const Field& f) {
  std::vector<char> buf = {'F', 'L', 'D', '1'};
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(f.grid.dim));
  for (int a = 0; a < f.grid.dim; ++a) detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(f.grid.cells[a]));
  for (Eigen::Index i = 0; i < f.values.size(); ++i) detail::put_le<double>(buf, f.values[i]);
  return buf;
}

/// Decodes a snapshot onto `grid`; the stored shape must match it.
inline Field decode_field(const std::vector<char>& buf, const Grid& grid) {
  if (buf.size() < 4 || std::memcmp(buf.data(), "FLD1", 4) != 0) throw std::runtime_error("FLD1: bad magic");
  std::size_t pos = 4;
  const auto dim = detail::get_le<std::uint32_t>(buf, pos);
  if (static_cast<int>(dim) != grid.dim) throw std::runtime_error("FLD1: dimension does not match grid");
  for (int a = 0; a < grid.dim; ++a) {
    const auto n = detail::get_le<std::uint32_t>(buf, pos);
    if (static_cast<int>(n) != grid.cells[a]) throw std::runtime_error("FLD1: cell count does not match grid");
  }
  Field out(grid);
  for (int i = 0; i < grid.size(); ++i) out.values[i] = detail::get_le<double>(buf, pos);
  if (pos != buf.size()) throw std::runtime_error("FLD1: trailing bytes");
  return out;
}

inline void write_field(const std::string& path, const Field& f) {
  const auto buf = encode_field(f);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline Field read_field(const std::string& path, const Grid& grid) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_field(buf, grid);
}

}  // namespace tumorctl
