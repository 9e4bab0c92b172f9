#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "vrebert/errors.hpp"

// Little-endian primitives shared by the snapshot and feature file formats.
namespace vrebert::binary {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  U bits;
  std::memcpy(&bits, &value, sizeof(U));
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename T>
T read_le(std::istream& in, std::string_view what) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError("truncated payload while reading " + std::string(what));
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(bytes[i]) << (8 * i);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::string_view what) {
  const auto n = read_le<std::uint32_t>(in, what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) {
    throw FormatError("truncated payload while reading " + std::string(what));
  }
  return s;
}

inline void expect_magic(std::istream& in, std::string_view magic,
                         std::string_view what) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(magic.size())) ||
      got != magic) {
    throw FormatError(std::string(what) + ": bad magic, expected \"" +
                      std::string(magic) + "\"");
  }
}

}  // namespace vrebert::binary
