#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "tis/error.hpp"

// Little-endian primitive readers/writers shared by the binary file formats.
namespace tis::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, std::string_view what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError("truncated input while reading " + std::string(what));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_le(std::istream& is, std::string_view what) {
  T v{};
  read_bytes(is, &v, sizeof(T), what);
  return v;
}

inline void write_magic(std::ostream& os, std::string_view magic) {
  write_bytes(os, magic.data(), magic.size());
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(is.gcount()) != magic.size() || got != magic)
    throw FormatError("bad magic: expected " + std::string(magic));
}

}  // namespace tis::binio
