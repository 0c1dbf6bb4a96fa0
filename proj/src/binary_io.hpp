#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "priorloom/errors.hpp"

namespace priorloom::detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw ParseError(std::string("truncated binary file while reading ") + what);
  return to_little(v);
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw ParseError(std::string("bad magic, expected ") + magic);
}

}  // namespace priorloom::detail
