#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <string>

namespace alnid {

/// Shortest decimal string that round-trips the value (e.g. 2.5 -> "2.5",
/// 58329.0 -> "58329").
inline std::string to_string_shortest(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

/// Fixed-point formatting with the given number of decimals.
inline std::string to_string_fixed(double v, int decimals) {
  std::array<char, 64> buf;
  const int n = std::snprintf(buf.data(), buf.size(), "%.*f", decimals, v);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

}  // namespace alnid
