#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace qcal {

// Shortest representation that round-trips through a double.
inline std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace qcal
