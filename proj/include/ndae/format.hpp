#pragma once

#include <cstdio>
#include <string>

namespace ndae {

/// Shortest-round-trip style decimal rendering with 17 significant digits;
/// used everywhere a floating-point value is written to disk so that repeated
/// runs produce byte-identical artifacts.
inline std::string g17(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  std::string text = buf;
  if (text == "-0") {
    text = "-0.0";
  }
  return text;
}

}  // namespace ndae
