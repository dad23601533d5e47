#pragma once

#include "ndae/numerics.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace ndae {

inline std::string read_file(const std::string& path, const char* who) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(std::string(who) + ": cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& text,
                       const char* who) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(std::string(who) + ": cannot open " + path);
  }
  out << text;
}

}  // namespace ndae
