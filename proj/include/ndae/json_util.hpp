#pragma once

#include "ndae/format.hpp"
#include "ndae/numerics.hpp"

#include <json.hpp>

#include <string>

namespace ndae {

/// Renders a vector as a JSON array with 17-significant-digit entries.
inline std::string json_array(const Vector& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += ", ";
    }
    out += g17(v(i));
  }
  out += "]";
  return out;
}

/// Renders a matrix as a flat row-major JSON array.
inline std::string json_matrix(const Matrix& m) {
  std::string out = "[";
  bool first = true;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!first) {
        out += ", ";
      }
      first = false;
      out += g17(m(r, c));
    }
  }
  out += "]";
  return out;
}

inline Vector vector_from_json(const nlohmann::json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = arr.at(static_cast<std::size_t>(i)).get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const nlohmann::json& arr, Eigen::Index rows,
                               Eigen::Index cols) {
  if (static_cast<Eigen::Index>(arr.size()) != rows * cols) {
    throw DimensionMismatch("matrix_from_json: entry count mismatch");
  }
  Matrix m(rows, cols);
  std::size_t idx = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = arr.at(idx++).get<double>();
    }
  }
  return m;
}

}  // namespace ndae
