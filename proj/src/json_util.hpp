#pragma once

// JSON helpers shared by the config and design-artifact readers.

#include <string>
#include <string_view>

#include <json.hpp>

#include "layersynth/errors.hpp"
#include "layersynth/mat_core.hpp"

namespace layersynth::detail {

using json = nlohmann::json;

inline Mat parse_matrix(const json& j, const std::string& field) {
  if (!j.is_array()) throw InputError("schema: " + field + " must be an array of arrays");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) throw InputError("schema: " + field + " must not be empty");
  Eigen::Index cols = -1;
  for (const auto& row : j) {
    if (!row.is_array()) throw InputError("schema: " + field + " must be an array of arrays");
    if (cols < 0) cols = static_cast<Eigen::Index>(row.size());
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw InputError("schema: " + field + " is ragged (rows of unequal length)");
    }
  }
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = j[r][c];
      if (!v.is_number()) throw InputError("schema: " + field + " has a non-numeric entry");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

inline Vec parse_vector(const json& j, const std::string& field) {
  if (!j.is_array()) throw InputError("schema: " + field + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError("schema: " + field + " has a non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline std::string position(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace layersynth::detail
