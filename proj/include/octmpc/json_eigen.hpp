#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <stdexcept>

namespace octmpc {

// Row-major nested arrays; a vector is a flat array.

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

/// Accepts [[...], ...]; a scalar is read as a 1x1 matrix.
inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index expected_cols = -1) {
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw std::invalid_argument("expected a matrix (array of rows)");
  if (j.empty()) return Eigen::MatrixXd(0, expected_cols < 0 ? 0 : expected_cols);
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) throw std::invalid_argument("expected a matrix (array of rows)");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument("matrix rows have inconsistent lengths");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (j.is_number()) return Eigen::VectorXd::Constant(1, j.get<double>());
  if (!j.is_array()) throw std::invalid_argument("expected a vector (flat array)");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace octmpc
