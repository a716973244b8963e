#include "rankedcl/numkernel.hpp"

#include <charconv>

namespace rankedcl {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw ValidationError("matrix json: expected object with rows, cols, data");
  }
  const auto& rows_j = j.at("rows");
  const auto& cols_j = j.at("cols");
  const auto& data = j.at("data");
  if (!rows_j.is_number_unsigned() && !(rows_j.is_number_integer() && rows_j.get<long long>() >= 0)) {
    throw ValidationError("matrix json: rows must be a non-negative integer");
  }
  if (!cols_j.is_number_unsigned() && !(cols_j.is_number_integer() && cols_j.get<long long>() >= 0)) {
    throw ValidationError("matrix json: cols must be a non-negative integer");
  }
  const auto rows = rows_j.get<Eigen::Index>();
  const auto cols = cols_j.get<Eigen::Index>();
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("matrix json: data length must equal rows*cols");
  }
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < rows * cols; ++k) {
    const auto& v = data[static_cast<std::size_t>(k)];
    if (!v.is_number()) throw ValidationError("matrix json: data[" + std::to_string(k) + "] is not a number");
    m(k / cols, k % cols) = v.get<double>();
  }
  return m;
}

}  // namespace rankedcl
