#include "dem/lmm/json.hpp"

namespace dem::lmm {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw FormatError("ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

nlohmann::json theta_to_json(const Thetad& theta) {
  return {
      {"beta", std::vector<double>(theta.beta.data(), theta.beta.data() + theta.beta.size())},
      {"L", matrix_to_json(theta.L)},
      {"tau2", theta.tau2},
      {"D", matrix_to_json(theta.D())},
      {"Sigma", matrix_to_json(theta.Sigma())},
  };
}

Thetad theta_from_json(const nlohmann::json& j) {
  try {
    Thetad theta;
    const auto beta = j.at("beta").get<std::vector<double>>();
    theta.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    theta.L = matrix_from_json(j.at("L"));
    theta.tau2 = j.at("tau2").get<double>();
    validate(theta);
    return theta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("theta: ") + e.what());
  }
}

}  // namespace dem::lmm
