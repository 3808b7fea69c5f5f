#pragma once

#include <json.hpp>

#include "dem/lmm/theta.hpp"

namespace dem::lmm {

/// {"beta": [...], "L": [[...], ...], "tau2": x, "D": [[...]], "Sigma": [[...]]}.
/// D and Sigma are informational; reading uses beta, L and tau2.
nlohmann::json theta_to_json(const Thetad& theta);
Thetad theta_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace dem::lmm
