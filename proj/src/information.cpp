#include "dem/lmm/information.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace dem::lmm {

namespace {

using Ext = long double;
using VecE = VectorX<Ext>;
using MatE = MatrixX<Ext>;

struct Eig {
  double min = 0.0;
  double max = 0.0;
};

// Eigenvalues of B^-1 A for symmetric A and SPD B.
Eig generalized_eig(const Matrix& A, const Matrix& B, const char* what) {
  Eigen::LLT<Matrix> check(B);
  if (check.info() != Eigen::Success) {
    throw DomainError(std::string("speed_matrices: ") + what + " is not positive definite");
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()),
                                                       0.5 * (B + B.transpose()),
                                                       Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw DomainError(std::string("speed_matrices: eigen decomposition failed for ") + what);
  }
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

Eig singular(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return {svd.singularValues().minCoeff(), svd.singularValues().maxCoeff()};
}

}  // namespace

InformationMatrices information_matrices(const Thetad& theta_hat,
                                         std::span<const SubsetDatad> subsets,
                                         std::span<const std::size_t> in_A) {
  validate(theta_hat);
  if (subsets.empty()) throw DimensionError("information_matrices: no subsets");
  std::vector<bool> member(subsets.size(), false);
  for (auto k : in_A) {
    if (k >= subsets.size()) throw DimensionError("information_matrices: split index out of range");
    member[k] = true;
  }

  const auto p = theta_hat.p();
  const auto q = theta_hat.q();
  const auto d = num_free_params(p, q);
  const Theta<Ext> anchor = theta_hat.cast<Ext>();
  const VecE phi = to_unconstrained(anchor);

  InformationMatrices out;
  out.obs_A = Matrix::Zero(d, d);
  out.com_A = Matrix::Zero(d, d);
  out.obs_Ac = Matrix::Zero(d, d);
  out.com_Ac = Matrix::Zero(d, d);
  VecE grad = VecE::Zero(d);

  for (std::size_t k = 0; k < subsets.size(); ++k) {
    const SubsetData<Ext> data = subsets[k].cast<Ext>();
    auto loglik = [&](const VecE& x) { return local_loglik(from_unconstrained(x, p, q), data); };
    const LmmStats<Ext> stats = local_estep(anchor, data).payload;
    auto qfun = [&](const VecE& x) {
      return expected_complete_loglik(stats, from_unconstrained(x, p, q));
    };
    const MatE h_obs = fd_hessian<Ext>(loglik, phi);
    const MatE h_com = fd_hessian<Ext>(qfun, phi);
    grad += fd_gradient<Ext>(loglik, phi);
    if (member[k]) {
      out.obs_A -= h_obs.cast<double>();
      out.com_A -= h_com.cast<double>();
    } else {
      out.obs_Ac -= h_obs.cast<double>();
      out.com_Ac -= h_com.cast<double>();
    }
  }

  auto sym = [](Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); };
  sym(out.obs_A);
  sym(out.com_A);
  sym(out.obs_Ac);
  sym(out.com_Ac);
  out.obs = out.obs_A + out.obs_Ac;
  out.com = out.com_A + out.com_Ac;

  out.gradient_norm = static_cast<double>(grad.norm());

  if (out.gradient_norm > 1e-4) {
    out.warnings.push_back("gradient norm " + std::to_string(out.gradient_norm) +
                           " exceeds 1e-4; theta_hat is not a stationary point");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.com, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    out.warnings.push_back("complete-data information is not positive definite; not at a maximizer");
  }
  return out;
}

SpeedMatrices speed_matrices(const InformationMatrices& info, Spectrum spectrum,
                             double identity_tol, double bound_tol) {
  const auto d = info.obs.rows();
  Eigen::LLT<Matrix> com(info.com);
  Eigen::LLT<Matrix> com_a(info.com_A);
  if (com_a.info() != Eigen::Success) {
    throw DomainError("speed_matrices: complete-data information of the split is singular");
  }
  if (com.info() != Eigen::Success) {
    throw DomainError("speed_matrices: complete-data information is singular");
  }

  SpeedMatrices out;
  out.S_EM = com.solve(info.obs);
  out.S_DEM = com_a.solve(info.obs_A);
  out.C = com_a.solve(info.com_Ac);
  out.O = com.solve(info.obs_Ac);

  const Matrix I = Matrix::Identity(d, d);
  const Matrix recon = (I + out.C).partialPivLu().solve(out.S_DEM) + out.O;
  const double norm = out.S_EM.norm();
  out.identity_residual = norm > 0.0 ? (out.S_EM - recon).norm() / norm : (out.S_EM - recon).norm();
  out.identity_ok = out.identity_residual < identity_tol;

  const bool sv = spectrum == Spectrum::kSingularValues;
  const auto em = sv ? singular(out.S_EM) : generalized_eig(info.obs, info.com, "i_com");
  const auto dem = sv ? singular(out.S_DEM) : generalized_eig(info.obs_A, info.com_A, "i_com_A");
  const auto o = sv ? singular(out.O) : generalized_eig(info.obs_Ac, info.com, "i_com");
  const auto c = sv ? singular(out.C) : generalized_eig(info.com_Ac, info.com_A, "i_com_A");
  out.lambda_min_em = em.min;
  out.lambda_min_dem = dem.min;
  out.lambda_min_o = o.min;
  out.lambda_min_c = c.min;
  out.lambda_max_c = c.max;
  out.lower_bound = dem.min / (1.0 + c.max) + o.min;
  out.upper_bound = dem.min / (1.0 + c.min) + o.min;
  out.lower_ok = out.lower_bound <= em.min + bound_tol;
  out.upper_ok = em.min <= out.upper_bound + bound_tol;
  out.dem_not_slower_ok = em.min - o.min <= dem.min + bound_tol;
  out.eigen_bounds_ok = out.lower_ok && out.upper_ok;
  return out;
}

}  // namespace dem::lmm
