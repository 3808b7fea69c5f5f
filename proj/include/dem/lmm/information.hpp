#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dem/lmm/estep.hpp"

namespace dem::lmm {

/// Per-coordinate difference step h_j = 1e-5 (1 + |x_j|).
template <typename Scalar>
VectorX<Scalar> fd_steps(const VectorX<Scalar>& x) {
  return (Scalar(1e-5) * (Scalar(1) + x.array().abs())).matrix();
}

/// Central-difference gradient.
template <typename Scalar, typename F>
VectorX<Scalar> fd_gradient(F&& f, const VectorX<Scalar>& x) {
  const VectorX<Scalar> h = fd_steps(x);
  VectorX<Scalar> g(x.size());
  VectorX<Scalar> xp = x, xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp(j) = x(j) + h(j);
    xm(j) = x(j) - h(j);
    g(j) = (f(xp) - f(xm)) / (Scalar(2) * h(j));
    xp(j) = xm(j) = x(j);
  }
  return g;
}

/// Central-difference Hessian, not symmetrized.
template <typename Scalar, typename F>
MatrixX<Scalar> fd_hessian(F&& f, const VectorX<Scalar>& x) {
  const auto d = x.size();
  const VectorX<Scalar> h = fd_steps(x);
  const Scalar f0 = f(x);
  MatrixX<Scalar> H(d, d);
  VectorX<Scalar> z = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    z(i) = x(i) + h(i);
    const Scalar fp = f(z);
    z(i) = x(i) - h(i);
    const Scalar fm = f(z);
    z(i) = x(i);
    H(i, i) = (fp - Scalar(2) * f0 + fm) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      auto at = [&](Scalar si, Scalar sj) {
        z(i) = x(i) + si * h(i);
        z(j) = x(j) + sj * h(j);
        const Scalar v = f(z);
        z(i) = x(i);
        z(j) = x(j);
        return v;
      };
      const Scalar v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (Scalar(4) * h(i) * h(j));
      H(i, j) = v;
      H(j, i) = v;
    }
  }
  return H;
}

/// Observed- and complete-data information in the unconstrained
/// coordinates (beta, vech(L) with log-diagonal, log tau2), split into the
/// contribution of the subsets in A and of the rest.
struct InformationMatrices {
  Matrix obs, com;
  Matrix obs_A, com_A;
  Matrix obs_Ac, com_Ac;
  /// Euclidean norm of the log-likelihood gradient at theta_hat.
  double gradient_norm = 0.0;
  std::vector<std::string> warnings;
};

/// `in_A` lists the subset indices forming A. Differences are taken in
/// extended precision; the complete-data blocks differentiate
/// Q_k(. | theta_hat) with every anchor at theta_hat.
InformationMatrices information_matrices(const Thetad& theta_hat,
                                         std::span<const SubsetDatad> subsets,
                                         std::span<const std::size_t> in_A);

/// How lambda_min / lambda_max of the speed matrices are measured.
enum class Spectrum {
  kSingularValues,
  /// Eigenvalues of the generalized symmetric problems (A v = lambda B v).
  kEigenvalues,
};

struct SpeedMatrices {
  Matrix S_EM, S_DEM, C, O;
  /// ||S_EM - (I + C)^-1 S_DEM - O|| / ||S_EM||.
  double identity_residual = 0.0;
  double lambda_min_em = 0.0;
  double lambda_min_dem = 0.0;
  double lambda_min_o = 0.0;
  double lambda_min_c = 0.0;
  double lambda_max_c = 0.0;
  /// lambda_min(S_DEM) / (1 + lambda_max(C)) + lambda_min(O).
  double lower_bound = 0.0;
  /// lambda_min(S_DEM) / (1 + lambda_min(C)) + lambda_min(O).
  double upper_bound = 0.0;
  bool identity_ok = false;
  bool lower_ok = false;
  bool upper_ok = false;
  /// lambda_min(S_EM) - lambda_min(O) <= lambda_min(S_DEM).
  bool dem_not_slower_ok = false;
  bool eigen_bounds_ok = false;
};

/// Speed matrices S_EM = i_com^-1 i_obs, S_DEM = i_com_A^-1 i_obs_A,
/// C = i_com_A^-1 i_com_Ac, O = i_com^-1 i_obs_Ac, with the decomposition
/// S_EM = (I + C)^-1 S_DEM + O and the eigenvalue sandwich checked.
SpeedMatrices speed_matrices(const InformationMatrices& info,
                             Spectrum spectrum = Spectrum::kSingularValues,
                             double identity_tol = 1e-6, double bound_tol = 1e-4);

}  // namespace dem::lmm
