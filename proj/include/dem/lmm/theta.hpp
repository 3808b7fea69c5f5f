#pragma once

#include <cmath>
#include <string>

#include "dem/core/error.hpp"
#include "dem/core/types.hpp"

namespace dem::lmm {

/// Parameter point of the linear mixed-effects model
///   y_i = X_i beta + Z_i b_i + e_i,  b_i ~ N(0, tau2 D),  e_i ~ N(0, tau2 I).
/// D is carried through its lower-triangular Cholesky factor L.
template <typename Scalar>
struct Theta {
  VectorX<Scalar> beta;
  MatrixX<Scalar> L;
  Scalar tau2 = Scalar(1);

  Eigen::Index p() const { return beta.size(); }
  Eigen::Index q() const { return L.rows(); }

  MatrixX<Scalar> D() const { return L * L.transpose(); }
  /// Random-effects covariance tau2 * D.
  MatrixX<Scalar> Sigma() const { return tau2 * D(); }

  /// beta = 0, D = I, tau2 = 10.
  static Theta start(Eigen::Index p, Eigen::Index q) {
    return {VectorX<Scalar>::Zero(p), MatrixX<Scalar>::Identity(q, q), Scalar(10)};
  }

  static Theta from_D(VectorX<Scalar> beta, const MatrixX<Scalar>& D, Scalar tau2) {
    Eigen::LLT<MatrixX<Scalar>> llt(D);
    if (llt.info() != Eigen::Success) throw DomainError("Theta::from_D: D is not positive definite");
    return {std::move(beta), llt.matrixL(), tau2};
  }

  template <typename Other>
  Theta<Other> cast() const {
    return {beta.template cast<Other>(), L.template cast<Other>(), static_cast<Other>(tau2)};
  }

  bool operator==(const Theta& other) const = default;
};

using Thetad = Theta<double>;

/// Throws DomainError unless L is lower triangular with positive diagonal
/// and tau2 is positive, all finite.
template <typename Scalar>
void validate(const Theta<Scalar>& theta) {
  using std::isfinite;
  if (theta.L.rows() != theta.L.cols()) throw DimensionError("Theta: L must be square");
  if (!theta.beta.allFinite() || !theta.L.allFinite() || !isfinite(theta.tau2)) {
    throw DomainError("Theta: non-finite entry");
  }
  if (!(theta.tau2 > Scalar(0))) throw DomainError("Theta: tau2 must be positive");
  for (Eigen::Index j = 0; j < theta.L.cols(); ++j) {
    if (!(theta.L(j, j) > Scalar(0))) throw DomainError("Theta: L diagonal must be positive");
    for (Eigen::Index i = 0; i < j; ++i) {
      if (theta.L(i, j) != Scalar(0)) throw DomainError("Theta: L must be lower triangular");
    }
  }
}

template <typename Scalar>
bool is_finite(const Theta<Scalar>& theta) {
  using std::isfinite;
  return theta.beta.allFinite() && theta.L.allFinite() && isfinite(theta.tau2);
}

/// Number of free parameters p + q(q+1)/2 + 1.
inline Eigen::Index num_free_params(Eigen::Index p, Eigen::Index q) {
  return p + q * (q + 1) / 2 + 1;
}

/// Unconstrained coordinates (beta, vech(L) with log-diagonal, log tau2).
/// vech runs down the columns of the lower triangle.
template <typename Scalar>
VectorX<Scalar> to_unconstrained(const Theta<Scalar>& theta) {
  using std::log;
  const auto p = theta.p();
  const auto q = theta.q();
  VectorX<Scalar> phi(num_free_params(p, q));
  phi.head(p) = theta.beta;
  Eigen::Index idx = p;
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = j; i < q; ++i) {
      phi(idx++) = (i == j) ? log(theta.L(i, j)) : theta.L(i, j);
    }
  }
  phi(idx) = log(theta.tau2);
  return phi;
}

template <typename Scalar>
Theta<Scalar> from_unconstrained(const VectorX<Scalar>& phi, Eigen::Index p, Eigen::Index q) {
  using std::exp;
  if (phi.size() != num_free_params(p, q)) {
    throw DimensionError("from_unconstrained: expected " + std::to_string(num_free_params(p, q)) +
                         " coordinates, got " + std::to_string(phi.size()));
  }
  Theta<Scalar> theta;
  theta.beta = phi.head(p);
  theta.L = MatrixX<Scalar>::Zero(q, q);
  Eigen::Index idx = p;
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = j; i < q; ++i) {
      theta.L(i, j) = (i == j) ? exp(phi(idx)) : phi(idx);
      ++idx;
    }
  }
  theta.tau2 = exp(phi(idx));
  return theta;
}

}  // namespace dem::lmm
