#pragma once

#include <cmath>
#include <numbers>

#include "dem/lmm/sample.hpp"
#include "dem/lmm/theta.hpp"

namespace dem::lmm {

/// Gaussian conditional of b_i given y_i.
template <typename Scalar>
struct PosteriorMoments {
  VectorX<Scalar> b_hat;
  MatrixX<Scalar> C_hat;
};

namespace detail {

// With A = Z L and W = Z D Z^T + I = A A^T + I, all quantities reduce to the
// q x q system M = I + A^T A:
//   log det W   = log det M
//   r^T W^-1 r  = r^T r - u^T M^-1 u,        u = A^T r
//   E[b | y]    = L M^-1 u
//   Cov[b | y]  = tau2 L M^-1 L^T
template <typename Scalar>
struct SampleSolve {
  Eigen::LLT<MatrixX<Scalar>> m_llt;
  VectorX<Scalar> u;
  VectorX<Scalar> m_inv_u;
  Scalar rtr = Scalar(0);

  SampleSolve(const Theta<Scalar>& theta, const Sample<Scalar>& s) {
    if (s.p() != theta.p() || s.q() != theta.q()) {
      throw DimensionError("sample dimensions do not match theta");
    }
    const auto q = theta.q();
    const VectorX<Scalar> ztr = s.Zty() - s.ZtX() * theta.beta;
    rtr = s.yty() - Scalar(2) * theta.beta.dot(s.Xty()) + theta.beta.dot(s.XtX() * theta.beta);
    MatrixX<Scalar> m = MatrixX<Scalar>::Identity(q, q);
    m.noalias() += theta.L.transpose() * s.ZtZ() * theta.L;
    m_llt.compute(m);
    if (m_llt.info() != Eigen::Success) {
      throw DomainError("marginal covariance of a sample is numerically singular");
    }
    u.noalias() = theta.L.transpose() * ztr;
    m_inv_u = m_llt.solve(u);
  }

  Scalar log_det_w() const {
    using std::log;
    return Scalar(2) * m_llt.matrixLLT().diagonal().array().log().sum();
  }

  Scalar quad_form() const { return rtr - u.dot(m_inv_u); }
};

}  // namespace detail

/// Posterior mean and covariance of the random effect of one sample:
/// b_hat = D Z^T W^-1 (y - X beta), C_hat = tau2 (D - D Z^T W^-1 Z D).
template <typename Scalar>
PosteriorMoments<Scalar> posterior_moments(const Theta<Scalar>& theta, const Sample<Scalar>& s) {
  const detail::SampleSolve<Scalar> solve(theta, s);
  PosteriorMoments<Scalar> out;
  out.b_hat.noalias() = theta.L * solve.m_inv_u;
  const MatrixX<Scalar> m_inv_lt = solve.m_llt.solve(MatrixX<Scalar>(theta.L.transpose()));
  out.C_hat.noalias() = theta.tau2 * theta.L * m_inv_lt;
  out.C_hat = Scalar(0.5) * (out.C_hat + out.C_hat.transpose()).eval();
  return out;
}

/// Marginal log-density of y_i ~ N(X_i beta, tau2 (Z_i D Z_i^T + I)).
template <typename Scalar>
Scalar sample_loglik(const Theta<Scalar>& theta, const Sample<Scalar>& s) {
  using std::log;
  const detail::SampleSolve<Scalar> solve(theta, s);
  const Scalar n = static_cast<Scalar>(s.n());
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  return Scalar(-0.5) * (n * log(two_pi * theta.tau2) + solve.log_det_w() +
                         solve.quad_form() / theta.tau2);
}

template <typename Scalar>
Scalar local_loglik(const Theta<Scalar>& theta, const SubsetData<Scalar>& subset) {
  validate(theta);
  Scalar total = Scalar(0);
  for (const auto& s : subset.samples) total += sample_loglik(theta, s);
  using std::isfinite;
  if (!isfinite(total)) throw DomainError("local_loglik: non-finite log-likelihood");
  return total;
}

}  // namespace dem::lmm
