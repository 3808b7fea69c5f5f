#pragma once

#include <cmath>

#include "dem/lmm/posterior.hpp"

namespace dem::lmm {

/// KL(N(mean_a, cov_a) || N(mean_e, cov_e)).
template <typename Scalar>
Scalar gaussian_kl(const VectorX<Scalar>& mean_a, const MatrixX<Scalar>& cov_a,
                   const VectorX<Scalar>& mean_e, const MatrixX<Scalar>& cov_e) {
  Eigen::LLT<MatrixX<Scalar>> la(cov_a), le(cov_e);
  if (la.info() != Eigen::Success || le.info() != Eigen::Success) {
    throw DomainError("gaussian_kl: singular posterior covariance");
  }
  const auto q = static_cast<Scalar>(mean_a.size());
  const VectorX<Scalar> delta = mean_e - mean_a;
  const Scalar trace_term = le.solve(cov_a).trace();
  const Scalar maha = delta.dot(le.solve(delta));
  const Scalar logdet_a = Scalar(2) * la.matrixLLT().diagonal().array().log().sum();
  const Scalar logdet_e = Scalar(2) * le.matrixLLT().diagonal().array().log().sum();
  return Scalar(0.5) * (trace_term + maha - q + logdet_e - logdet_a);
}

/// Sum over samples of KL(posterior at anchor || posterior at eval).
template <typename Scalar>
Scalar local_kl(const Theta<Scalar>& eval, const Theta<Scalar>& anchor,
                const SubsetData<Scalar>& subset) {
  validate(eval);
  validate(anchor);
  if (eval == anchor) return Scalar(0);
  Scalar total = Scalar(0);
  for (const auto& s : subset.samples) {
    const auto pa = posterior_moments(anchor, s);
    const auto pe = posterior_moments(eval, s);
    total += gaussian_kl(pa.b_hat, pa.C_hat, pe.b_hat, pe.C_hat);
  }
  return total;
}

}  // namespace dem::lmm
