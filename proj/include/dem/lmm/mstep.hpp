#pragma once

#include <cmath>

#include "dem/lmm/estep.hpp"

namespace dem::lmm {

/// Order of the conditional maximization steps.
enum class CmOrder {
  /// CM-1: beta; CM-2: (D, tau2) jointly given the new beta. Reaches the
  /// exact maximizer of the reconstructed Q.
  kBetaThenVariance,
  /// ECM fallback: beta, then tau2 given the current D, then D given tau2.
  kSequential,
};

/// Conditional maximization of Q(. | anchors) from aggregated statistics.
template <typename Scalar>
Theta<Scalar> cm_steps(const LmmStats<Scalar>& st, const Theta<Scalar>& current,
                       CmOrder order = CmOrder::kBetaThenVariance) {
  using std::isfinite;
  if (st.m < Scalar(1) || st.n < Scalar(1)) throw ProtocolError("cm_steps: empty aggregate");
  if (st.p() != current.p() || st.q() != current.q()) {
    throw DimensionError("cm_steps: statistics and theta dimensions disagree");
  }
  const auto q = current.q();

  // CM-1
  Eigen::LLT<MatrixX<Scalar>> xx(st.sxx);
  if (xx.info() != Eigen::Success || !(xx.rcond() > Scalar(1e-13))) {
    throw RankDeficiencyError("cm_steps: fixed-effects design X^T X is singular");
  }
  Theta<Scalar> next;
  next.beta = xx.solve(st.sxy - st.sxzb);

  // CM-2
  const Scalar rss = st.expected_rss(next.beta);
  if (order == CmOrder::kBetaThenVariance) {
    next.tau2 = rss / st.n;
  } else {
    const auto tri = current.L.template triangularView<Eigen::Lower>();
    const MatrixX<Scalar> g = tri.solve(st.sbb);
    const Scalar tr_dinv_sbb = tri.solve(MatrixX<Scalar>(g.transpose())).trace();
    next.tau2 = (rss + tr_dinv_sbb) / (st.n + st.m * static_cast<Scalar>(q));
  }
  if (!isfinite(next.tau2) || !(next.tau2 > Scalar(0))) {
    throw DomainError("cm_steps: non-positive error variance");
  }
  MatrixX<Scalar> d = st.sbb / (st.m * next.tau2);
  d = Scalar(0.5) * (d + d.transpose()).eval();
  Eigen::LLT<MatrixX<Scalar>> dl(d);
  if (dl.info() != Eigen::Success) throw DomainError("cm_steps: updated D is not positive definite");
  next.L = dl.matrixL();
  return next;
}

}  // namespace dem::lmm
