#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dem/core/suff_stats.hpp"
#include "dem/lmm/posterior.hpp"

namespace dem::lmm {

/// Additive E-step payload. Everything Q(theta' | anchors) needs, including
/// the pieces that make the expected residual sum a quadratic in beta':
///   E||y - X beta' - Z b||^2 summed =
///     syy - 2 beta'^T sxy + beta'^T sxx beta' - 2 syzb + 2 beta'^T sxzb + szzbb.
template <typename Scalar>
struct LmmStats {
  MatrixX<Scalar> sxx;   // sum X^T X
  VectorX<Scalar> sxy;   // sum X^T y
  VectorX<Scalar> sxzb;  // sum X^T Z b_hat
  MatrixX<Scalar> sbb;   // sum E[b b^T | y]
  Scalar syy = 0;        // sum y^T y
  Scalar syzb = 0;       // sum y^T Z b_hat
  Scalar szzbb = 0;      // sum tr(Z^T Z E[b b^T | y])
  Scalar m = 0;          // samples
  Scalar n = 0;          // observations

  static LmmStats zero(Eigen::Index p, Eigen::Index q) {
    LmmStats s;
    s.sxx = MatrixX<Scalar>::Zero(p, p);
    s.sxy = VectorX<Scalar>::Zero(p);
    s.sxzb = VectorX<Scalar>::Zero(p);
    s.sbb = MatrixX<Scalar>::Zero(q, q);
    return s;
  }

  Eigen::Index p() const { return sxy.size(); }
  Eigen::Index q() const { return sbb.rows(); }

  LmmStats& operator+=(const LmmStats& o) {
    if (sxx.size() == 0) return *this = o;
    if (o.sxx.size() == 0) return *this;
    sxx += o.sxx;
    sxy += o.sxy;
    sxzb += o.sxzb;
    sbb += o.sbb;
    syy += o.syy;
    syzb += o.syzb;
    szzbb += o.szzbb;
    m += o.m;
    n += o.n;
    return *this;
  }

  /// Expected residual sum of squares re-centred at beta.
  Scalar expected_rss(const VectorX<Scalar>& beta) const {
    return syy - Scalar(2) * beta.dot(sxy) + beta.dot(sxx * beta) - Scalar(2) * syzb +
           Scalar(2) * beta.dot(sxzb) + szzbb;
  }

  /// Flat layout: sxx (col-major), sxy, sxzb, sbb (col-major), syy, syzb, szzbb, m, n.
  std::vector<Scalar> to_vector() const {
    std::vector<Scalar> out;
    out.reserve(static_cast<std::size_t>(sxx.size() + 2 * sxy.size() + sbb.size() + 5));
    out.insert(out.end(), sxx.data(), sxx.data() + sxx.size());
    out.insert(out.end(), sxy.data(), sxy.data() + sxy.size());
    out.insert(out.end(), sxzb.data(), sxzb.data() + sxzb.size());
    out.insert(out.end(), sbb.data(), sbb.data() + sbb.size());
    out.insert(out.end(), {syy, syzb, szzbb, m, n});
    return out;
  }

  static std::size_t flat_size(Eigen::Index p, Eigen::Index q) {
    return static_cast<std::size_t>(p * p + 2 * p + q * q + 5);
  }

  static LmmStats from_vector(std::span<const Scalar> v, Eigen::Index p, Eigen::Index q) {
    if (v.size() != flat_size(p, q)) throw FormatError("LmmStats: payload has the wrong length");
    LmmStats s = zero(p, q);
    const Scalar* it = v.data();
    auto take = [&it](auto& dst) {
      std::copy(it, it + dst.size(), dst.data());
      it += dst.size();
    };
    take(s.sxx);
    take(s.sxy);
    take(s.sxzb);
    take(s.sbb);
    s.syy = *it++;
    s.syzb = *it++;
    s.szzbb = *it++;
    s.m = *it++;
    s.n = *it++;
    return s;
  }
};

using LmmStatsd = LmmStats<double>;

/// Local E step: posterior moments of every sample folded into LmmStats,
/// with the subset's log-likelihood at the anchor in the header.
template <typename Scalar>
SuffStats<LmmStats<Scalar>> local_estep(const Theta<Scalar>& theta,
                                        const SubsetData<Scalar>& subset) {
  using std::log;
  validate(theta);
  const auto p = theta.p();
  const auto q = theta.q();
  SuffStats<LmmStats<Scalar>> out;
  out.subset_id = subset.id;
  auto& st = out.payload;
  st = LmmStats<Scalar>::zero(p, q);
  Scalar loglik = Scalar(0);
  const Scalar log_two_pi_tau2 = log(Scalar(2) * std::numbers::pi_v<Scalar> * theta.tau2);
  const MatrixX<Scalar> lt = theta.L.transpose();
  for (const auto& s : subset.samples) {
    const detail::SampleSolve<Scalar> solve(theta, s);
    const VectorX<Scalar> b_hat = theta.L * solve.m_inv_u;
    MatrixX<Scalar> c_hat = theta.tau2 * theta.L * solve.m_llt.solve(lt);
    MatrixX<Scalar> ebb = c_hat;
    ebb.noalias() += b_hat * b_hat.transpose();
    ebb = Scalar(0.5) * (ebb + ebb.transpose()).eval();

    st.sxx += s.XtX();
    st.sxy += s.Xty();
    st.sxzb.noalias() += s.ZtX().transpose() * b_hat;
    st.sbb += ebb;
    st.syy += s.yty();
    st.syzb += s.Zty().dot(b_hat);
    st.szzbb += (s.ZtZ().cwiseProduct(ebb)).sum();
    st.m += Scalar(1);
    st.n += static_cast<Scalar>(s.n());

    loglik += Scalar(-0.5) * (static_cast<Scalar>(s.n()) * log_two_pi_tau2 + solve.log_det_w() +
                              solve.quad_form() / theta.tau2);
  }
  using std::isfinite;
  if (!isfinite(loglik)) throw DomainError("local_estep: non-finite log-likelihood");
  out.n_obs = static_cast<std::size_t>(st.n);
  out.loglik_at_anchor = static_cast<double>(loglik);
  return out;
}

/// Q(theta' | anchors) reconstructed from aggregated statistics: the
/// expected complete-data log-likelihood of (y, b).
template <typename Scalar>
Scalar expected_complete_loglik(const LmmStats<Scalar>& st, const Theta<Scalar>& theta) {
  using std::log;
  validate(theta);
  const auto q = theta.q();
  const Scalar log_det_d = Scalar(2) * theta.L.diagonal().array().log().sum();
  const auto tri = theta.L.template triangularView<Eigen::Lower>();
  const MatrixX<Scalar> g = tri.solve(st.sbb);
  const MatrixX<Scalar> h = tri.solve(MatrixX<Scalar>(g.transpose()));
  const Scalar tr_dinv_sbb = h.trace();
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  return Scalar(-0.5) * (st.n + st.m * static_cast<Scalar>(q)) * log(two_pi * theta.tau2) -
         Scalar(0.5) * st.m * log_det_d -
         (tr_dinv_sbb + st.expected_rss(theta.beta)) / (Scalar(2) * theta.tau2);
}

}  // namespace dem::lmm
