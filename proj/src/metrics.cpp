#include "dem/diagnostics/metrics.hpp"

#include <cmath>

namespace dem::diagnostics {

ErrReport compute_err(const lmm::Thetad& estimate, const lmm::Thetad& reference,
                      std::string reference_label) {
  const auto p = estimate.p();
  const auto q = estimate.q();
  if (p != reference.p() || q != reference.q()) {
    throw DimensionError("compute_err: estimate and reference dimensions differ");
  }
  ErrReport r;
  r.reference = std::move(reference_label);
  r.err_beta = std::sqrt((estimate.beta - reference.beta).squaredNorm() / static_cast<double>(p));
  r.err_tau2 = std::abs(estimate.tau2 - reference.tau2);
  const Matrix diff = estimate.Sigma() - reference.Sigma();
  r.err_var = std::sqrt(diff.diagonal().squaredNorm() / static_cast<double>(q));
  if (q >= 2) {
    double s = 0.0;
    for (Eigen::Index i = 0; i + 1 < q; ++i) {
      for (Eigen::Index j = i + 1; j < q; ++j) s += diff(i, j) * diff(i, j);
    }
    r.err_cov = std::sqrt(2.0 * s / static_cast<double>(q * (q - 1)));
  }
  return r;
}

namespace {

RmseField rmse_of(const std::vector<double>& errs) {
  const double R = static_cast<double>(errs.size());
  double mean_sq = 0.0;
  for (double e : errs) mean_sq += e * e;
  mean_sq /= R;
  RmseField f;
  f.rmse = std::sqrt(mean_sq);
  if (errs.size() > 1 && f.rmse > 0.0) {
    double var = 0.0;
    for (double e : errs) var += (e * e - mean_sq) * (e * e - mean_sq);
    var /= (R - 1.0);
    f.std_error = std::sqrt(var / R) / (2.0 * f.rmse);
  }
  return f;
}

}  // namespace

RmseRecord aggregate_rmse(std::span<const ErrReport> reports) {
  if (reports.empty()) throw Error("aggregate_rmse: no replications");
  std::vector<double> beta, tau2, var, cov;
  const bool has_cov = reports.front().err_cov.has_value();
  for (const auto& r : reports) {
    if (r.err_cov.has_value() != has_cov) {
      throw DimensionError("aggregate_rmse: replications disagree on covariance terms");
    }
    beta.push_back(r.err_beta);
    tau2.push_back(r.err_tau2);
    var.push_back(r.err_var);
    if (has_cov) cov.push_back(*r.err_cov);
  }
  RmseRecord out;
  out.replications = reports.size();
  out.beta = rmse_of(beta);
  out.tau2 = rmse_of(tau2);
  out.var = rmse_of(var);
  if (has_cov) out.cov = rmse_of(cov);
  return out;
}

}  // namespace dem::diagnostics
