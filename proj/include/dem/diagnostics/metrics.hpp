#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dem/core/trace.hpp"
#include "dem/lmm/theta.hpp"

namespace dem::diagnostics {

/// Root-mean-square differences between an estimate and a reference,
/// per parameter group. Sigma = tau2 D.
struct ErrReport {
  double err_beta = 0.0;
  double err_tau2 = 0.0;
  double err_var = 0.0;
  /// Only defined when q >= 2.
  std::optional<double> err_cov;
  std::string reference = "ecme0";
};

ErrReport compute_err(const lmm::Thetad& estimate, const lmm::Thetad& reference,
                      std::string reference_label = "ecme0");

struct RmseField {
  double rmse = 0.0;
  /// Monte Carlo standard error of the RMSE over replications (delta method).
  double std_error = 0.0;
};

struct RmseRecord {
  std::size_t replications = 0;
  RmseField beta, tau2, var;
  std::optional<RmseField> cov;
};

/// RMSE^2 = R^-1 sum err^2 per field.
RmseRecord aggregate_rmse(std::span<const ErrReport> reports);

struct RatioReport {
  double loglik_ratio = 1.0;
  double iter_ratio = 1.0;
  double time_ratio = 1.0;
  /// Both runs stopped on the tolerance rather than max_iter.
  bool both_converged = false;
};

template <typename Params>
RatioReport ratio_report(const Trace<Params>& run, const Trace<Params>& base) {
  RatioReport r;
  r.loglik_ratio = run.final_loglik / base.final_loglik;
  r.iter_ratio = static_cast<double>(run.iterations()) / static_cast<double>(base.iterations());
  r.time_ratio = base.wall_seconds > 0.0 ? run.wall_seconds / base.wall_seconds : 0.0;
  r.both_converged = run.converged && base.converged;
  return r;
}

/// Per-worker fraction of M steps whose accept set contained the worker.
/// The seeding round (record 1, where every worker reports) is excluded
/// unless it is the only M step.
template <typename Params>
std::vector<double> empirical_gamma(const Trace<Params>& trace) {
  std::vector<double> out(trace.num_subsets, 0.0);
  const std::size_t first = trace.records.size() > 2 ? 2 : 1;
  if (trace.records.size() <= first) return out;
  for (std::size_t t = first; t < trace.records.size(); ++t) {
    for (auto k : trace.records[t].accepted) {
      if (k < out.size()) out[k] += 1.0;
    }
  }
  const double T = static_cast<double>(trace.records.size() - first);
  for (auto& v : out) v /= T;
  return out;
}

}  // namespace dem::diagnostics
