#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dem/core/error.hpp"
#include "dem/core/model.hpp"
#include "dem/core/trace.hpp"

namespace dem {

/// F(p, theta) = sum_k [ L_k(theta) - KL(posterior at anchor_k || posterior at theta) ].
template <EmModel M>
double evaluate_F(const M& model, const typename M::Params& theta,
                  std::span<const typename M::Params> anchors,
                  std::span<const typename M::Subset> subsets) {
  if (anchors.size() != subsets.size()) {
    throw DimensionError("evaluate_F: need one anchor per subset");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    double term = 0.0;
    try {
      term = model.local_loglik(theta, subsets[k]) - model.local_kl(theta, anchors[k], subsets[k]);
    } catch (const DomainError& e) {
      throw DomainError("subset " + std::to_string(k) + ": " + e.what());
    }
    if (!std::isfinite(term)) {
      throw DomainError("subset " + std::to_string(k) + ": non-finite free energy term");
    }
    total += term;
  }
  return total;
}

/// F(p_t, theta_t) for every record of a trace. Record 0 uses theta_0 as
/// the anchor of every subset.
template <EmModel M>
std::vector<double> free_energy_path(const Trace<typename M::Params>& trace, const M& model,
                                     std::span<const typename M::Subset> subsets) {
  using Params = typename M::Params;
  std::vector<double> out;
  out.reserve(trace.records.size());
  std::vector<Params> anchors(subsets.size());
  for (std::size_t t = 0; t < trace.records.size(); ++t) {
    const auto& rec = trace.records[t];
    if (t == 0 || rec.anchors.empty()) {
      std::fill(anchors.begin(), anchors.end(), rec.theta);
    } else {
      if (rec.anchors.size() != subsets.size()) {
        throw DimensionError("free_energy_path: anchor list does not match subsets");
      }
      for (std::size_t k = 0; k < subsets.size(); ++k) {
        const auto a = rec.anchors[k];
        if (a >= trace.records.size()) {
          throw DimensionError("free_energy_path: anchor refers past the end of the trace");
        }
        anchors[k] = trace.records[a].theta;
      }
    }
    out.push_back(evaluate_F(model, rec.theta, std::span<const Params>(anchors), subsets));
  }
  return out;
}

struct MonotoneViolation {
  std::size_t iteration = 0;
  double previous = 0.0;
  double current = 0.0;
};

/// Iterations where F decreased by more than rel_tol * |F_prev|.
inline std::vector<MonotoneViolation> find_decreases(std::span<const double> f,
                                                     double rel_tol = 1e-8) {
  std::vector<MonotoneViolation> out;
  for (std::size_t t = 1; t < f.size(); ++t) {
    if (f[t] < f[t - 1] - rel_tol * std::abs(f[t - 1])) {
      out.push_back({t, f[t - 1], f[t]});
    }
  }
  return out;
}

template <EmModel M>
std::vector<MonotoneViolation> check_monotone_F(const Trace<typename M::Params>& trace,
                                                const M& model,
                                                std::span<const typename M::Subset> subsets,
                                                double rel_tol = 1e-8) {
  const auto path = free_energy_path(trace, model, subsets);
  return find_decreases(path, rel_tol);
}

}  // namespace dem
