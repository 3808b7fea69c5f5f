#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dem/core/types.hpp"

namespace dem {

/// One manager iteration. Record 0 holds the starting point; record t >= 1
/// holds the result of the t-th M step.
template <typename Params>
struct IterationRecord {
  std::size_t iteration = 0;
  Params theta{};
  /// Log-likelihood used by the stopping rule at this iteration. Built from
  /// cached per-subset values unless `loglik_exact` is set.
  double loglik = 0.0;
  bool loglik_exact = false;
  /// Workers whose messages fed this M step (U_t).
  std::vector<SubsetId> accepted;
  /// Anchor iteration of every cached entry used by this M step.
  std::vector<IterationTag> anchors;
  /// Iterations since each worker's message was last accepted.
  std::vector<std::size_t> staleness;
  std::size_t messages = 0;
  double wall_seconds = 0.0;
};

template <typename Params>
struct Trace {
  std::string algorithm;
  std::size_t num_subsets = 0;
  std::vector<IterationRecord<Params>> records;
  bool converged = false;
  bool max_iter_reached = false;
  /// Exact full-data log-likelihood at the final parameter.
  double final_loglik = 0.0;
  double wall_seconds = 0.0;
  /// Iterations whose log-likelihood fell below the previous one (single-process runs).
  std::vector<std::size_t> ascent_violations;

  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }

  const Params& final_theta() const { return records.back().theta; }

  std::size_t max_staleness() const {
    std::size_t out = 0;
    for (const auto& r : records) {
      for (auto s : r.staleness) out = std::max(out, s);
    }
    return out;
  }

  std::size_t total_messages() const {
    std::size_t out = 0;
    for (const auto& r : records) out += r.messages;
    return out;
  }
};

}  // namespace dem
