#pragma once

#include <map>
#include <string>
#include <vector>

#include "dem/core/error.hpp"
#include "dem/core/types.hpp"

namespace dem {

/// A worker's E-step output. The payload is model-defined and must be
/// additive: summing payloads of disjoint subsets gives the payload of
/// their union.
template <typename Payload>
struct SuffStats {
  SubsetId subset_id = 0;
  IterationTag anchor = 0;
  std::size_t n_obs = 0;
  double loglik_at_anchor = 0.0;
  Payload payload{};

  SuffStats& operator+=(const SuffStats& other) {
    n_obs += other.n_obs;
    loglik_at_anchor += other.loglik_at_anchor;
    payload += other.payload;
    return *this;
  }
};

template <typename Payload>
SuffStats<Payload> combine(SuffStats<Payload> a, const SuffStats<Payload>& b) {
  a += b;
  return a;
}

template <typename Payload>
struct AggregateStats {
  SuffStats<Payload> total;
  /// anchors[k] is the anchor tag of subset k's cached entry.
  std::vector<IterationTag> anchors;
};

/// Sums one cached entry per subset id 0..K-1, in id order.
template <typename Payload>
AggregateStats<Payload> aggregate_stats(const std::map<SubsetId, SuffStats<Payload>>& cache,
                                        std::size_t num_subsets) {
  if (num_subsets == 0) throw ProtocolError("aggregate_stats: no subsets");
  AggregateStats<Payload> out;
  out.anchors.reserve(num_subsets);
  for (std::size_t k = 0; k < num_subsets; ++k) {
    auto it = cache.find(static_cast<SubsetId>(k));
    if (it == cache.end()) {
      throw ProtocolError("aggregate_stats: subset " + std::to_string(k) +
                          " has not reported");
    }
    if (k == 0) {
      out.total = it->second;
    } else {
      out.total += it->second;
    }
    out.anchors.push_back(it->second.anchor);
  }
  out.total.subset_id = 0;
  return out;
}

}  // namespace dem
