#pragma once

#include <concepts>
#include <span>
#include <vector>

#include "dem/core/suff_stats.hpp"

namespace dem {

/// What a model plugin provides to the distributed EM machinery.
///
/// Params is the shared parameter point, Subset the data held by one
/// worker, Stats the additive E-step payload. Params and Stats must round
/// trip through flat f64 arrays so they can cross a transport.
template <typename M>
concept EmModel = requires(const M& model, const typename M::Params& theta,
                           const typename M::Subset& subset,
                           const SuffStats<typename M::Stats>& stats,
                           std::span<const double> wire) {
  { model.local_loglik(theta, subset) } -> std::convertible_to<double>;
  { model.local_estep(theta, subset) } -> std::same_as<SuffStats<typename M::Stats>>;
  { model.cm_steps(stats, theta) } -> std::same_as<typename M::Params>;
  { model.local_kl(theta, theta, subset) } -> std::convertible_to<double>;
  { model.encode_params(theta) } -> std::same_as<std::vector<double>>;
  { model.decode_params(wire) } -> std::same_as<typename M::Params>;
  { model.encode_stats(stats.payload) } -> std::same_as<std::vector<double>>;
  { model.decode_stats(wire) } -> std::same_as<typename M::Stats>;
  { model.is_finite(theta) } -> std::convertible_to<bool>;
};

}  // namespace dem
