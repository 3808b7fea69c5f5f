#pragma once

#include <vector>

#include "dem/runtime/config.hpp"

namespace dem::runtime {

/// Completion order of the K workers at iteration t. Uniform mode draws a
/// seeded permutation; forced-split mode always returns workers in id
/// order, so the first N = ceil(gamma K) ids form every accept set.
std::vector<SubsetId> deterministic_schedule(std::uint64_t seed, std::uint64_t t, std::size_t K,
                                             ScheduleMode mode = ScheduleMode::kUniform);

}  // namespace dem::runtime
