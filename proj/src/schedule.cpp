#include "dem/runtime/schedule.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace dem::runtime {

std::vector<SubsetId> deterministic_schedule(std::uint64_t seed, std::uint64_t t, std::size_t K,
                                             ScheduleMode mode) {
  std::vector<SubsetId> order(K);
  std::iota(order.begin(), order.end(), SubsetId{0});
  if (mode == ScheduleMode::kForcedSplit) return order;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kNaiveAllPairs: return "naive_allpairs";
    case Scheme::kSynchronous: return "synchronous";
    case Scheme::kAsynchronous: return "asynchronous";
  }
  return "?";
}

std::string to_string(Scheduler s) {
  return s == Scheduler::kReal ? "real" : "deterministic";
}

std::string to_string(ScheduleMode s) {
  return s == ScheduleMode::kUniform ? "uniform" : "forced_split";
}

std::string to_string(TransportKind t) {
  return t == TransportKind::kInProcess ? "in_process" : "socket";
}

std::string to_string(InFlightPolicy p) {
  return p == InFlightPolicy::kFinishAndSend ? "finish_and_send" : "abort_and_restart";
}

}  // namespace dem::runtime
