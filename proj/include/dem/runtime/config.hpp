#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "dem/core/error.hpp"
#include "dem/core/types.hpp"

namespace dem::runtime {

enum class Scheme {
  kNaiveAllPairs,  // every process exchanges with every other, updates locally
  kSynchronous,    // manager waits for all K workers
  kAsynchronous,   // manager waits for a gamma-fraction
};

enum class Scheduler {
  kReal,           // worker threads, wall-clock completion order
  kDeterministic,  // single-threaded, seeded completion order
};

enum class ScheduleMode {
  kUniform,      // fresh random completion order every iteration
  kForcedSplit,  // workers 0..N-1 always finish first
};

enum class TransportKind { kInProcess, kSocket };

/// What a busy worker does when a newer parameter arrives.
enum class InFlightPolicy { kFinishAndSend, kAbortAndRestart };

struct RunConfig {
  std::size_t K = 1;
  double gamma = 1.0;
  double tol = 1e-7;
  std::size_t max_iter = 1000;
  /// Seeds the deterministic completion order.
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::kAsynchronous;
  Scheduler scheduler = Scheduler::kDeterministic;
  ScheduleMode schedule_mode = ScheduleMode::kUniform;
  TransportKind transport = TransportKind::kInProcess;
  /// Evaluate L(theta_t) on every subset for the stopping rule instead of
  /// summing the cached (possibly stale) per-subset values.
  bool exact_loglik_check = false;
  InFlightPolicy in_flight = InFlightPolicy::kFinishAndSend;
  /// Real scheduler pool size; 0 picks min(K, hardware threads).
  std::size_t threads = 0;

  /// N = ceil(gamma K), the smallest N with N / K >= gamma.
  std::size_t accept_threshold() const {
    const double raw = gamma * static_cast<double>(K);
    auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9 * static_cast<double>(K)));
    if (n < 1) n = 1;
    if (n > K) n = K;
    return n;
  }

  void validate() const {
    if (K < 1) throw Error("RunConfig: K must be at least 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("RunConfig: gamma must lie in (0, 1]");
    if (!(tol >= 0.0)) throw Error("RunConfig: tol must be non-negative");
    if (max_iter < 1) throw Error("RunConfig: max_iter must be at least 1");
  }
};

std::string to_string(Scheme s);
std::string to_string(Scheduler s);
std::string to_string(ScheduleMode s);
std::string to_string(TransportKind t);
std::string to_string(InFlightPolicy p);

}  // namespace dem::runtime
