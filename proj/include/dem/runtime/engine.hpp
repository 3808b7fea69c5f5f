#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "dem/core/convergence.hpp"
#include "dem/core/model.hpp"
#include "dem/core/trace.hpp"
#include "dem/runtime/channel.hpp"
#include "dem/runtime/config.hpp"
#include "dem/runtime/messages.hpp"
#include "dem/runtime/schedule.hpp"

namespace dem::runtime {

template <typename Params>
struct RunResult {
  Params theta;
  Trace<Params> trace;
};

/// Non-finite parameter update. Carries the trace up to the failure.
template <typename Params>
class TracedDivergence : public DivergenceError {
 public:
  TracedDivergence(const std::string& what, std::size_t iteration, Trace<Params> trace)
      : DivergenceError(what, iteration), trace_(std::move(trace)) {}
  const Trace<Params>& trace() const noexcept { return trace_; }

 private:
  Trace<Params> trace_;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Single-threaded driver. After each broadcast the workers "finish" in the
/// seeded order of deterministic_schedule; frames still cross real channels.
template <EmModel M>
class DeterministicDriver {
 public:
  DeterministicDriver(const M& model, std::span<const typename M::Subset> subsets,
                      const RunConfig& cfg)
      : model_(model), subsets_(subsets), cfg_(cfg), workers_(cfg.K) {
    const bool socket = cfg.transport == TransportKind::kSocket;
    for (auto& w : workers_) w.inbox = make_channel(socket, cfg.K, Overflow::kDropOldest);
    manager_ = make_channel(socket, cfg.K, Overflow::kBlock);
  }

  void broadcast(const Frame& theta) {
    for (auto& w : workers_) w.inbox->send(theta);
    for (auto& w : workers_) {
      std::optional<Frame> latest;
      while (auto f = w.inbox->try_receive()) latest = std::move(f);
      if (!latest) continue;
      if (!w.job || cfg_.in_flight == InFlightPolicy::kAbortAndRestart) {
        w.job = std::move(latest);
        w.pending.reset();
      } else {
        w.pending = std::move(latest);
      }
    }
  }

  void begin_window(std::uint64_t t) {
    order_ = deterministic_schedule(cfg_.seed, t, cfg_.K, cfg_.schedule_mode);
    cursor_ = 0;
  }

  Frame next_message() {
    while (cursor_ < order_.size()) {
      const SubsetId k = order_[cursor_++];
      auto& w = workers_[k];
      if (!w.job) continue;
      Frame result = worker_step(model_, subsets_[k], k, *w.job);
      w.job = std::move(w.pending);
      w.pending.reset();
      manager_->send(result);
      auto got = manager_->receive();
      if (!got) throw ProtocolError("manager channel closed");
      return std::move(*got);
    }
    throw ProtocolError("no worker left to complete in this window");
  }

  void shutdown() {
    for (auto& w : workers_) w.inbox->close();
    manager_->close();
  }

 private:
  struct Worker {
    std::unique_ptr<Channel> inbox;
    std::optional<Frame> job;
    std::optional<Frame> pending;
  };

  const M& model_;
  std::span<const typename M::Subset> subsets_;
  RunConfig cfg_;
  std::vector<Worker> workers_;
  std::unique_ptr<Channel> manager_;
  std::vector<SubsetId> order_;
  std::size_t cursor_ = 0;
};

/// K logical workers multiplexed onto a thread pool; completion order is
/// whatever the hardware produces.
template <EmModel M>
class ThreadedDriver {
 public:
  ThreadedDriver(const M& model, std::span<const typename M::Subset> subsets, const RunConfig& cfg)
      : model_(model), subsets_(subsets), cfg_(cfg), state_(cfg.K) {
    const bool socket = cfg.transport == TransportKind::kSocket;
    for (std::size_t k = 0; k < cfg.K; ++k) {
      inboxes_.push_back(make_channel(socket, cfg.K, Overflow::kDropOldest));
    }
    manager_ = make_channel(socket, cfg.K, Overflow::kBlock);
    std::size_t n = cfg.threads;
    if (n == 0) n = std::min<std::size_t>(cfg.K, std::max(1u, std::thread::hardware_concurrency()));
    for (std::size_t i = 0; i < n; ++i) pool_.emplace_back([this] { pool_loop(); });
  }

  ThreadedDriver(const ThreadedDriver&) = delete;
  ThreadedDriver& operator=(const ThreadedDriver&) = delete;

  ~ThreadedDriver() { shutdown(); }

  void broadcast(const Frame& theta) {
    for (std::size_t k = 0; k < cfg_.K; ++k) {
      inboxes_[k]->send(theta);
      std::lock_guard lock(mu_);
      ++state_[k].pending;
      if (!state_[k].running) {
        state_[k].running = true;
        ready_.push_back(k);
        cv_.notify_one();
      }
    }
  }

  void begin_window(std::uint64_t) {}

  Frame next_message() {
    auto got = manager_->receive();
    if (!got) throw ProtocolError("manager channel closed");
    return std::move(*got);
  }

  void shutdown() {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      stopped_ = true;
    }
    cv_.notify_all();
    for (auto& c : inboxes_) c->close();
    manager_->close();
    for (auto& t : pool_) t.join();
  }

 private:
  struct State {
    std::size_t pending = 0;
    bool running = false;
  };

  void pool_loop() {
    for (;;) {
      std::size_t k = 0;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stopped_ || !ready_.empty(); });
        if (stopped_) return;
        k = ready_.front();
        ready_.pop_front();
      }
      run_worker(k);
    }
  }

  // Runs worker k until its inbox is empty.
  void run_worker(std::size_t k) {
    const auto id = static_cast<SubsetId>(k);
    for (;;) {
      {
        std::lock_guard lock(mu_);
        if (stopped_ || state_[k].pending == 0) {
          state_[k].running = false;
          return;
        }
        state_[k].pending = 0;
      }
      std::optional<Frame> latest;
      while (auto f = inboxes_[k]->try_receive()) latest = std::move(f);
      if (!latest || latest->kind != MsgKind::kTheta) continue;
      Frame result = worker_step(model_, subsets_[k], id, *latest);
      if (cfg_.in_flight == InFlightPolicy::kAbortAndRestart) {
        std::lock_guard lock(mu_);
        if (state_[k].pending > 0) continue;
      }
      if (!manager_->send(result)) {
        std::lock_guard lock(mu_);
        state_[k].running = false;
        return;
      }
    }
  }

  const M& model_;
  std::span<const typename M::Subset> subsets_;
  RunConfig cfg_;
  std::vector<std::unique_ptr<Channel>> inboxes_;
  std::unique_ptr<Channel> manager_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::size_t> ready_;
  std::vector<State> state_;
  bool stopped_ = false;
  std::vector<std::thread> pool_;
};

template <typename Payload>
double cached_loglik(const std::map<SubsetId, SuffStats<Payload>>& cache) {
  double total = 0.0;
  bool first = true;
  for (const auto& [id, s] : cache) {
    total = first ? s.loglik_at_anchor : total + s.loglik_at_anchor;
    first = false;
  }
  return total;
}

template <EmModel M>
double exact_loglik(const M& model, const typename M::Params& theta,
                    std::span<const typename M::Subset> subsets) {
  double total = 0.0;
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    const double v = model.local_loglik(theta, subsets[k]);
    total = k == 0 ? v : total + v;
  }
  return total;
}

/// Manager side of Schemes 2 and 3.
template <EmModel M, typename Driver>
RunResult<typename M::Params> manager_loop(const RunConfig& cfg, const M& model,
                                           std::span<const typename M::Subset> subsets,
                                           const typename M::Params& theta0, Driver& driver,
                                           std::size_t accept_n, std::string algorithm) {
  using Params = typename M::Params;
  using Stats = typename M::Stats;
  const auto start = Clock::now();
  const std::size_t K = cfg.K;

  Trace<Params> trace;
  trace.algorithm = std::move(algorithm);
  trace.num_subsets = K;
  ConvergenceMonitor monitor(cfg.tol, cfg.max_iter);

  std::map<SubsetId, SuffStats<Stats>> cache;
  std::vector<std::size_t> last_accepted(K, 0);
  // Workers heard from since the last iteration whose change was >= tol.
  std::vector<bool> fresh(K, false);

  Params theta = theta0;
  trace.records.push_back({});
  trace.records[0].theta = theta;

  auto collect = [&](std::uint64_t t, std::size_t need, std::vector<SubsetId>& accepted,
                     std::size_t& messages) {
    driver.begin_window(t);
    std::vector<bool> seen(K, false);
    std::size_t distinct = 0;
    while (distinct < need) {
      const Frame f = driver.next_message();
      auto s = stats_from_frame(model, f);
      if (s.subset_id >= K) throw ProtocolError("result from unknown subset");
      auto it = cache.find(s.subset_id);
      if (it != cache.end() && s.anchor < it->second.anchor) {
        throw ProtocolError("anchor tag went backwards for subset " +
                            std::to_string(s.subset_id));
      }
      ++messages;
      const auto id = s.subset_id;
      cache[id] = std::move(s);
      fresh[id] = true;
      if (!seen[id]) {
        seen[id] = true;
        ++distinct;
        accepted.push_back(id);
      }
    }
    std::sort(accepted.begin(), accepted.end());
  };

  auto loglik_now = [&](const Params& th, std::uint64_t t, bool& exact) {
    if (cfg.exact_loglik_check) {
      exact = true;
      return exact_loglik(model, th, subsets);
    }
    exact = std::all_of(cache.begin(), cache.end(),
                        [&](const auto& e) { return e.second.anchor == t; });
    return cached_loglik(cache);
  };

  auto check_stop = [&](std::size_t t, double L) {
    const bool small = monitor.record(t, L);
    if (!small) {
      std::fill(fresh.begin(), fresh.end(), false);
      return false;
    }
    return std::all_of(fresh.begin(), fresh.end(), [](bool b) { return b; });
  };

  // Seeding round: every worker reports at theta0.
  std::vector<SubsetId> accepted;
  std::size_t messages = K;
  driver.broadcast(theta_frame(model, theta, 0));
  collect(0, K, accepted, messages);
  {
    bool exact = false;
    trace.records[0].loglik = loglik_now(theta, 0, exact);
    trace.records[0].loglik_exact = exact;
    check_stop(0, trace.records[0].loglik);
  }

  for (std::size_t t = 1;; ++t) {
    auto agg = aggregate_stats(cache, K);
    theta = model.cm_steps(agg.total, theta);

    IterationRecord<Params> rec;
    rec.iteration = t;
    rec.theta = theta;
    rec.accepted = accepted;
    rec.anchors = agg.anchors;
    for (auto id : accepted) last_accepted[id] = t;
    rec.staleness.resize(K);
    for (std::size_t k = 0; k < K; ++k) rec.staleness[k] = t - last_accepted[k];
    rec.messages = messages;
    trace.records.push_back(std::move(rec));
    auto& cur = trace.records.back();

    if (!model.is_finite(theta)) {
      cur.wall_seconds = seconds_since(start);
      trace.wall_seconds = cur.wall_seconds;
      driver.shutdown();
      throw TracedDivergence<Params>("parameter update became non-finite at iteration " +
                                         std::to_string(t),
                                     t, std::move(trace));
    }

    bool stop = false;
    if (monitor.exhausted(t)) {
      cur.loglik = exact_loglik(model, theta, subsets);
      cur.loglik_exact = true;
      trace.converged = check_stop(t, cur.loglik);
      trace.max_iter_reached = true;
      stop = true;
    } else {
      accepted.clear();
      messages = K;
      driver.broadcast(theta_frame(model, theta, t));
      collect(t, accept_n, accepted, messages);
      bool exact = false;
      cur.loglik = loglik_now(theta, t, exact);
      cur.loglik_exact = exact;
      if (check_stop(t, cur.loglik)) {
        trace.converged = true;
        stop = true;
      }
    }
    cur.wall_seconds = seconds_since(start);
    if (stop) break;
  }
  driver.shutdown();
  trace.final_loglik = exact_loglik(model, theta, subsets);
  trace.wall_seconds = seconds_since(start);
  return {theta, std::move(trace)};
}

}  // namespace detail

/// Scheme 1: every process sends its E-step result to every other process
/// and runs the M step itself. All processes must agree on the update.
template <EmModel M>
RunResult<typename M::Params> run_all_pairs(const RunConfig& cfg, const M& model,
                                            std::span<const typename M::Subset> subsets,
                                            const typename M::Params& theta0) {
  using Params = typename M::Params;
  using Stats = typename M::Stats;
  cfg.validate();
  if (subsets.size() != cfg.K) throw DimensionError("run_all_pairs: K must equal the subset count");
  const auto start = detail::Clock::now();
  const std::size_t K = cfg.K;
  const bool socket = cfg.transport == TransportKind::kSocket;
  std::vector<std::unique_ptr<Channel>> inbox;
  for (std::size_t k = 0; k < K; ++k) inbox.push_back(make_channel(socket, K, Overflow::kBlock));

  Trace<Params> trace;
  trace.algorithm = "allpairs";
  trace.num_subsets = K;
  ConvergenceMonitor monitor(cfg.tol, cfg.max_iter);
  std::vector<Params> local(K, theta0);
  trace.records.push_back({});
  trace.records[0].theta = theta0;

  for (std::size_t t = 0;; ++t) {
    // Exchange E-step results at the common parameter.
    std::vector<SuffStats<Stats>> own(K);
    for (std::size_t k = 0; k < K; ++k) {
      const auto id = static_cast<SubsetId>(k);
      const Frame result = worker_step(model, subsets[k], id, theta_frame(model, local[k], t));
      own[k] = stats_from_frame(model, result);
      Frame peer = result;
      peer.kind = MsgKind::kPeerStats;
      for (std::size_t j = 0; j < K; ++j) {
        if (j != k) inbox[j]->send(peer);
      }
    }
    std::vector<double> logliks(K);
    for (std::size_t k = 0; k < K; ++k) {
      std::map<SubsetId, SuffStats<Stats>> cache;
      cache[static_cast<SubsetId>(k)] = own[k];
      for (std::size_t j = 0; j + 1 < K; ++j) {
        auto f = inbox[k]->receive();
        if (!f) throw ProtocolError("run_all_pairs: peer channel closed");
        auto s = stats_from_frame(model, *f);
        cache[s.subset_id] = std::move(s);
      }
      logliks[k] = detail::cached_loglik(cache);
      local[k] = model.cm_steps(aggregate_stats(cache, K).total, local[k]);
    }
    for (std::size_t k = 1; k < K; ++k) {
      if (!(local[k] == local[0]) || logliks[k] != logliks[0]) {
        throw ProtocolError("run_all_pairs: processes disagree on the update");
      }
    }

    auto& prev = trace.records.back();
    prev.loglik = logliks[0];
    prev.loglik_exact = true;
    trace.converged = monitor.record(t, logliks[0]);
    trace.max_iter_reached = monitor.exhausted(t);
    if (trace.converged || trace.max_iter_reached) break;
    if (!model.is_finite(local[0])) {
      throw TracedDivergence<Params>("parameter update became non-finite", t + 1, std::move(trace));
    }

    IterationRecord<Params> rec;
    rec.iteration = t + 1;
    rec.theta = local[0];
    rec.accepted.resize(K);
    for (std::size_t k = 0; k < K; ++k) rec.accepted[k] = static_cast<SubsetId>(k);
    rec.anchors.assign(K, t);
    rec.staleness.assign(K, 0);
    rec.messages = K * (K - 1);
    rec.wall_seconds = detail::seconds_since(start);
    trace.records.push_back(std::move(rec));
  }
  for (auto& c : inbox) c->close();
  trace.final_loglik = detail::exact_loglik(model, trace.final_theta(), subsets);
  trace.wall_seconds = detail::seconds_since(start);
  return {trace.final_theta(), std::move(trace)};
}

/// Distributed EM. Scheme 2 (synchronous) waits for every worker; Scheme 3
/// (asynchronous) runs the M step once ceil(gamma K) workers have reported.
template <EmModel M>
RunResult<typename M::Params> run_dem(const RunConfig& cfg, const M& model,
                                      std::span<const typename M::Subset> subsets,
                                      const typename M::Params& theta0) {
  cfg.validate();
  if (subsets.size() != cfg.K) throw DimensionError("run_dem: K must equal the subset count");
  if (!model.is_finite(theta0)) throw DomainError("run_dem: starting point is not finite");
  if (cfg.scheme == Scheme::kNaiveAllPairs) return run_all_pairs(cfg, model, subsets, theta0);

  const bool sync = cfg.scheme == Scheme::kSynchronous;
  const std::size_t n = sync ? cfg.K : cfg.accept_threshold();
  const std::string name = sync ? "sync" : "dem";
  if (cfg.scheduler == Scheduler::kDeterministic) {
    detail::DeterministicDriver<M> driver(model, subsets, cfg);
    return detail::manager_loop(cfg, model, subsets, theta0, driver, n, name);
  }
  detail::ThreadedDriver<M> driver(model, subsets, cfg);
  return detail::manager_loop(cfg, model, subsets, theta0, driver, n, name);
}

/// Non-distributed ECME. `blocks` partitions the data; their E-step
/// results are summed in order, matching the manager's aggregation exactly.
template <EmModel M>
RunResult<typename M::Params> run_ecme0(const RunConfig& cfg, const M& model,
                                        std::span<const typename M::Subset> blocks,
                                        const typename M::Params& theta0,
                                        double ascent_slack = 1e-9) {
  using Params = typename M::Params;
  cfg.validate();
  if (blocks.empty()) throw DimensionError("run_ecme0: no data");
  const auto start = detail::Clock::now();
  Trace<Params> trace;
  trace.algorithm = "ecme0";
  trace.num_subsets = blocks.size();
  ConvergenceMonitor monitor(cfg.tol, cfg.max_iter);
  Params theta = theta0;
  trace.records.push_back({});
  trace.records[0].theta = theta;

  for (std::size_t t = 0;; ++t) {
    auto total = model.local_estep(theta, blocks[0]);
    for (std::size_t k = 1; k < blocks.size(); ++k) total += model.local_estep(theta, blocks[k]);
    total.subset_id = 0;
    auto& cur = trace.records.back();
    cur.loglik = total.loglik_at_anchor;
    cur.loglik_exact = true;
    cur.wall_seconds = detail::seconds_since(start);
    if (t > 0) {
      const double prev = trace.records[t - 1].loglik;
      if (cur.loglik < prev - ascent_slack) trace.ascent_violations.push_back(t);
    }
    trace.converged = monitor.record(t, cur.loglik);
    trace.max_iter_reached = monitor.exhausted(t);
    if (trace.converged || trace.max_iter_reached) break;
    theta = model.cm_steps(total, theta);
    if (!model.is_finite(theta)) {
      throw TracedDivergence<Params>("parameter update became non-finite", t + 1, std::move(trace));
    }
    IterationRecord<Params> rec;
    rec.iteration = t + 1;
    rec.theta = theta;
    rec.accepted.resize(blocks.size());
    for (std::size_t k = 0; k < blocks.size(); ++k) rec.accepted[k] = static_cast<SubsetId>(k);
    rec.anchors.assign(blocks.size(), t);
    rec.staleness.assign(blocks.size(), 0);
    trace.records.push_back(std::move(rec));
  }
  trace.final_loglik = trace.records.back().loglik;
  trace.wall_seconds = detail::seconds_since(start);
  return {theta, std::move(trace)};
}

}  // namespace dem::runtime
