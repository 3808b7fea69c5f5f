#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace dem {

/// Stopping rule on successive full-data log-likelihood values.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(double tol = 1e-7, std::size_t max_iter = 1000)
      : tol_(tol), max_iter_(max_iter) {}

  /// Records L at `iteration`; returns true when |L - L_prev| < tol.
  bool record(std::size_t iteration, double loglik) {
    history_.emplace_back(iteration, loglik);
    if (history_.size() < 2) return false;
    const double prev = history_[history_.size() - 2].second;
    return std::abs(loglik - prev) < tol_;
  }

  bool exhausted(std::size_t iteration) const { return iteration >= max_iter_; }

  double last_change() const {
    if (history_.size() < 2) return INFINITY;
    return std::abs(history_.back().second - history_[history_.size() - 2].second);
  }

  double tol() const { return tol_; }
  std::size_t max_iter() const { return max_iter_; }
  const std::vector<std::pair<std::size_t, double>>& history() const { return history_; }

 private:
  double tol_;
  std::size_t max_iter_;
  std::vector<std::pair<std::size_t, double>> history_;
};

}  // namespace dem
