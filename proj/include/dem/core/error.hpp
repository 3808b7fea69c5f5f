#pragma once

#include <stdexcept>
#include <string>

namespace dem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluation left the valid parameter domain (non-PD covariance, non-finite value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Fixed-effects design is rank deficient.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// Manager/worker protocol was violated (e.g. M step before every subset reported).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Parameter update became non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// A worker failed while computing its local E step.
class WorkerError : public Error {
 public:
  WorkerError(const std::string& what, unsigned subset_id)
      : Error(what), subset_id_(subset_id) {}
  unsigned subset_id() const noexcept { return subset_id_; }

 private:
  unsigned subset_id_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file, frame, or record.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dem
