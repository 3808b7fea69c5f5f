#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dem/lmm/sample.hpp"
#include "dem/lmm/theta.hpp"

namespace dem::datagen {

/// A full dataset: one Sample per sample unit, plus the generating
/// parameter when simulated.
struct Dataset {
  std::vector<lmm::Sampled> samples;
  Eigen::Index p = 0;
  Eigen::Index q = 0;
  std::uint64_t seed = 0;
  std::string source;
  std::optional<lmm::Thetad> truth;

  std::size_t m() const { return samples.size(); }
  std::size_t n_obs() const;
};

/// Simulation design: m samples sharing n observations, p fixed and q
/// random effects with +-1 covariates.
struct SimDesign {
  std::size_t m = 100;
  std::size_t n = 10000;
  Eigen::Index p = 10;
  Eigen::Index q = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// -2, 2, -2, ...
Vector beta_pattern(Eigen::Index p);

/// Leading q x q block of bdiag(V R V^T, V R V^T, ...) with
/// V = diag(1, sqrt 2, sqrt 3), R12 = -0.4, R13 = 0.3, R23 = 0.001.
Matrix sigma_true(Eigen::Index q);

/// tau2 = 1, so D = Sigma.
lmm::Thetad theta_true(Eigen::Index p, Eigen::Index q);

/// Every sample gets one observation, the remaining n - m are assigned to
/// uniformly drawn samples. Same design and seed give a bit-identical dataset.
Dataset simulate(const SimDesign& design);

/// Random equal-size split of the samples (sizes differ by at most one).
/// Subset k has id k and keeps its samples in their original order.
std::vector<lmm::SubsetDatad> partition(const Dataset& data, std::size_t K, std::uint64_t seed);

/// The whole dataset as one subset.
lmm::SubsetDatad as_single_subset(const Dataset& data);

}  // namespace dem::datagen
