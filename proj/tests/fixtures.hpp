#pragma once

#include <random>
#include <span>
#include <vector>

#include "dem/datagen/simulate.hpp"
#include "dem/lmm/model.hpp"
#include "dem/lmm/posterior.hpp"

namespace dem::test {

using Rng = std::mt19937_64;
using SubsetSpan = std::span<const lmm::SubsetDatad>;

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = N(rng);
  }
  return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale);
}

/// Random valid theta with well-conditioned D.
inline lmm::Thetad random_theta(Rng& rng, Eigen::Index p, Eigen::Index q) {
  std::uniform_real_distribution<double> U(0.3, 2.0);
  lmm::Thetad th;
  th.beta = random_vector(rng, p);
  th.L = Matrix::Zero(q, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    th.L(j, j) = U(rng);
    for (Eigen::Index i = j + 1; i < q; ++i) th.L(i, j) = 0.5 * random_vector(rng, 1)(0);
  }
  th.tau2 = U(rng);
  return th;
}

inline lmm::Sampled random_sample(Rng& rng, Eigen::Index n, Eigen::Index p, Eigen::Index q) {
  return {random_vector(rng, n, 2.0), random_matrix(rng, n, p), random_matrix(rng, n, q)};
}

inline lmm::SubsetDatad random_subset(Rng& rng, std::size_t m, Eigen::Index p, Eigen::Index q,
                                      int max_n = 6) {
  std::uniform_int_distribution<int> n_dist(1, max_n);
  lmm::SubsetDatad s;
  for (std::size_t i = 0; i < m; ++i) s.samples.push_back(random_sample(rng, n_dist(rng), p, q));
  return s;
}

inline datagen::Dataset small_dataset(std::size_t m, std::size_t n, Eigen::Index p, Eigen::Index q,
                                      std::uint64_t seed) {
  datagen::SimDesign d;
  d.m = m;
  d.n = n;
  d.p = p;
  d.q = q;
  d.seed = seed;
  return datagen::simulate(d);
}

/// Dense marginal covariance tau2 (Z D Z^T + I) of one sample.
inline Matrix marginal_cov(const lmm::Thetad& th, const lmm::Sampled& s) {
  return th.tau2 * (s.Z() * th.D() * s.Z().transpose() + Matrix::Identity(s.n(), s.n()));
}

/// Gaussian log-density from an explicit covariance.
inline double dense_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  Eigen::LDLT<Matrix> ldlt(cov);
  const Vector r = x - mean;
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + logdet + r.dot(ldlt.solve(r)));
}

/// Conditional of b given y from the explicit (q + n)-dimensional joint.
inline lmm::PosteriorMoments<double> joint_conditioning(const lmm::Thetad& th, const lmm::Sampled& s) {
  const Matrix Sb = th.Sigma();
  const Matrix Sby = Sb * s.Z().transpose();
  const Eigen::FullPivLU<Matrix> lu(marginal_cov(th, s));
  lmm::PosteriorMoments<double> out;
  out.b_hat = Sby * lu.solve(s.y() - s.X() * th.beta);
  out.C_hat = Sb - Sby * lu.solve(Matrix(Sby.transpose()));
  return out;
}

}  // namespace dem::test
