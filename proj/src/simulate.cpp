#include "dem/datagen/simulate.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace dem::datagen {

std::size_t Dataset::n_obs() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += static_cast<std::size_t>(s.n());
  return n;
}

void SimDesign::validate() const {
  if (m < 1) throw Error("SimDesign: m must be at least 1");
  if (n < m) throw Error("SimDesign: need n >= m so every sample has an observation");
  if (p < 1) throw Error("SimDesign: p must be at least 1");
  if (q < 1) throw Error("SimDesign: q must be at least 1");
}

Vector beta_pattern(Eigen::Index p) {
  Vector beta(p);
  for (Eigen::Index j = 0; j < p; ++j) beta(j) = (j % 2 == 0) ? -2.0 : 2.0;
  return beta;
}

Matrix sigma_true(Eigen::Index q) {
  Matrix R = Matrix::Identity(3, 3);
  R(0, 1) = R(1, 0) = -0.4;
  R(0, 2) = R(2, 0) = 0.30;
  R(1, 2) = R(2, 1) = 0.001;
  const Vector v = Vector::LinSpaced(3, 1.0, 3.0).cwiseSqrt();
  const Matrix block = v.asDiagonal() * R * v.asDiagonal();
  const Eigen::Index blocks = (q + 2) / 3;
  Matrix full = Matrix::Zero(3 * blocks, 3 * blocks);
  for (Eigen::Index b = 0; b < blocks; ++b) full.block(3 * b, 3 * b, 3, 3) = block;
  return full.topLeftCorner(q, q);
}

lmm::Thetad theta_true(Eigen::Index p, Eigen::Index q) {
  return lmm::Thetad::from_D(beta_pattern(p), sigma_true(q), 1.0);
}

Dataset simulate(const SimDesign& design) {
  design.validate();
  const auto p = design.p;
  const auto q = design.q;
  std::mt19937_64 rng(design.seed);

  std::vector<std::size_t> counts(design.m, 1);
  std::uniform_int_distribution<std::size_t> pick(0, design.m - 1);
  for (std::size_t i = design.m; i < design.n; ++i) ++counts[pick(rng)];

  const lmm::Thetad truth = theta_true(p, q);
  const Matrix sigma_chol = truth.Sigma().llt().matrixL();
  const double sigma_e = std::sqrt(truth.tau2);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto sign = [&] { return coin(rng) ? 1.0 : -1.0; };

  Dataset out;
  out.p = p;
  out.q = q;
  out.seed = design.seed;
  out.source = "simulated";
  out.truth = truth;
  out.samples.reserve(design.m);
  for (std::size_t i = 0; i < design.m; ++i) {
    const auto ni = static_cast<Eigen::Index>(counts[i]);
    Matrix X(ni, p), Z(ni, q);
    for (Eigen::Index r = 0; r < ni; ++r) {
      for (Eigen::Index c = 0; c < p; ++c) X(r, c) = sign();
      for (Eigen::Index c = 0; c < q; ++c) Z(r, c) = sign();
    }
    Vector z(q);
    for (Eigen::Index c = 0; c < q; ++c) z(c) = normal(rng);
    const Vector b = sigma_chol * z;
    Vector y = X * truth.beta + Z * b;
    for (Eigen::Index r = 0; r < ni; ++r) y(r) += sigma_e * normal(rng);
    out.samples.emplace_back(std::move(y), std::move(X), std::move(Z));
  }
  return out;
}

std::vector<lmm::SubsetDatad> partition(const Dataset& data, std::size_t K, std::uint64_t seed) {
  const std::size_t m = data.m();
  if (K < 1) throw Error("partition: K must be at least 1");
  if (K > m) throw Error("partition: K = " + std::to_string(K) + " exceeds the " +
                         std::to_string(m) + " samples");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<lmm::SubsetDatad> out(K);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t size = m / K + (k < m % K ? 1 : 0);
    std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                     order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
    std::sort(members.begin(), members.end());
    out[k].id = static_cast<SubsetId>(k);
    out[k].samples.reserve(size);
    for (auto i : members) out[k].samples.push_back(data.samples[i]);
  }
  return out;
}

lmm::SubsetDatad as_single_subset(const Dataset& data) {
  lmm::SubsetDatad out;
  out.samples = data.samples;
  return out;
}

}  // namespace dem::datagen
