#pragma once

#include <numeric>
#include <vector>

#include "dem/core/error.hpp"
#include "dem/core/types.hpp"

namespace dem::lmm {

/// Observations of one sample (y_i, X_i, Z_i) with their cross products
/// precomputed, so per-sample work is independent of n_i.
template <typename Scalar>
class Sample {
 public:
  Sample() = default;

  Sample(VectorX<Scalar> y, MatrixX<Scalar> X, MatrixX<Scalar> Z)
      : y_(std::move(y)), X_(std::move(X)), Z_(std::move(Z)) {
    if (y_.size() < 1) throw DimensionError("Sample: need at least one observation");
    if (X_.rows() != y_.size() || Z_.rows() != y_.size()) {
      throw DimensionError("Sample: y, X and Z row counts disagree");
    }
    xtx_.noalias() = X_.transpose() * X_;
    xty_.noalias() = X_.transpose() * y_;
    ztz_.noalias() = Z_.transpose() * Z_;
    ztx_.noalias() = Z_.transpose() * X_;
    zty_.noalias() = Z_.transpose() * y_;
    yty_ = y_.squaredNorm();
  }

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index p() const { return X_.cols(); }
  Eigen::Index q() const { return Z_.cols(); }

  const VectorX<Scalar>& y() const { return y_; }
  const MatrixX<Scalar>& X() const { return X_; }
  const MatrixX<Scalar>& Z() const { return Z_; }

  const MatrixX<Scalar>& XtX() const { return xtx_; }
  const VectorX<Scalar>& Xty() const { return xty_; }
  const MatrixX<Scalar>& ZtZ() const { return ztz_; }
  const MatrixX<Scalar>& ZtX() const { return ztx_; }
  const VectorX<Scalar>& Zty() const { return zty_; }
  Scalar yty() const { return yty_; }

  template <typename Other>
  Sample<Other> cast() const {
    return {y_.template cast<Other>(), X_.template cast<Other>(), Z_.template cast<Other>()};
  }

 private:
  VectorX<Scalar> y_;
  MatrixX<Scalar> X_, Z_;
  MatrixX<Scalar> xtx_, ztz_, ztx_;
  VectorX<Scalar> xty_, zty_;
  Scalar yty_ = Scalar(0);
};

/// The samples held by one worker.
template <typename Scalar>
struct SubsetData {
  SubsetId id = 0;
  std::vector<Sample<Scalar>> samples;

  template <typename Other>
  SubsetData<Other> cast() const {
    SubsetData<Other> out;
    out.id = id;
    out.samples.reserve(samples.size());
    for (const auto& s : samples) out.samples.push_back(s.template cast<Other>());
    return out;
  }

  std::size_t n_obs() const {
    return std::accumulate(samples.begin(), samples.end(), std::size_t{0},
                           [](std::size_t acc, const Sample<Scalar>& s) {
                             return acc + static_cast<std::size_t>(s.n());
                           });
  }
};

using Sampled = Sample<double>;
using SubsetDatad = SubsetData<double>;

}  // namespace dem::lmm
