#pragma once

#include <span>
#include <vector>

#include "dem/core/model.hpp"
#include "dem/lmm/estep.hpp"
#include "dem/lmm/kl.hpp"
#include "dem/lmm/mstep.hpp"

namespace dem::lmm {

/// Linear mixed-effects plugin for the distributed EM runtime.
class LmmModel {
 public:
  using Params = Thetad;
  using Subset = SubsetDatad;
  using Stats = LmmStatsd;

  LmmModel(Eigen::Index p, Eigen::Index q, CmOrder order = CmOrder::kBetaThenVariance)
      : p_(p), q_(q), order_(order) {}

  Eigen::Index p() const { return p_; }
  Eigen::Index q() const { return q_; }
  CmOrder order() const { return order_; }

  double local_loglik(const Params& theta, const Subset& subset) const {
    return lmm::local_loglik(theta, subset);
  }

  SuffStats<Stats> local_estep(const Params& theta, const Subset& subset) const {
    return lmm::local_estep(theta, subset);
  }

  Params cm_steps(const SuffStats<Stats>& aggregate, const Params& current) const {
    return lmm::cm_steps(aggregate.payload, current, order_);
  }

  double local_kl(const Params& eval, const Params& anchor, const Subset& subset) const {
    return lmm::local_kl(eval, anchor, subset);
  }

  double expected_complete_loglik(const Stats& stats, const Params& theta) const {
    return lmm::expected_complete_loglik(stats, theta);
  }

  bool is_finite(const Params& theta) const { return lmm::is_finite(theta); }

  /// beta, then the lower triangle of L column by column, then tau2.
  std::vector<double> encode_params(const Params& theta) const {
    std::vector<double> out(theta.beta.data(), theta.beta.data() + theta.beta.size());
    for (Eigen::Index j = 0; j < theta.q(); ++j) {
      for (Eigen::Index i = j; i < theta.q(); ++i) out.push_back(theta.L(i, j));
    }
    out.push_back(theta.tau2);
    return out;
  }

  Params decode_params(std::span<const double> v) const {
    if (static_cast<Eigen::Index>(v.size()) != num_free_params(p_, q_)) {
      throw FormatError("LmmModel: parameter payload has the wrong length");
    }
    Params theta;
    theta.beta = Eigen::Map<const Vector>(v.data(), p_);
    theta.L = Matrix::Zero(q_, q_);
    std::size_t idx = static_cast<std::size_t>(p_);
    for (Eigen::Index j = 0; j < q_; ++j) {
      for (Eigen::Index i = j; i < q_; ++i) theta.L(i, j) = v[idx++];
    }
    theta.tau2 = v[idx];
    return theta;
  }

  std::vector<double> encode_stats(const Stats& stats) const { return stats.to_vector(); }

  Stats decode_stats(std::span<const double> v) const { return Stats::from_vector(v, p_, q_); }

 private:
  Eigen::Index p_;
  Eigen::Index q_;
  CmOrder order_;
};

static_assert(EmModel<LmmModel>);

}  // namespace dem::lmm
