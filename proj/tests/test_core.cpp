#include <doctest.h>

#include <map>

#include "dem/core/convergence.hpp"
#include "dem/core/free_energy.hpp"
#include "dem/core/suff_stats.hpp"
#include "dem/runtime/engine.hpp"
#include "fixtures.hpp"

using namespace dem;
using dem::test::Rng;
using dem::test::SubsetSpan;

namespace {

using Stats = SuffStats<lmm::LmmStatsd>;

void check_stats_close(const lmm::LmmStatsd& a, const lmm::LmmStatsd& b, double rel) {
  auto close = [rel](const Matrix& x, const Matrix& y) {
    return (x - y).norm() <= rel * std::max(1.0, y.norm());
  };
  CHECK(close(a.sxx, b.sxx));
  CHECK(close(a.sxy, b.sxy));
  CHECK(close(a.sxzb, b.sxzb));
  CHECK(close(a.sbb, b.sbb));
  auto near = [rel](double x, double y) { return std::abs(x - y) <= rel * std::max(1.0, std::abs(y)); };
  CHECK(near(a.syy, b.syy));
  CHECK(near(a.syzb, b.syzb));
  CHECK(near(a.szzbb, b.szzbb));
  CHECK(a.m == b.m);
  CHECK(a.n == b.n);
}

}  // namespace

TEST_CASE("convergence monitor stops on small change") {
  ConvergenceMonitor mon(1e-3, 5);
  CHECK_FALSE(mon.record(0, -100.0));
  CHECK_FALSE(mon.record(1, -50.0));
  CHECK(mon.last_change() == doctest::Approx(50.0));
  CHECK(mon.record(2, -50.0005));
  CHECK_FALSE(mon.exhausted(4));
  CHECK(mon.exhausted(5));
  CHECK(mon.history().size() == 3);
}

TEST_CASE("aggregate_stats") {
  Rng rng(11);
  const lmm::LmmModel model(3, 2);
  const auto theta = test::random_theta(rng, 3, 2);
  std::vector<lmm::SubsetDatad> parts;
  for (int k = 0; k < 3; ++k) parts.push_back(test::random_subset(rng, 4, 3, 2));

  std::map<SubsetId, Stats> cache;
  for (SubsetId k = 0; k < 3; ++k) {
    auto s = model.local_estep(theta, parts[k]);
    s.subset_id = k;
    s.anchor = 7 + k;
    cache[k] = s;
  }

  SUBCASE("K=1 is the identity") {
    std::map<SubsetId, Stats> one{{0, cache[0]}};
    const auto agg = aggregate_stats(one, 1);
    check_stats_close(agg.total.payload, cache[0].payload, 0.0);
    CHECK(agg.total.n_obs == cache[0].n_obs);
    CHECK(agg.anchors == std::vector<IterationTag>{7});
  }

  SUBCASE("combine is commutative") {
    const auto ab = combine(cache[0], cache[1]);
    const auto ba = combine(cache[1], cache[0]);
    check_stats_close(ab.payload, ba.payload, 1e-15);
    CHECK(ab.n_obs == ba.n_obs);
  }

  SUBCASE("associativity up to reassociation") {
    const auto left = combine(combine(cache[0], cache[1]), cache[2]);
    const auto right = combine(cache[0], combine(cache[1], cache[2]));
    check_stats_close(left.payload, right.payload, 1e-12);
  }

  SUBCASE("equals the E step on the concatenated data") {
    lmm::SubsetDatad all;
    for (const auto& p : parts) all.samples.insert(all.samples.end(), p.samples.begin(), p.samples.end());
    const auto direct = model.local_estep(theta, all);
    const auto agg = aggregate_stats(cache, 3);
    check_stats_close(agg.total.payload, direct.payload, 1e-12);
    CHECK(agg.total.n_obs == direct.n_obs);
    CHECK(agg.total.loglik_at_anchor == doctest::Approx(direct.loglik_at_anchor).epsilon(1e-12));
    CHECK(agg.anchors == std::vector<IterationTag>{7, 8, 9});
  }

  SUBCASE("missing subset is a protocol error") {
    cache.erase(1);
    CHECK_THROWS_AS(aggregate_stats(cache, 3), ProtocolError);
    CHECK_THROWS_AS(aggregate_stats(cache, 0), ProtocolError);
  }
}

TEST_CASE("evaluate_F") {
  Rng rng(5);
  const lmm::LmmModel model(2, 2);
  std::vector<lmm::SubsetDatad> parts{test::random_subset(rng, 5, 2, 2), test::random_subset(rng, 4, 2, 2)};
  const auto theta = test::random_theta(rng, 2, 2);
  const SubsetSpan view(parts);

  SUBCASE("anchors at theta give the log-likelihood") {
    const std::vector<lmm::Thetad> anchors(2, theta);
    const double F = evaluate_F(model, theta, std::span<const lmm::Thetad>(anchors), view);
    const double L = model.local_loglik(theta, parts[0]) + model.local_loglik(theta, parts[1]);
    CHECK(F == doctest::Approx(L).epsilon(1e-10));
  }

  SUBCASE("a stale anchor lowers F below L") {
    const auto other = test::random_theta(rng, 2, 2);
    const std::vector<lmm::Thetad> anchors{other, theta};
    const double F = evaluate_F(model, theta, std::span<const lmm::Thetad>(anchors), view);
    const double L = model.local_loglik(theta, parts[0]) + model.local_loglik(theta, parts[1]);
    CHECK(F <= L);
    CHECK(F < L - 1e-6);
  }

  SUBCASE("anchor count must match") {
    const std::vector<lmm::Thetad> anchors(1, theta);
    CHECK_THROWS_AS(evaluate_F(model, theta, std::span<const lmm::Thetad>(anchors), view), DimensionError);
  }

  SUBCASE("invalid parameter names the subset") {
    auto bad = theta;
    bad.tau2 = -1.0;
    const std::vector<lmm::Thetad> anchors(2, theta);
    CHECK_THROWS_WITH_AS(evaluate_F(model, bad, std::span<const lmm::Thetad>(anchors), view),
                         doctest::Contains("subset 0"), DomainError);
  }
}

TEST_CASE("find_decreases") {
  const std::vector<double> up{-10.0, -9.0, -9.0, -8.5};
  CHECK(find_decreases(up).empty());
  const std::vector<double> dip{-10.0, -9.0, -9.5, -8.5};
  const auto v = find_decreases(dip);
  REQUIRE(v.size() == 1);
  CHECK(v[0].iteration == 2);
  const std::vector<double> tiny{-1000.0, -1000.0 - 1e-9};
  CHECK(find_decreases(tiny).empty());
}

TEST_CASE("check_monotone_F on runs") {
  const auto data = test::small_dataset(60, 600, 3, 2, 4);
  const auto parts = datagen::partition(data, 6, 1);
  const lmm::LmmModel model(3, 2);
  const auto theta0 = lmm::Thetad::start(3, 2);
  runtime::RunConfig cfg;
  cfg.K = 6;
  cfg.tol = 1e-8;

  SUBCASE("gamma = 1") {
    const auto r = runtime::run_dem(cfg, model, SubsetSpan(parts), theta0);
    CHECK(check_monotone_F(r.trace, model, SubsetSpan(parts)).empty());
  }

  SUBCASE("gamma = 0.5, both in-flight policies") {
    cfg.gamma = 0.5;
    for (auto policy : {runtime::InFlightPolicy::kFinishAndSend, runtime::InFlightPolicy::kAbortAndRestart}) {
      cfg.in_flight = policy;
      const auto r = runtime::run_dem(cfg, model, SubsetSpan(parts), theta0);
      CHECK(r.trace.converged);
      CHECK(check_monotone_F(r.trace, model, SubsetSpan(parts)).empty());
    }
  }

  SUBCASE("corrupted trace is caught") {
    cfg.gamma = 0.5;
    auto r = runtime::run_dem(cfg, model, SubsetSpan(parts), theta0);
    REQUIRE(r.trace.records.size() > 6);
    std::swap(r.trace.records[2].theta, r.trace.records[5].theta);
    CHECK_FALSE(check_monotone_F(r.trace, model, SubsetSpan(parts)).empty());
  }
}
