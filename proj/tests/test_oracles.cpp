#include <doctest.h>

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_randist.h>

#include <functional>
#include <map>

#include "dem/core/free_energy.hpp"
#include "dem/runtime/engine.hpp"
#include "fixtures.hpp"
#include "gsl_oracles.hpp"

using namespace dem;
using dem::test::Rng;
using dem::test::SubsetSpan;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Scalar posterior of b for q = 1, written from the prior and likelihood directly.
struct ScalarPosterior {
  double mean;
  double var;
};

ScalarPosterior scalar_posterior(const lmm::Thetad& th, const lmm::Sampled& s) {
  const double prior_var = th.tau2 * th.L(0, 0) * th.L(0, 0);
  const Vector r = s.y() - s.X() * th.beta;
  double zz = 0.0, zr = 0.0;
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    zz += s.Z()(i, 0) * s.Z()(i, 0);
    zr += s.Z()(i, 0) * r(i);
  }
  const double prec = 1.0 / prior_var + zz / th.tau2;
  return {zr / th.tau2 / prec, 1.0 / prec};
}

double normal_logpdf(double x, double mean, double var) {
  return -0.5 * (kLog2Pi + std::log(var) + (x - mean) * (x - mean) / var);
}

// log p(y, b | theta) for q = 1.
double complete_logpdf(const lmm::Thetad& th, const lmm::Sampled& s, double b) {
  double acc = normal_logpdf(b, 0.0, th.tau2 * th.L(0, 0) * th.L(0, 0));
  const Vector mean = s.X() * th.beta + s.Z().col(0) * b;
  for (Eigen::Index i = 0; i < s.n(); ++i) acc += normal_logpdf(s.y()(i), mean(i), th.tau2);
  return acc;
}

class Integrator {
 public:
  Integrator() : ws_(gsl_integration_workspace_alloc(2000)) {}
  ~Integrator() { gsl_integration_workspace_free(ws_); }
  Integrator(const Integrator&) = delete;
  Integrator& operator=(const Integrator&) = delete;

  double over_real_line(const std::function<double(double)>& f) {
    gsl_function g;
    g.function = [](double x, void* p) { return (*static_cast<const std::function<double(double)>*>(p))(x); };
    g.params = const_cast<std::function<double(double)>*>(&f);
    double result = 0.0, err = 0.0;
    REQUIRE(gsl_integration_qagi(&g, 0.0, 1e-12, 2000, ws_, &result, &err) == GSL_SUCCESS);
    return result;
  }

  // Integral against a normal density, after centring and scaling by its moments.
  double normal_expectation(double mean, double var, const std::function<double(double)>& f) {
    const double sd = std::sqrt(var);
    return over_real_line([&](double u) {
      const double b = mean + sd * u;
      return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI) * f(b);
    });
  }

 private:
  gsl_integration_workspace* ws_;
};

}  // namespace

TEST_CASE("posterior KL against numerical integration, q = 1") {
  Rng rng(21);
  Integrator quad;
  for (int f = 0; f < 25; ++f) {
    const auto s = test::random_sample(rng, 1 + f % 5, 2, 1);
    const auto ta = test::random_theta(rng, 2, 1);
    const auto te = test::random_theta(rng, 2, 1);
    const auto pa = scalar_posterior(ta, s);
    const auto pe = scalar_posterior(te, s);
    const double kl = quad.normal_expectation(pa.mean, pa.var, [&](double b) {
      return normal_logpdf(b, pa.mean, pa.var) - normal_logpdf(b, pe.mean, pe.var);
    });
    lmm::SubsetDatad one;
    one.samples.push_back(s);
    CHECK(lmm::local_kl(te, ta, one) == doctest::Approx(kl).epsilon(1e-8));
  }
}

TEST_CASE("free energy against numerical integration, q = 1") {
  Rng rng(22);
  Integrator quad;
  const lmm::LmmModel model(2, 1);
  for (int f = 0; f < 10; ++f) {
    std::vector<lmm::SubsetDatad> parts{test::random_subset(rng, 3, 2, 1), test::random_subset(rng, 3, 2, 1)};
    const std::vector<lmm::Thetad> anchors{test::random_theta(rng, 2, 1), test::random_theta(rng, 2, 1)};
    const auto theta = test::random_theta(rng, 2, 1);

    double oracle = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      for (const auto& s : parts[k].samples) {
        const auto post = scalar_posterior(anchors[k], s);
        oracle += quad.normal_expectation(post.mean, post.var, [&](double b) {
          return complete_logpdf(theta, s, b) - normal_logpdf(b, post.mean, post.var);
        });
      }
    }
    const double F = evaluate_F(model, theta, std::span<const lmm::Thetad>(anchors), SubsetSpan(parts));
    CHECK(F == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("expected complete log-likelihood against Monte Carlo") {
  Rng rng(23);
  const Eigen::Index p = 2, q = 2;
  const auto subset = test::random_subset(rng, 5, p, q);
  const auto anchor = test::random_theta(rng, p, q);
  const auto theta = test::random_theta(rng, p, q);
  const lmm::LmmModel model(p, q);
  const double Q = model.expected_complete_loglik(model.local_estep(anchor, subset).payload, theta);

  const Matrix Sigma = theta.Sigma();
  const Eigen::LLT<Matrix> sig(Sigma);
  const Matrix Sigma_inv = sig.solve(Matrix::Identity(q, q));
  const double logdet_sigma = 2.0 * Matrix(sig.matrixL()).diagonal().array().log().sum();

  std::normal_distribution<double> N01(0.0, 1.0);
  const int draws = 200000;
  double mean_total = 0.0, var_total = 0.0;
  for (const auto& s : subset.samples) {
    // Posterior at the anchor from the dense precision form.
    const Matrix Sa_inv = anchor.Sigma().inverse();
    const Matrix C = (Sa_inv + s.Z().transpose() * s.Z() / anchor.tau2).inverse();
    const Vector bhat = C * s.Z().transpose() * (s.y() - s.X() * anchor.beta) / anchor.tau2;
    const Matrix Lc = Eigen::LLT<Matrix>(C).matrixL();
    const Vector base = s.y() - s.X() * theta.beta;
    const double n = static_cast<double>(s.n());
    double sum = 0.0, sum2 = 0.0;
    Vector z(q);
    for (int d = 0; d < draws; ++d) {
      for (Eigen::Index j = 0; j < q; ++j) z(j) = N01(rng);
      const Vector b = bhat + Lc * z;
      const double v = -0.5 * (n * (kLog2Pi + std::log(theta.tau2)) + (base - s.Z() * b).squaredNorm() / theta.tau2) -
                       0.5 * (static_cast<double>(q) * kLog2Pi + logdet_sigma + b.dot(Sigma_inv * b));
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / draws;
    mean_total += mean;
    var_total += (sum2 / draws - mean * mean) / draws;
  }
  const double se = std::sqrt(var_total);
  INFO("Q = " << Q << ", Monte Carlo = " << mean_total << " +- " << se);
  CHECK(std::abs(Q - mean_total) < 4.0 * se);
  CHECK(se < 0.05 * std::abs(Q));
}

TEST_CASE("CM steps reach the maximizer found by Nelder-Mead") {
  Rng rng(24);
  const Eigen::Index p = 2, q = 2;
  const lmm::LmmModel model(p, q);
  for (int f = 0; f < 20; ++f) {
    const auto subset = test::random_subset(rng, 40, p, q);
    const auto anchor = test::random_theta(rng, p, q);
    const auto stats = model.local_estep(anchor, subset).payload;
    const auto cm = lmm::cm_steps(stats, anchor);
    auto negQ = [&](const Vector& phi) {
      return -lmm::expected_complete_loglik(stats, lmm::from_unconstrained(phi, p, q));
    };
    const Vector nm = test::nelder_mead(negQ, lmm::to_unconstrained(anchor), 0.5, 1e-11);
    const Vector phi_cm = lmm::to_unconstrained(cm);
    INFO("fixture " << f);
    CHECK(-negQ(phi_cm) >= -negQ(nm) - 1e-9);
    CHECK((nm - phi_cm).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("ECME0 reaches the marginal likelihood maximum") {
  const auto data = test::small_dataset(50, 500, 2, 1, 31);
  const auto parts = datagen::partition(data, 1, 1);
  const lmm::LmmModel model(2, 1);
  runtime::RunConfig cfg;
  cfg.K = 1;
  cfg.tol = 1e-12;
  cfg.max_iter = 20000;
  const auto ecme = runtime::run_ecme0(cfg, model, SubsetSpan(parts), lmm::Thetad::start(2, 1));
  REQUIRE(ecme.trace.converged);

  auto negL = [&](const Vector& phi) { return -lmm::local_loglik(lmm::from_unconstrained(phi, 2, 1), parts[0]); };
  const Vector nm = test::nelder_mead(negL, lmm::to_unconstrained(lmm::Thetad::start(2, 1)), 1.0, 1e-10, 6);
  const double L_nm = -negL(nm);
  const double L_ecme = lmm::local_loglik(ecme.theta, parts[0]);
  CHECK(std::abs(L_nm - L_ecme) <= 1e-5 * std::abs(L_ecme));
  CHECK(L_ecme >= L_nm - 1e-8);
  const auto th = lmm::from_unconstrained(nm, 2, 1);
  CHECK((th.beta - ecme.theta.beta).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(th.tau2 == doctest::Approx(ecme.theta.tau2).epsilon(1e-4));
  CHECK(th.D()(0, 0) == doctest::Approx(ecme.theta.D()(0, 0)).epsilon(1e-4));
}

TEST_CASE("uniform schedule acceptance counts are binomial") {
  const auto data = test::small_dataset(60, 600, 2, 1, 8);
  const auto parts = datagen::partition(data, 20, 2);
  const lmm::LmmModel model(2, 1);
  runtime::RunConfig cfg;
  cfg.K = 20;
  cfg.gamma = 0.5;
  cfg.tol = 0.0;
  cfg.max_iter = 1000;
  const auto run = runtime::run_dem(cfg, model, SubsetSpan(parts), lmm::Thetad::start(2, 1));
  std::vector<unsigned> counts(20, 0);
  unsigned T = 0;
  for (std::size_t t = 2; t < run.trace.records.size(); ++t, ++T) {
    for (auto k : run.trace.records[t].accepted) ++counts[k];
  }
  REQUIRE(T >= 500);
  const double alpha = 0.0027;
  for (std::size_t k = 0; k < 20; ++k) {
    INFO("subset " << k << " accepted " << counts[k] << " of " << T);
    CHECK(gsl_cdf_binomial_P(counts[k], 0.5, T) > alpha / 2);
    const double upper = counts[k] == 0 ? 1.0 : gsl_cdf_binomial_Q(counts[k] - 1, 0.5, T);
    CHECK(upper > alpha / 2);
  }
}

TEST_CASE("partition group counts follow the hypergeometric law") {
  const auto data = test::small_dataset(100, 1000, 2, 1, 9);
  // The first 30 samples form the marked group, identified by their first response.
  std::map<double, bool> marked;
  for (std::size_t i = 0; i < data.m(); ++i) marked[data.samples[i].y()(0)] = i < 30;
  REQUIRE(marked.size() == 100);

  const unsigned seeds = 600;
  std::vector<unsigned> freq(11, 0);
  for (unsigned seed = 1; seed <= seeds; ++seed) {
    const auto parts = datagen::partition(data, 10, seed);
    unsigned total = 0;
    for (const auto& part : parts) {
      REQUIRE(part.samples.size() == 10);
      unsigned c = 0;
      for (const auto& s : part.samples) c += marked.at(s.y()(0)) ? 1 : 0;
      total += c;
    }
    CHECK(total == 30);
    unsigned c0 = 0;
    for (const auto& s : parts[0].samples) c0 += marked.at(s.y()(0)) ? 1 : 0;
    ++freq[c0];
  }
  for (unsigned c = 0; c <= 10; ++c) {
    const double pmf = gsl_ran_hypergeometric_pdf(c, 30, 70, 10);
    const double expect = seeds * pmf;
    const double sd = std::sqrt(seeds * pmf * (1.0 - pmf));
    INFO("count " << c << ": observed " << freq[c] << ", expected " << expect);
    CHECK(std::abs(freq[c] - expect) <= 4.0 * sd + 1.0);
  }
  // Tail mass beyond the central range stays within the hypergeometric bound.
  unsigned tail = 0;
  for (unsigned c = 0; c <= 10; ++c) tail += (c <= 0 || c >= 7) ? freq[c] : 0;
  const double p_tail = gsl_cdf_hypergeometric_P(0, 30, 70, 10) + gsl_cdf_hypergeometric_Q(6, 30, 70, 10);
  CHECK(tail <= seeds * p_tail + 4.0 * std::sqrt(seeds * p_tail * (1.0 - p_tail)) + 1.0);
}
