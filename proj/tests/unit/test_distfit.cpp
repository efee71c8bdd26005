#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "mixedabc/distfit.hpp"
#include "mixedabc/error.hpp"
#include "mixedabc/rng.hpp"
#include "mixedabc/stats.hpp"

using namespace mixedabc;
using namespace mixedabc::distfit;

namespace {

std::vector<double> draws(Family f, std::vector<double> theta, std::size_t n, std::uint64_t seed) {
  Engine eng = make_engine(seed, "test-draws");
  return draw_n(f, theta, n, eng);
}

// Integral of a density over the real line by the substitution x = c + w tan(t),
// composite midpoint rule on (-pi/2, pi/2).
double integrate_real_line(Family f, const std::vector<double>& theta, double c, double w) {
  const int m = 200000;
  const double a = -std::numbers::pi / 2;
  const double h = std::numbers::pi / m;
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double t = a + (i + 0.5) * h;
    const double x = c + w * std::tan(t);
    const double jac = w / (std::cos(t) * std::cos(t));
    acc += std::exp(log_density(f, theta, x)) * jac;
  }
  return acc * h;
}

double sum_pmf(Family f, const std::vector<double>& theta, double lo, double hi) {
  double acc = 0.0;
  for (double k = lo; k <= hi; k += 1.0) acc += std::exp(log_density(f, theta, k));
  return acc;
}

}  // namespace

TEST_CASE("densities normalize") {
  CHECK(integrate_real_line(Family::Normal, {1.5, 2.0}, 1.5, 2.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(integrate_real_line(Family::Logistic, {1763.0, 214.22}, 1763.0, 214.22) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(integrate_real_line(Family::Cauchy, {578.56, 30.15}, 578.56, 30.15) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sum_pmf(Family::NegativeBinomial, {2.322, 0.009}, 0, 20000) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sum_pmf(Family::Binomial, {0.3}, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sum_pmf(Family::DiscreteUniform, {7, 42}, 0, 100) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("closed-form fits") {
  SUBCASE("discrete uniform takes the sample range") {
    std::vector<double> s = {7, 12, 30, 42, 19, 8, 25, 33};
    auto r = fit_family(Family::DiscreteUniform, s);
    CHECK(r.theta == std::vector<double>{7, 42});
    CHECK(r.loglik == doctest::Approx(-8.0 * std::log(36.0)));
  }
  SUBCASE("bernoulli component is the bit mean") {
    std::vector<double> s = {1, 1, 0, 1};
    auto r = fit_family(Family::Binomial, s);
    CHECK(r.theta[0] == 0.75);
  }
  SUBCASE("normal uses the population sd") {
    std::vector<double> s = {1, 2, 3, 4, 5, 6, 7, 8};
    auto r = fit_family(Family::Normal, s);
    CHECK(r.theta[0] == doctest::Approx(4.5));
    CHECK(r.theta[1] == doctest::Approx(std::sqrt(5.25)));
  }
}

TEST_CASE("fit errors") {
  std::vector<double> constant(10, 3.0);
  CHECK_THROWS_WITH_AS(fit_family(Family::Logistic, constant), doctest::Contains("DegenerateSample"), Error);
  std::vector<double> neg = {-1, 0, 1, 2, 3, 4, 5, 6};
  CHECK_THROWS_WITH_AS(fit_family(Family::NegativeBinomial, neg), doctest::Contains("SupportViolation"),
                       Error);
  std::vector<double> frac = {0.5, 1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_WITH_AS(fit_family(Family::DiscreteUniform, frac), doctest::Contains("SupportViolation"),
                       Error);
  std::vector<double> few = {1, 2, 3};
  CHECK_THROWS_WITH_AS(fit_family(Family::Normal, few), doctest::Contains("TooFewValues"), Error);
  const Family only_binomial[] = {Family::Binomial};
  CHECK_THROWS_WITH_AS(select_model(neg, only_binomial), doctest::Contains("NoValidCandidate"), Error);
}

TEST_CASE("logistic MLE recovers generating values within 1%") {
  auto s = draws(Family::Logistic, {1763.00, 214.22}, 100000, 11);
  auto r = fit_family(Family::Logistic, s);
  CHECK(std::abs(r.theta[0] / 1763.00 - 1.0) < 0.01);
  CHECK(std::abs(r.theta[1] / 214.22 - 1.0) < 0.01);
  // No point of a small grid around the optimum beats it.
  for (double dm : {-1e-3, 0.0, 1e-3}) {
    for (double ds : {-1e-3, 0.0, 1e-3}) {
      std::vector<double> t = {r.theta[0] * (1 + dm), r.theta[1] * (1 + ds)};
      CHECK(log_likelihood(Family::Logistic, t, s) <= r.loglik + 1e-9);
    }
  }
}

TEST_CASE("cauchy MLE is a stationary point") {
  auto s = draws(Family::Cauchy, {578.56, 30.15}, 20000, 3);
  auto r = fit_family(Family::Cauchy, s);
  CHECK(std::abs(r.theta[0] - 578.56) < 2.0);
  CHECK(std::abs(r.theta[1] / 30.15 - 1.0) < 0.05);
  for (int i = 0; i < 2; ++i) {
    const double h = 1e-4 * r.theta[1];
    auto up = r.theta;
    auto dn = r.theta;
    up[i] += h;
    dn[i] -= h;
    const double grad = (log_likelihood(Family::Cauchy, up, s) - log_likelihood(Family::Cauchy, dn, s)) / (2 * h);
    CHECK(std::abs(grad) * r.theta[1] <= 1e-6 * s.size());
  }
}

TEST_CASE("negative binomial MLE gradient vanishes") {
  auto s = draws(Family::NegativeBinomial, {2.322, 0.009}, 5000, 5);
  auto r = fit_family(Family::NegativeBinomial, s);
  CHECK(r.theta[0] == doctest::Approx(2.322).epsilon(0.1));
  CHECK(r.theta[1] == doctest::Approx(0.009).epsilon(0.1));
  // Independent extended-precision log-likelihood; the p direction is so
  // sharply curved that double-precision differences drown in rounding.
  auto ll = [&](long double n, long double p) {
    long double acc = 0.0L;
    for (double x : s) {
      acc += std::lgamma(x + n) - std::lgamma(n) - std::lgamma(x + 1.0L) + n * std::log(p) +
             x * std::log1p(-p);
    }
    return acc;
  };
  for (int i = 0; i < 2; ++i) {
    const long double h = 3e-4L * r.theta[i];
    auto at = [&](long double off) {
      long double t[2] = {r.theta[0], r.theta[1]};
      t[i] += off;
      return ll(t[0], t[1]);
    };
    const long double grad = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    CAPTURE(static_cast<double>(grad));
    CHECK(std::abs(static_cast<double>(grad)) <= 1e-6);
  }
}

TEST_CASE("model probabilities") {
  SUBCASE("equal AIC splits evenly") {
    std::vector<double> a = {10.0, 10.0};
    auto p = model_probabilities(a);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
  }
  SUBCASE("delta AIC of 2 gives a ratio of e^-1") {
    std::vector<double> a = {100.0, 102.0};
    auto p = model_probabilities(a);
    CHECK(p[1] / p[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(p[1] / p[0] == doctest::Approx(0.36788).epsilon(1e-5));
  }
  SUBCASE("shift invariance at production magnitudes") {
    std::vector<double> a = {52000.0, 52003.5, 52010.0};
    std::vector<double> b = {3.0, 6.5, 13.0};
    auto pa = model_probabilities(a);
    auto pb = model_probabilities(b);
    for (int i = 0; i < 3; ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-14));
    CHECK(std::abs(std::accumulate(pa.begin(), pa.end(), 0.0) - 1.0) < 1e-12);
  }
}

TEST_CASE("select_model") {
  auto s = draws(Family::Normal, {0.0, 1.0}, 5000, 21);
  const Family cands[] = {Family::Normal, Family::Logistic, Family::Cauchy, Family::Binomial};
  auto fits = select_model(s, cands);
  REQUIRE(fits.size() == 3);  // binomial skipped
  CHECK(fits.front().family == Family::Normal);
  double total = 0.0;
  for (const auto& fp : fits) {
    CHECK(fp.aic == -2.0 * fp.loglik + 2.0 * n_params(fp.family));
    total += fp.model_prob;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  for (std::size_t i = 1; i < fits.size(); ++i) CHECK(fits[i - 1].aic <= fits[i].aic);

  SUBCASE("integer samples compare discrete families") {
    auto counts = draws(Family::DiscreteUniform, {7, 42}, 1000, 2);
    auto all = select_model(counts, kAllFamilies);
    CHECK(all.front().family == Family::DiscreteUniform);
    for (const auto& fp : all) CHECK(is_discrete(fp.family));
  }
}

TEST_CASE("mcmc") {
  auto s = draws(Family::Normal, {2.0, 0.5}, 1000, 8);
  McmcConfig cfg;
  cfg.seed = 99;
  cfg.n_iter = 4000;
  cfg.burn_in = 1000;
  SUBCASE("deterministic by seed") {
    auto a = mcmc_posterior(Family::Normal, s, cfg);
    auto b = mcmc_posterior(Family::Normal, s, cfg);
    CHECK(a.draws == b.draws);
    CHECK(a.n_kept == 3000);
  }
  SUBCASE("tiny proposals accept almost everything and stay at the MLE") {
    cfg.proposal_scales = {1e-9, 1e-9};
    auto r = fit_family(Family::Normal, s);
    auto c = mcmc_posterior(Family::Normal, s, cfg);
    CHECK(c.acceptance_rate > 0.99);
    CHECK(c.mean[0] == doctest::Approx(r.theta[0]).epsilon(1e-6));
  }
  SUBCASE("invalid configuration") {
    cfg.burn_in = cfg.n_iter;
    CHECK_THROWS_AS(mcmc_posterior(Family::Normal, s, cfg), Error);
  }
}

TEST_CASE("default proposal scales keep acceptance in the tuning band") {
  struct Case {
    Family f;
    std::vector<double> theta;
  };
  const Case cases[] = {{Family::Normal, {4865.79, 3016.80}},
                        {Family::Logistic, {1763.00, 214.22}},
                        {Family::Cauchy, {578.56, 30.15}},
                        {Family::NegativeBinomial, {2.322, 0.009}},
                        {Family::Binomial, {0.3}},
                        {Family::DiscreteUniform, {7, 42}}};
  for (const auto& c : cases) {
    CAPTURE(family_name(c.f));
    auto s = draws(c.f, c.theta, 1000, 17);
    McmcConfig cfg;
    cfg.seed = 4;
    auto chain = mcmc_posterior(c.f, s, cfg);
    CHECK(chain.acceptance_rate >= 0.1);
    CHECK(chain.acceptance_rate <= 0.6);
  }
}

TEST_CASE("sample_prior") {
  FittedPrior du;
  du.family = Family::DiscreteUniform;
  du.theta_hat = {7, 42};
  for (double v : sample_prior(du, 5000, 1)) {
    CHECK(v == std::floor(v));
    CHECK(v >= 7);
    CHECK(v <= 42);
  }
  FittedPrior zero;
  zero.family = Family::Binomial;
  zero.theta_hat = {0.0};
  for (double v : sample_prior(zero, 1000, 1)) CHECK(v == 0.0);

  FittedPrior lg;
  lg.family = Family::Logistic;
  lg.theta_hat = {1763.0, 214.22};
  auto x = sample_prior(lg, 1000000, 5);
  const double se = 214.22 * std::numbers::pi / std::sqrt(3.0) / std::sqrt(1e6);
  CHECK(std::abs(stats::mean(x) - 1763.0) <= 3 * se);
  CHECK(sample_prior(lg, 10, 5) == sample_prior(lg, 10, 5));
}

TEST_CASE("fitted prior json round trip") {
  auto s = draws(Family::Logistic, {0.0, 0.126}, 500, 1);
  const Family cands[] = {Family::Normal, Family::Logistic, Family::Cauchy};
  McmcConfig cfg;
  cfg.n_iter = 2000;
  cfg.burn_in = 500;
  auto fp = fit_prior(s, cands, cfg);
  REQUIRE(fp.chain);
  auto back = fitted_prior_from_json(to_json(fp));
  CHECK(back.family == fp.family);
  CHECK(back.theta_hat == fp.theta_hat);
  CHECK(back.aic == fp.aic);
  CHECK(back.theta() == fp.theta());
}
