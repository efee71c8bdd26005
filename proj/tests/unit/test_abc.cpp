#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mixedabc/abc.hpp"
#include "mixedabc/error.hpp"
#include "mixedabc/stats.hpp"
#include "mixedabc/synthetic.hpp"

using namespace mixedabc;
using namespace mixedabc::abc;
using distfit::Family;

namespace {

distfit::FittedPrior prior_of(Family f, std::vector<double> theta) {
  distfit::FittedPrior fp;
  fp.family = f;
  fp.theta_hat = std::move(theta);
  return fp;
}

// y = x0 with an additive N(0, sigma) noise; x0 ~ N(m0, t0).
SimulatedSet normal_toy(std::size_t n, std::size_t spd, double m0, double t0, double sigma, std::uint64_t seed) {
  PriorSet priors{{"theta", FeaturePrior::fitted(prior_of(Family::Normal, {m0, t0}))}};
  NoiseModel noise{Family::Normal, {0.0, sigma}, 1.0};
  auto id = [](std::span<const double> x) { return x[0]; };
  return simulate_forward(id, {"theta"}, priors, noise, n, spd, seed);
}

}  // namespace

TEST_CASE("summarize") {
  const std::vector<double> v{5, 1, 4, 2, 3};
  auto s = summarize(v);
  CHECK(s.mean == 3.0);
  CHECK(s.median == 3.0);
  CHECK(s.q1 == 2.0);
  CHECK(s.q3 == 4.0);
  CHECK(s.sd == doctest::Approx(1.5811).epsilon(1e-4));
  auto c = summarize(std::vector<double>{2.5, 2.5, 2.5});
  CHECK(c.as_array() == std::array<double, 5>{2.5, 0.0, 2.5, 2.5, 2.5});
  auto sym = summarize(std::vector<double>{-3, -1, 0, 1, 3});
  CHECK(sym.mean == sym.median);
  CHECK_THROWS_WITH_AS(summarize(std::vector<double>{1.0}), doctest::Contains("TooFewValues"), Error);
}

TEST_CASE("logistic kernel") {
  for (double d : {0.0, 0.3, 1.0, 2.5, 7.0}) {
    const double z = (d - 0.2) / 0.7;
    CHECK(logistic_pdf(d, 0.2, 0.7) == doctest::Approx(std::exp(-z) / (0.7 * std::pow(1 + std::exp(-z), 2))));
  }
  // Far tails do not overflow and stay nonnegative.
  CHECK(logistic_pdf(-1e6, 0.0, 1.0) == 0.0);
  CHECK(logistic_pdf(1e3, 0.0, 1.0) == 0.0);
  double prev = logistic_pdf(0.0, 0.0, 0.5);
  for (double d = 0.01; d < 10; d += 0.01) {
    const double w = logistic_pdf(d, 0.0, 0.5);
    CHECK(w <= prev);
    prev = w;
  }
}

TEST_CASE("simulate_forward") {
  SUBCASE("cardinality and determinism") {
    auto a = normal_toy(1000, 15, 0, 1, 1, 3);
    CHECK(a.draws.rows() == 1000);
    CHECK(a.simulated.rows() == 1000);
    CHECK(a.simulated.cols() == 15);
    auto b = normal_toy(1000, 15, 0, 1, 1, 3);
    CHECK(a.draws == b.draws);
    CHECK(a.simulated == b.simulated);
    auto c = normal_toy(1000, 15, 0, 1, 1, 4);
    CHECK_FALSE(a.draws == c.draws);
  }
  SUBCASE("noiseless constant model returns the base score") {
    surrogate::SurrogateModel m;
    m.base_score = 6.25;
    m.feature_names = {"a", "b"};
    PriorSet priors{{"a", FeaturePrior::fitted(prior_of(Family::Normal, {0, 1}))}, {"b", FeaturePrior::constant(3)}};
    auto s = simulate_forward(m, priors, {.noise_scale = 0.0}, 50, 4, 1);
    for (double v : s.simulated.data()) CHECK(v == 6.25);
    for (std::size_t i = 0; i < 50; ++i) CHECK(s.draws(i, 1) == 3.0);
  }
  SUBCASE("errors") {
    surrogate::SurrogateModel m;
    m.feature_names = {"a", "b"};
    PriorSet priors{{"a", FeaturePrior::constant(1)}};
    CHECK_THROWS_WITH_AS(simulate_forward(m, priors, {}, 10, 5, 1), doctest::Contains("MissingPrior: no prior for feature 'b'"),
                         Error);
    priors["b"] = FeaturePrior::constant(2);
    CHECK_THROWS_AS(simulate_forward(m, priors, {}, 10, 1, 1), Error);
    CHECK_THROWS_AS(simulate_forward(m, priors, {}, 0, 5, 1), Error);
  }
  SUBCASE("simulated target mean matches the generator") {
    auto [ds, gt] = dataset::generate_synthetic({.rows = 100, .categoricals = false}, 2);
    PriorSet priors;
    std::vector<std::string> names;
    for (const auto& f : gt.features) {
      names.push_back(f.name);
      priors[f.name] = FeaturePrior::fitted(prior_of(f.family, f.theta));
    }
    auto ix = [&](const std::string& n) { return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin()); };
    const auto ip = ix("pieces"), ia = ix("area"), id = ix("area_diff");
    auto forward = [&](std::span<const double> x) { return gt.target(x[ip], x[ia], x[id], 0); };
    NoiseModel noise{Family::Logistic, {0.0, gt.noise_scale}, 1.0};
    auto sims = simulate_forward(forward, names, priors, noise, 40000, 3, 9);
    std::vector<double> draw_means(sims.simulated.rows());
    for (std::size_t i = 0; i < draw_means.size(); ++i) draw_means[i] = stats::mean(sims.simulated.row(i));
    // Under the base (population) laws every standardized term has mean
    // zero except through the pieces centering, which uses the same mean.
    const auto& pieces = gt.feature("pieces");
    const auto& [cp, sp] = gt.target.standardizer.at("pieces");
    const double expected =
        gt.target.intercept + gt.target.coef_pieces * (distfit::family_mean(pieces.family, pieces.theta) - cp) / sp;
    const double se = stats::sample_sd(draw_means) / std::sqrt(static_cast<double>(draw_means.size()));
    CHECK(std::abs(stats::mean(draw_means) - expected) <= 3.0 * se);
  }
}

TEST_CASE("weigh") {
  SUBCASE("equal distances give uniform weights") {
    SimulatedSet s;
    s.feature_names = {"a"};
    for (int i = 0; i < 10; ++i) {
      s.draws.append_row(std::vector<double>{static_cast<double>(i)});
      s.simulated.append_row(std::vector<double>{1.0, 2.0, 4.0});
    }
    auto wp = weigh(s, std::vector<double>{0.0, 5.0, 9.0}, KernelDescriptor{.mu = 0.0, .s = 2.0});
    for (double w : wp.norm_weights) CHECK(w == doctest::Approx(0.1));
    CHECK(wp.ess == doctest::Approx(10.0));
  }
  SUBCASE("one draw at the kernel mode dominates") {
    SimulatedSet s;
    s.feature_names = {"a"};
    s.draws.append_row(std::vector<double>{1.0});
    s.simulated.append_row(std::vector<double>{0.0, 1.0, 2.0});
    for (int i = 0; i < 5; ++i) {
      s.draws.append_row(std::vector<double>{2.0});
      s.simulated.append_row(std::vector<double>{100.0, 200.0, 300.0 + i});
    }
    auto wp = weigh(s, std::vector<double>{0.0, 1.0, 2.0}, KernelDescriptor{.mu = 0.0, .s = 1.0});
    CHECK(wp.distances[0] == 0.0);
    CHECK(wp.norm_weights[0] == doctest::Approx(1.0));
    CHECK(wp.ess == doctest::Approx(1.0));
  }
  SUBCASE("invariants on a toy ensemble") {
    auto sims = normal_toy(2000, 15, 0, 1, 1, 5);
    const std::vector<double> obs(sims.simulated.row(0).begin(), sims.simulated.row(0).end());
    auto wp = weigh(sims, obs, {.mu = 0.0, .s = 0.3});
    const double total = std::accumulate(wp.norm_weights.begin(), wp.norm_weights.end(), 0.0);
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(wp.ess >= 1.0);
    CHECK(wp.ess <= 2000.0);
    std::vector<std::size_t> order(wp.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return wp.distances[a] < wp.distances[b]; });
    for (std::size_t k = 1; k < order.size(); ++k) CHECK(wp.raw_weights[order[k]] <= wp.raw_weights[order[k - 1]]);
    auto again = weigh(sims, obs, {.mu = 0.0, .s = 0.3});
    CHECK(again.norm_weights == wp.norm_weights);
    CHECK(again.ess == wp.ess);
    auto back = weighted_posterior_from_json(nlohmann::json::parse(to_json(wp).dump()));
    CHECK(back.norm_weights == wp.norm_weights);
    CHECK(back.draws == wp.draws);
    CHECK(back.ess == wp.ess);
  }
  SUBCASE("standardized distances") {
    auto sims = normal_toy(500, 15, 0, 1, 1, 6);
    const std::vector<double> obs(sims.simulated.row(3).begin(), sims.simulated.row(3).end());
    auto raw = summary_distances(sims, obs);
    auto scaled = summary_distances(sims, obs, {.standardize = true});
    CHECK(raw[3] == 0.0);
    CHECK(scaled[3] == 0.0);
    CHECK(raw != scaled);
  }
  SUBCASE("underflowing kernel") {
    auto sims = normal_toy(100, 5, 50, 1, 1, 7);
    CHECK_THROWS_WITH_AS(weigh(sims, std::vector<double>{0, 0.1, -0.1, 0.2}, {.mu = 0.0, .s = 0.01}),
                         doctest::Contains("AllZeroWeights"), Error);
    CHECK_THROWS_AS(weigh(sims, std::vector<double>{0, 1}, {.mu = 0.0, .s = 0.0}), Error);
  }
  SUBCASE("ESS rendering") {
    CHECK(format_ess(997.3, 1000) == "99.73%");
    CHECK(format_ess(1000, 1000) == "100.00%");
  }
}

TEST_CASE("indicator kernel reproduces rejection ABC") {
  auto sims = normal_toy(4000, 15, 0, 1, 1, 11);
  std::mt19937_64 g(1);
  std::normal_distribution<double> z;
  std::vector<double> obs(15);
  for (auto& v : obs) v = 0.4 + z(g);
  const double eps = 0.8;
  auto wp = weigh(
      sims, obs, [&](double d) { return d <= eps ? 1.0 : 0.0; }, {"indicator", 0.0, eps});
  // Classic rejection: keep the draws whose simulated summaries are close.
  const auto target = summarize(obs).as_array();
  double acc = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < sims.draws.rows(); ++i) {
    const auto s = summarize(sims.simulated.row(i)).as_array();
    double d2 = 0.0;
    for (std::size_t c = 0; c < 5; ++c) d2 += (s[c] - target[c]) * (s[c] - target[c]);
    if (std::sqrt(d2) <= eps) {
      acc += sims.draws(i, 0);
      ++kept;
    }
  }
  REQUIRE(kept > 20);
  CHECK(wp.ess == doctest::Approx(static_cast<double>(kept)));
  CHECK(posterior_summary(wp, "theta").mean == doctest::Approx(acc / static_cast<double>(kept)).epsilon(1e-12));
}

TEST_CASE("posterior_summary") {
  WeightedPosterior wp;
  wp.feature_names = {"a", "b"};
  std::mt19937_64 g(3);
  std::normal_distribution<double> z;
  const std::size_t n = 501;
  for (std::size_t i = 0; i < n; ++i) wp.draws.append_row(std::vector<double>{z(g), 1.0});
  wp.norm_weights.assign(n, 1.0 / n);
  wp.distances.assign(n, 0.0);

  SUBCASE("uniform weights match unweighted quantiles within one gap") {
    auto col = wp.draws.column(0);
    std::sort(col.begin(), col.end());
    auto s = posterior_summary(wp, "a");
    for (const auto& [p, v] : s.quantiles) {
      const double h = (static_cast<double>(n) - 1.0) * p;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(n - 1, lo + 2);
      CHECK(v >= col[lo == 0 ? 0 : lo - 1]);
      CHECK(v <= col[hi]);
    }
    CHECK(s.mean == doctest::Approx(stats::mean(wp.draws.column(0))).epsilon(1e-12));
    CHECK(s.ci95.lo <= s.ci50.lo);
    CHECK(s.ci50.lo <= s.median);
    CHECK(s.median <= s.ci50.hi);
    CHECK(s.ci50.hi <= s.ci95.hi);
  }
  SUBCASE("one-hot weight") {
    std::fill(wp.norm_weights.begin(), wp.norm_weights.end(), 0.0);
    wp.norm_weights[17] = 1.0;
    auto s = posterior_summary(wp, "a");
    for (const auto& [p, v] : s.quantiles) CHECK(v == wp.draws(17, 0));
    CHECK(s.mean == wp.draws(17, 0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(posterior_summary(wp, "zz"), doctest::Contains("UnknownFeature"), Error);
    const std::vector<double> bad{0.5, 1.0};
    CHECK_THROWS_AS(posterior_summary(wp, "a", bad), Error);
  }
}

TEST_CASE("forward validation") {
  SUBCASE("systematic resampling with uniform weights keeps every draw once") {
    std::vector<double> w(64, 1.0 / 64);
    Engine eng = make_engine(1, "t");
    auto idx = systematic_resample(w, 64, eng);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < 64; ++i) CHECK(idx[i] == i);
  }
  SUBCASE("resampling frequencies follow the weights") {
    std::vector<double> w{0.5, 0.25, 0.125, 0.125};
    Engine eng = make_engine(2, "t");
    auto idx = systematic_resample(w, 8, eng);
    std::vector<int> counts(4, 0);
    for (auto i : idx) ++counts[i];
    CHECK(counts == std::vector<int>{4, 2, 1, 1});
  }
  SUBCASE("point mass at the truth, exact model, no noise") {
    WeightedPosterior wp;
    wp.feature_names = {"a"};
    for (int i = 0; i < 20; ++i) wp.draws.append_row(std::vector<double>{2.0});
    wp.norm_weights.assign(20, 0.05);
    wp.distances.assign(20, 0.0);
    wp.ess = 20;
    auto forward = [](std::span<const double> x) { return 3.0 * x[0]; };
    auto rep = forward_validate(wp, forward, {.noise_scale = 0.0}, std::vector<double>(15, 6.0), 4);
    CHECK(rep.abs_mean_diff == 0.0);
    CHECK(rep.predicted.size() == 20);
    const double mass = std::accumulate(rep.histogram.observed.begin(), rep.histogram.observed.end(), 0.0) *
                        (rep.histogram.edges[1] - rep.histogram.edges[0]);
    CHECK(mass == doctest::Approx(1.0));
  }
}

TEST_CASE("dip statistic") {
  SUBCASE("evenly spaced points sit at the floor") {
    for (std::size_t n : {5U, 20U, 101U}) {
      std::vector<double> x(n);
      std::iota(x.begin(), x.end(), 0.0);
      CHECK(dip_statistic(x) == doctest::Approx(1.0 / (2.0 * static_cast<double>(n))));
    }
  }
  SUBCASE("two equal point masses") {
    std::vector<double> x(40, 0.0);
    std::fill(x.begin() + 20, x.end(), 1.0);
    CHECK(dip_statistic(x) == doctest::Approx(0.25));
  }
  SUBCASE("affine invariance") {
    std::mt19937_64 g(5);
    std::normal_distribution<double> z;
    std::vector<double> x(300);
    for (auto& v : x) v = z(g);
    std::sort(x.begin(), x.end());
    std::vector<double> y(x);
    for (auto& v : y) v = 3.0 * v - 7.0;
    CHECK(dip_statistic(x) == doctest::Approx(dip_statistic(y)).epsilon(1e-9));
    CHECK(dip_statistic(x) <= 0.25);
  }
}

TEST_CASE("sufficiency_check") {
  std::mt19937_64 g(8);
  std::normal_distribution<double> z;
  SUBCASE("unimodal symmetric") {
    std::vector<double> x(500);
    for (auto& v : x) v = z(g);
    auto r = sufficiency_check(x, summarize(x));
    CHECK_FALSE(r.multimodal);
    CHECK(r.variance_explained > 0.95);
  }
  SUBCASE("well-separated bimodal mixture") {
    std::vector<double> x(500);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 ? 4.0 : -4.0) + z(g);
    auto r = sufficiency_check(x, summarize(x));
    CHECK(r.multimodal);
    CHECK(r.dip > r.dip_threshold);
  }
  SUBCASE("constant sample") {
    std::vector<double> x(12, 3.0);
    auto r = sufficiency_check(x, summarize(x));
    CHECK_FALSE(r.multimodal);
    CHECK(r.variance_explained == 1.0);
  }
  SUBCASE("too few values") {
    std::vector<double> x(7, 1.0);
    CHECK_THROWS_AS(sufficiency_check(x, summarize(x)), Error);
  }
  SUBCASE("critical value tracks the uniform null") {
    // Large-n behaviour: sqrt(n) * dip_0.95 is close to 0.54.
    const double c = dip_critical_value(400);
    CHECK(c * std::sqrt(400.0) > 0.4);
    CHECK(c * std::sqrt(400.0) < 0.7);
  }
}
