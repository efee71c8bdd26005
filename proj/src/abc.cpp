#include "mixedabc/abc.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include "mixedabc/error.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/parallel.hpp"
#include "mixedabc/rng.hpp"
#include "mixedabc/stats.hpp"

namespace mixedabc::abc {

namespace {

double noise_draw(const NoiseModel& noise, Engine& eng) {
  if (noise.noise_scale == 0.0) return 0.0;
  return noise.noise_scale * distfit::draw(noise.family, noise.theta, eng);
}

Histogram histogram(std::span<const double> obs, std::span<const double> pred, std::size_t bins) {
  Histogram h;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : obs) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : pred) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + width * static_cast<double>(b));
  auto fill = [&](std::span<const double> xs) {
    std::vector<double> out(bins, 0.0);
    for (double v : xs) {
      auto b = static_cast<std::size_t>((v - lo) / width);
      out[std::min(b, bins - 1)] += 1.0;
    }
    for (auto& c : out) c /= static_cast<double>(xs.size()) * width;
    return out;
  };
  h.observed = fill(obs);
  h.predicted = fill(pred);
  return h;
}

}  // namespace

SummaryVector summarize(std::span<const double> sample) {
  if (sample.size() < 2) {
    throw Error(ErrorCode::TooFewValues, "summaries need at least 2 values, got " + std::to_string(sample.size()));
  }
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  return {stats::mean(s), stats::sample_sd(s), stats::quantile_sorted(s, 0.5), stats::quantile_sorted(s, 0.25),
          stats::quantile_sorted(s, 0.75)};
}

double logistic_pdf(double d, double mu, double s) {
  const double z = std::abs((d - mu) / s);
  const double e = std::exp(-z);
  return e / (s * (1.0 + e) * (1.0 + e));
}

SimulatedSet simulate_forward(const ForwardMap& forward, const std::vector<std::string>& feature_names,
                              const PriorSet& priors, const NoiseModel& noise, std::size_t n_sims,
                              std::size_t sims_per_draw, std::uint64_t seed) {
  if (n_sims < 1) throw Error(ErrorCode::InvalidConfig, "n_sims must be at least 1");
  if (sims_per_draw < 2) throw Error(ErrorCode::InvalidConfig, "sims_per_draw must be at least 2");
  if (!(noise.noise_scale >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_scale must be nonnegative");
  std::vector<const FeaturePrior*> by_column;
  for (const auto& name : feature_names) {
    auto it = priors.find(name);
    if (it == priors.end()) throw Error(ErrorCode::MissingPrior, "no prior for feature '" + name + "'");
    by_column.push_back(&it->second);
  }
  SimulatedSet out;
  out.feature_names = feature_names;
  out.draws = Matrix(n_sims, feature_names.size());
  out.simulated = Matrix(n_sims, sims_per_draw);
  parallel_for(n_sims, [&](std::size_t i) {
    Engine eng = make_engine(seed, "abc", i);
    auto x = out.draws.row(i);
    for (std::size_t j = 0; j < by_column.size(); ++j) {
      const auto& fp = *by_column[j];
      x[j] = fp.prior ? distfit::draw(fp.prior->family, fp.prior->theta(), eng) : fp.pinned;
    }
    const double y = forward(x);
    auto ys = out.simulated.row(i);
    for (auto& v : ys) v = y + noise_draw(noise, eng);
  });
  return out;
}

SimulatedSet simulate_forward(const surrogate::SurrogateModel& m, const PriorSet& priors, const NoiseModel& noise,
                              std::size_t n_sims, std::size_t sims_per_draw, std::uint64_t seed) {
  auto forward = [&m](std::span<const double> raw) { return m.predict(m.encode(raw)); };
  return simulate_forward(forward, m.feature_names, priors, noise, n_sims, sims_per_draw, seed);
}

std::vector<double> summary_distances(const SimulatedSet& sims, std::span<const double> obs,
                                      const WeighOptions& opts) {
  const auto target = summarize(obs).as_array();
  const std::size_t n = sims.simulated.rows();
  std::vector<std::array<double, 5>> s(n);
  parallel_for(n, [&](std::size_t i) { s[i] = summarize(sims.simulated.row(i)).as_array(); });

  std::array<double, 5> scale{1, 1, 1, 1, 1};
  if (opts.standardize) {
    for (std::size_t c = 0; c < 5; ++c) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = s[i][c];
      const double sd = stats::population_sd(col);
      if (sd > 0.0) scale[c] = sd;
    }
  }
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      const double diff = (s[i][c] - target[c]) / scale[c];
      acc += diff * diff;
    }
    d[i] = std::sqrt(acc);
  }
  return d;
}

WeightedPosterior weigh(const SimulatedSet& sims, std::span<const double> obs,
                        const std::function<double(double)>& kernel_fn, const KernelDescriptor& kernel,
                        const WeighOptions& opts) {
  WeightedPosterior wp;
  wp.observed = summarize(obs);
  wp.feature_names = sims.feature_names;
  wp.draws = sims.draws;
  wp.kernel = kernel;
  wp.distances = summary_distances(sims, obs, opts);
  wp.raw_weights.resize(wp.size());
  double total = 0.0;
  for (std::size_t i = 0; i < wp.size(); ++i) {
    wp.raw_weights[i] = kernel_fn(wp.distances[i]);
    total += wp.raw_weights[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    const auto [lo, hi] = std::minmax_element(wp.distances.begin(), wp.distances.end());
    throw Error(ErrorCode::AllZeroWeights, "every kernel weight is zero (distances " + io::format_double(*lo) +
                                               " to " + io::format_double(*hi) + ")");
  }
  wp.norm_weights.resize(wp.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < wp.size(); ++i) {
    wp.norm_weights[i] = wp.raw_weights[i] / total;
    sq += wp.norm_weights[i] * wp.norm_weights[i];
  }
  wp.ess = std::clamp(1.0 / sq, 1.0, static_cast<double>(wp.size()));
  return wp;
}

WeightedPosterior weigh(const SimulatedSet& sims, std::span<const double> obs, const KernelDescriptor& kernel,
                        const WeighOptions& opts) {
  if (!(kernel.s > 0.0) || !std::isfinite(kernel.s)) {
    throw Error(ErrorCode::InvalidConfig, "kernel scale must be positive");
  }
  if (kernel.family != "logistic_pdf") throw Error(ErrorCode::InvalidConfig, "unknown kernel '" + kernel.family + "'");
  return weigh(
      sims, obs, [&](double d) { return logistic_pdf(d, kernel.mu, kernel.s); }, kernel, opts);
}

std::string format_ess(double ess, std::size_t n) {
  return io::format_fixed(100.0 * ess / static_cast<double>(n), 2) + "%";
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double p) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double cum = 0.0;
  for (auto i : order) {
    cum += weights[i] / total;
    if (cum >= p - 1e-12) return values[i];
  }
  return values[order.back()];
}

PosteriorSummary posterior_summary(const WeightedPosterior& wp, const std::string& feature,
                                   std::span<const double> levels) {
  auto it = std::find(wp.feature_names.begin(), wp.feature_names.end(), feature);
  if (it == wp.feature_names.end()) throw Error(ErrorCode::UnknownFeature, "'" + feature + "' is not a posterior feature");
  if (wp.size() == 0) throw Error(ErrorCode::InvalidConfig, "empty posterior");
  const auto col = wp.draws.column(static_cast<std::size_t>(it - wp.feature_names.begin()));
  static constexpr double kDefault[] = {0.025, 0.25, 0.5, 0.75, 0.975};
  if (levels.empty()) levels = kDefault;

  PosteriorSummary s;
  s.feature = feature;
  for (std::size_t i = 0; i < col.size(); ++i) s.mean += wp.norm_weights[i] * col[i];
  auto q = [&](double p) { return weighted_quantile(col, wp.norm_weights, p); };
  s.median = q(0.5);
  s.ci95 = {q(0.025), q(0.975)};
  s.ci50 = {q(0.25), q(0.75)};
  for (double p : levels) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidConfig, "quantile levels must lie in (0, 1)");
    s.quantiles.emplace_back(p, q(p));
  }
  return s;
}

std::vector<std::size_t> systematic_resample(std::span<const double> norm_weights, std::size_t n, Engine& eng) {
  const double total = std::accumulate(norm_weights.begin(), norm_weights.end(), 0.0);
  const double u = uniform_open01(eng);
  std::vector<std::size_t> out;
  out.reserve(n);
  double cum = norm_weights.empty() ? 0.0 : norm_weights[0] / total;
  std::size_t i = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double pos = (u + static_cast<double>(j)) / static_cast<double>(n);
    while (pos > cum && i + 1 < norm_weights.size()) cum += norm_weights[++i] / total;
    out.push_back(i);
  }
  return out;
}

ValidationReport forward_validate(const WeightedPosterior& wp, const ForwardMap& forward, const NoiseModel& noise,
                                  std::span<const double> obs, std::uint64_t seed) {
  ValidationReport r;
  Engine eng = make_engine(seed, "resample");
  r.resampled = systematic_resample(wp.norm_weights, wp.size(), eng);
  r.predicted.resize(r.resampled.size());
  parallel_for(r.resampled.size(), [&](std::size_t j) {
    Engine e = make_engine(seed, "forward", j);
    r.predicted[j] = forward(wp.draws.row(r.resampled[j])) + noise_draw(noise, e);
  });
  r.observed.assign(obs.begin(), obs.end());
  r.observed_mean = stats::mean(r.observed);
  r.observed_sd = stats::sample_sd(r.observed);
  r.predicted_mean = stats::mean(r.predicted);
  r.predicted_sd = stats::sample_sd(r.predicted);
  r.abs_mean_diff = std::abs(r.observed_mean - r.predicted_mean);
  r.histogram = histogram(r.observed, r.predicted, 30);
  return r;
}

ValidationReport forward_validate(const WeightedPosterior& wp, const surrogate::SurrogateModel& m,
                                  const NoiseModel& noise, std::span<const double> obs, std::uint64_t seed) {
  auto forward = [&m](std::span<const double> raw) { return m.predict(m.encode(raw)); };
  return forward_validate(wp, forward, noise, obs, seed);
}

// Hartigan & Hartigan (1985), AS 217, in the formulation used by the R
// diptest package. Works on 1-based indices throughout; the running dip is
// kept in units of 1/(2n).
double dip_statistic(std::span<const double> sorted) {
  const auto n = static_cast<long>(sorted.size());
  if (n < 2 || sorted.front() == sorted.back()) return n > 0 ? 1.0 / (2.0 * static_cast<double>(n)) : 0.0;
  auto x = [&](long i) { return sorted[static_cast<std::size_t>(i - 1)]; };
  std::vector<long> mn(static_cast<std::size_t>(n + 1));
  std::vector<long> mj(static_cast<std::size_t>(n + 1));
  std::vector<long> gcm(static_cast<std::size_t>(n + 1));
  std::vector<long> lcm(static_cast<std::size_t>(n + 1));
  auto at = [](std::vector<long>& v, long i) -> long& { return v[static_cast<std::size_t>(i)]; };

  at(mn, 1) = 1;
  for (long j = 2; j <= n; ++j) {
    at(mn, j) = j - 1;
    for (;;) {
      const long mnj = at(mn, j);
      const long mnmnj = at(mn, mnj);
      if (mnj == 1 || (x(j) - x(mnj)) * static_cast<double>(mnj - mnmnj) <
                          (x(mnj) - x(mnmnj)) * static_cast<double>(j - mnj)) {
        break;
      }
      at(mn, j) = mnmnj;
    }
  }
  at(mj, n) = n;
  for (long k = n - 1; k >= 1; --k) {
    at(mj, k) = k + 1;
    for (;;) {
      const long mjk = at(mj, k);
      const long mjmjk = at(mj, mjk);
      if (mjk == n || (x(k) - x(mjk)) * static_cast<double>(mjk - mjmjk) <
                          (x(mjk) - x(mjmjk)) * static_cast<double>(k - mjk)) {
        break;
      }
      at(mj, k) = mjmjk;
    }
  }

  long low = 1;
  long high = n;
  double dip = 1.0;
  for (;;) {
    at(gcm, 1) = high;
    long i = 1;
    for (; at(gcm, i) > low; ++i) at(gcm, i + 1) = at(mn, at(gcm, i));
    const long l_gcm = i;
    long ig = l_gcm;
    long ix = ig - 1;

    at(lcm, 1) = low;
    for (i = 1; at(lcm, i) < high; ++i) at(lcm, i + 1) = at(mj, at(lcm, i));
    const long l_lcm = i;
    long ih = l_lcm;
    long iv = 2;

    double d = 0.0;
    if (l_gcm != 2 || l_lcm != 2) {
      do {
        const long gcmix = at(gcm, ix);
        const long lcmiv = at(lcm, iv);
        if (gcmix > lcmiv) {
          const long gcmi1 = at(gcm, ix + 1);
          const double dx = static_cast<double>(lcmiv - gcmi1 + 1) -
                            (x(lcmiv) - x(gcmi1)) * static_cast<double>(gcmix - gcmi1) / (x(gcmix) - x(gcmi1));
          ++iv;
          if (dx >= d) {
            d = dx;
            ig = ix + 1;
            ih = iv - 1;
          }
        } else {
          const long lcmiv1 = at(lcm, iv - 1);
          const double dx = (x(gcmix) - x(lcmiv1)) * static_cast<double>(lcmiv - lcmiv1) / (x(lcmiv) - x(lcmiv1)) -
                            static_cast<double>(gcmix - lcmiv1 - 1);
          --ix;
          if (dx >= d) {
            d = dx;
            ig = ix + 1;
            ih = iv;
          }
        }
        if (ix < 1) ix = 1;
        if (iv > l_lcm) iv = l_lcm;
      } while (at(gcm, ix) != at(lcm, iv));
    } else {
      d = 1.0;
    }

    if (d < dip) break;

    double dip_l = 0.0;
    for (long j = ig; j < l_gcm; ++j) {
      double max_t = 1.0;
      const long jb = at(gcm, j + 1);
      const long je = at(gcm, j);
      if (je - jb > 1 && x(je) != x(jb)) {
        const double c = static_cast<double>(je - jb) / (x(je) - x(jb));
        for (long jj = jb; jj <= je; ++jj) {
          const double t = static_cast<double>(jj - jb + 1) - (x(jj) - x(jb)) * c;
          max_t = std::max(max_t, t);
        }
      }
      dip_l = std::max(dip_l, max_t);
    }
    double dip_u = 0.0;
    for (long j = ih; j < l_lcm; ++j) {
      double max_t = 1.0;
      const long jb = at(lcm, j);
      const long je = at(lcm, j + 1);
      if (je - jb > 1 && x(je) != x(jb)) {
        const double c = static_cast<double>(je - jb) / (x(je) - x(jb));
        for (long jj = jb; jj <= je; ++jj) {
          const double t = (x(jj) - x(jb)) * c - static_cast<double>(jj - jb - 1);
          max_t = std::max(max_t, t);
        }
      }
      dip_u = std::max(dip_u, max_t);
    }
    dip = std::max({dip, dip_l, dip_u});

    if (low == at(gcm, ig) && high == at(lcm, ih)) break;
    low = at(gcm, ig);
    high = at(lcm, ih);
  }
  return dip / (2.0 * static_cast<double>(n));
}

double dip_critical_value(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, double> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  constexpr std::size_t kReplicates = 400;
  std::vector<double> dips(kReplicates);
  for (std::size_t r = 0; r < kReplicates; ++r) {
    Engine eng = make_engine(n, "dip-null", r);
    std::vector<double> u(n);
    for (auto& v : u) v = uniform_open01(eng);
    std::sort(u.begin(), u.end());
    dips[r] = dip_statistic(u);
  }
  const double q = stats::quantile(dips, 0.95);
  std::lock_guard lock(mu);
  cache[n] = q;
  return q;
}

SufficiencyReport sufficiency_check(std::span<const double> obs, const SummaryVector& st) {
  if (obs.size() < 8) throw Error(ErrorCode::TooFewValues, "sufficiency check needs at least 8 values");
  SufficiencyReport rep;
  rep.n = obs.size();
  std::vector<double> x(obs.begin(), obs.end());
  std::sort(x.begin(), x.end());
  rep.dip = dip_statistic(x);
  rep.dip_threshold = dip_critical_value(x.size());
  const double xbar = stats::mean(x);
  double sst = 0.0;
  for (double v : x) sst += (v - xbar) * (v - xbar);
  if (sst == 0.0) {
    rep.variance_explained = 1.0;
    rep.multimodal = false;
    return rep;
  }
  rep.multimodal = rep.dip > rep.dip_threshold;

  // Tail scales: the mean fixes bU - bL, the second moment fixes bL.
  const double q1 = st.q1;
  const double md = st.median;
  const double q3 = st.q3;
  const double mid_mean = 0.125 * (q1 + md) + 0.125 * (md + q3);
  const double dd = 4.0 * (st.mean - mid_mean) - q1 - q3;
  const double mid_m2 = (q1 * q1 + q1 * md + md * md) / 12.0 + (md * md + md * q3 + q3 * q3) / 12.0;
  const double b = 0.5 * (q3 - q1) + dd;
  const double c0 = 0.25 * q1 * q1 + mid_m2 + 0.25 * q3 * q3 + 0.5 * q3 * dd + 0.5 * dd * dd;
  const double target = st.sd * st.sd + st.mean * st.mean;
  const double lo = std::max(0.0, -dd);
  const double disc = b * b - 4.0 * (c0 - target);
  const double bl = disc >= 0.0 ? std::max(lo, 0.5 * (-b + std::sqrt(disc))) : std::max(lo, -0.5 * b);
  const double bu = bl + dd;

  auto quantile = [&](double p) {
    if (p < 0.25) return q1 - bl * std::log(0.25 / p);
    if (p <= 0.5) return q1 + (p - 0.25) / 0.25 * (md - q1);
    if (p <= 0.75) return md + (p - 0.5) / 0.25 * (q3 - md);
    return q3 + bu * std::log(0.25 / (1.0 - p));
  };
  double sse = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = x[i] - quantile((static_cast<double>(i) + 0.5) / n);
    sse += e * e;
  }
  rep.variance_explained = std::clamp(1.0 - sse / sst, 0.0, 1.0);
  return rep;
}

nlohmann::json to_json(const SummaryVector& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}};
}

nlohmann::json to_json(const KernelDescriptor& k) { return {{"family", k.family}, {"mu", k.mu}, {"s", k.s}}; }

nlohmann::json to_json(const NoiseModel& n) {
  return {{"family", std::string(distfit::family_name(n.family))}, {"theta", n.theta}, {"noise_scale", n.noise_scale}};
}

nlohmann::json to_json(const WeightedPosterior& wp) {
  nlohmann::json draws = nlohmann::json::array();
  for (std::size_t i = 0; i < wp.draws.rows(); ++i) {
    draws.push_back(std::vector<double>(wp.draws.row(i).begin(), wp.draws.row(i).end()));
  }
  return {{"feature_names", wp.feature_names}, {"draws", draws},
          {"raw_weights", wp.raw_weights},     {"norm_weights", wp.norm_weights},
          {"distances", wp.distances},         {"ess", wp.ess},
          {"kernel", to_json(wp.kernel)},      {"observed", to_json(wp.observed)}};
}

WeightedPosterior weighted_posterior_from_json(const nlohmann::json& j) {
  try {
    WeightedPosterior wp;
    wp.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& row : j.at("draws")) wp.draws.append_row(row.get<std::vector<double>>());
    wp.raw_weights = j.at("raw_weights").get<std::vector<double>>();
    wp.norm_weights = j.at("norm_weights").get<std::vector<double>>();
    wp.distances = j.at("distances").get<std::vector<double>>();
    wp.ess = j.at("ess").get<double>();
    const auto& k = j.at("kernel");
    wp.kernel = {k.at("family").get<std::string>(), k.at("mu").get<double>(), k.at("s").get<double>()};
    const auto& o = j.at("observed");
    wp.observed = {o.at("mean").get<double>(), o.at("sd").get<double>(), o.at("median").get<double>(),
                   o.at("q1").get<double>(), o.at("q3").get<double>()};
    return wp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("weighted posterior: ") + e.what());
  }
}

nlohmann::json to_json(const PosteriorSummary& s) {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& [p, v] : s.quantiles) q.push_back({{"level", p}, {"value", v}});
  return {{"feature", s.feature},
          {"mean", s.mean},
          {"median", s.median},
          {"ci95", {s.ci95.lo, s.ci95.hi}},
          {"ci50", {s.ci50.lo, s.ci50.hi}},
          {"quantiles", q}};
}

nlohmann::json to_json(const ValidationReport& r) {
  return {{"observed_mean", r.observed_mean},
          {"observed_sd", r.observed_sd},
          {"predicted_mean", r.predicted_mean},
          {"predicted_sd", r.predicted_sd},
          {"abs_mean_diff", r.abs_mean_diff},
          {"n_observed", r.observed.size()},
          {"n_predicted", r.predicted.size()},
          {"histogram",
           {{"edges", r.histogram.edges}, {"observed", r.histogram.observed}, {"predicted", r.histogram.predicted}}}};
}

nlohmann::json to_json(const SufficiencyReport& r) {
  return {{"n", r.n},
          {"variance_explained", r.variance_explained},
          {"dip", r.dip},
          {"dip_threshold", r.dip_threshold},
          {"multimodal", r.multimodal}};
}

}  // namespace mixedabc::abc
