#include "mixedabc/distfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "mixedabc/error.hpp"
#include "mixedabc/parallel.hpp"
#include "mixedabc/rng.hpp"
#include "mixedabc/stats.hpp"
#include "optimize.hpp"

namespace mixedabc::distfit {

namespace {

constexpr std::size_t kMinSample = 8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_integer(double x) { return std::isfinite(x) && x == std::floor(x); }

bool all_integer(std::span<const double> s) {
  return std::all_of(s.begin(), s.end(), is_integer);
}

/// Values with their multiplicities; lets count-data likelihoods touch each
/// distinct value once.
struct Tally {
  std::vector<double> value;
  std::vector<double> count;
  double n = 0.0;
  double sum = 0.0;
};

Tally tally(std::span<const double> sample) {
  std::map<double, double> m;
  for (double x : sample) m[x] += 1.0;
  Tally t;
  for (auto [v, c] : m) {
    t.value.push_back(v);
    t.count.push_back(c);
    t.sum += v * c;
  }
  t.n = static_cast<double>(sample.size());
  return t;
}

/// Log-likelihood evaluator with sufficient-statistic shortcuts for the
/// families that have them. MCMC calls this tens of thousands of times.
class LogLik {
 public:
  LogLik(Family f, std::span<const double> sample) : f_(f), sample_(sample) {
    n_ = static_cast<double>(sample.size());
    switch (f) {
      case Family::Normal:
        mean_ = stats::mean(sample);
        for (double x : sample) ss_ += (x - mean_) * (x - mean_);
        break;
      case Family::Binomial:
        ones_ = std::accumulate(sample.begin(), sample.end(), 0.0);
        break;
      case Family::DiscreteUniform: {
        const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
        min_ = *lo;
        max_ = *hi;
        break;
      }
      case Family::NegativeBinomial:
        tally_ = tally(sample);
        for (std::size_t i = 0; i < tally_.value.size(); ++i) {
          lfact_ += tally_.count[i] * std::lgamma(tally_.value[i] + 1.0);
        }
        break;
      default: break;
    }
  }

  double operator()(std::span<const double> theta) const {
    switch (f_) {
      case Family::Normal: {
        const double mu = theta[0];
        const double sigma = theta[1];
        if (!(sigma > 0.0)) return kNegInf;
        const double ss = ss_ + n_ * (mean_ - mu) * (mean_ - mu);
        return -0.5 * ss / (sigma * sigma) - n_ * std::log(sigma) -
               0.5 * n_ * std::log(2.0 * std::numbers::pi);
      }
      case Family::Binomial: {
        const double p = theta[0];
        if (!(p >= 0.0 && p <= 1.0)) return kNegInf;
        double ll = 0.0;
        if (ones_ > 0.0) ll += p > 0.0 ? ones_ * std::log(p) : kNegInf;
        if (n_ - ones_ > 0.0) ll += p < 1.0 ? (n_ - ones_) * std::log1p(-p) : kNegInf;
        return ll;
      }
      case Family::DiscreteUniform: {
        const double a = theta[0];
        const double b = theta[1];
        if (!(a <= min_ && b >= max_)) return kNegInf;
        return -n_ * std::log(b - a + 1.0);
      }
      case Family::NegativeBinomial: {
        const double r = theta[0];
        const double p = theta[1];
        if (!(r > 0.0) || !(p > 0.0) || p > 1.0) return kNegInf;
        if (p == 1.0) return tally_.sum == 0.0 ? 0.0 : kNegInf;
        double ll = -n_ * std::lgamma(r) - lfact_ + n_ * r * std::log(p) +
                    tally_.sum * std::log1p(-p);
        for (std::size_t i = 0; i < tally_.value.size(); ++i) {
          ll += tally_.count[i] * std::lgamma(tally_.value[i] + r);
        }
        return ll;
      }
      default: return log_likelihood(f_, theta, sample_);
    }
  }

 private:
  Family f_;
  std::span<const double> sample_;
  double n_ = 0.0;
  double mean_ = 0.0;
  double ss_ = 0.0;
  double ones_ = 0.0;
  double min_ = 0.0;
  double max_ = 0.0;
  double lfact_ = 0.0;
  Tally tally_;
};

FitResult fit_location_scale(Family f, std::span<const double> sample) {
  const double med = stats::median(sample);
  double iqr = stats::quantile(sample, 0.75) - stats::quantile(sample, 0.25);
  if (!(iqr > 0.0)) iqr = 1.349 * stats::sample_sd(sample);
  // IQR of Logistic(mu, s) is 2 s ln 3; of Cauchy(x0, g) it is 2 g.
  const double scale0 = f == Family::Logistic ? iqr / (2.0 * std::log(3.0)) : iqr / 2.0;
  const LogLik ll(f, sample);
  // Optimize over (mu / scale0, log s) so both coordinates are O(1).
  auto nll = [&](const std::vector<double>& v) {
    const double theta[2] = {med + v[0] * scale0, scale0 * std::exp(v[1])};
    const double l = ll(theta);
    return std::isfinite(l) ? -l : std::numeric_limits<double>::max();
  };
  detail::NelderMeadOptions opt;
  opt.initial_step = 0.2;
  auto res = detail::nelder_mead(nll, {0.0, 0.0}, opt);
  // A restart from the converged point guards against early collapse.
  res = detail::nelder_mead(nll, res.x, opt);
  FitResult out;
  out.theta = {med + res.x[0] * scale0, scale0 * std::exp(res.x[1])};
  out.loglik = ll(out.theta);
  return out;
}

FitResult fit_negative_binomial(std::span<const double> sample) {
  const Tally t = tally(sample);
  const double xbar = t.sum / t.n;
  if (xbar == 0.0) return {{1.0, 1.0}, 0.0};
  const LogLik ll(Family::NegativeBinomial, sample);
  auto profile = [&](double log_r) {
    const double r = std::exp(log_r);
    const double theta[2] = {r, r / (r + xbar)};
    return -ll(theta);
  };
  constexpr double kLo = -12.0;
  constexpr double kHi = 20.0;
  double log_r = detail::golden_section(profile, kLo, kHi, 1e-10);
  double r = std::exp(log_r);

  // Newton polish on the profile score in r (digamma form).
  auto score = [&](double rr) {
    double g = -t.n * boost::math::digamma(rr) + t.n * std::log(rr / (rr + xbar));
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      g += t.count[i] * boost::math::digamma(t.value[i] + rr);
    }
    return g;
  };
  auto score_dr = [&](double rr) {
    double h = -t.n * boost::math::trigamma(rr) + t.n * xbar / (rr * (rr + xbar));
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      h += t.count[i] * boost::math::trigamma(t.value[i] + rr);
    }
    return h;
  };
  if (log_r > kLo + 1e-3 && log_r < kHi - 1e-3) {
    for (int i = 0; i < 20; ++i) {
      const double g = score(r);
      const double h = score_dr(r);
      if (!(h < 0.0)) break;
      const double next = r - g / h;
      if (!(next > 0.0)) break;
      const double step = std::abs(next - r);
      r = next;
      if (step <= 1e-15 * r) break;
    }
  }
  FitResult out;
  out.theta = {r, r / (r + xbar)};
  out.loglik = ll(out.theta);
  return out;
}

// Parameter transforms for the sampler.
enum class Tx { Identity, Log, Logit };

std::vector<Tx> transforms(Family f) {
  switch (f) {
    case Family::Normal:
    case Family::Logistic:
    case Family::Cauchy: return {Tx::Identity, Tx::Log};
    case Family::NegativeBinomial: return {Tx::Log, Tx::Logit};
    case Family::Binomial: return {Tx::Logit};
    case Family::DiscreteUniform: return {Tx::Identity, Tx::Identity};
  }
  return {};
}

double forward(Tx t, double v) {
  switch (t) {
    case Tx::Identity: return v;
    case Tx::Log: return std::log(v);
    case Tx::Logit: return std::log(v) - std::log1p(-v);
  }
  return v;
}

double backward(Tx t, double v) {
  switch (t) {
    case Tx::Identity: return v;
    case Tx::Log: return std::exp(v);
    case Tx::Logit: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

// Bernoulli components come from short bit columns and have a closed form,
// so they only need one value.
std::size_t min_sample(Family f) { return f == Family::Binomial ? 1 : kMinSample; }

void check_sample(Family f, std::span<const double> sample) {
  if (sample.size() < min_sample(f)) {
    throw Error(ErrorCode::TooFewValues, "fitting " + std::string(family_name(f)) + " needs at least " +
                                             std::to_string(min_sample(f)) + " values, got " +
                                             std::to_string(sample.size()));
  }
  if (!supports(f, sample)) {
    throw Error(ErrorCode::SupportViolation,
                "sample lies outside the support of " + std::string(family_name(f)));
  }
}

}  // namespace

bool supports(Family f, std::span<const double> sample) {
  switch (f) {
    case Family::Normal:
    case Family::Logistic:
    case Family::Cauchy:
      return std::all_of(sample.begin(), sample.end(), [](double x) { return std::isfinite(x); });
    case Family::NegativeBinomial:
      return std::all_of(sample.begin(), sample.end(),
                         [](double x) { return is_integer(x) && x >= 0.0; });
    case Family::Binomial:
      return std::all_of(sample.begin(), sample.end(), [](double x) { return x == 0.0 || x == 1.0; });
    case Family::DiscreteUniform: return all_integer(sample);
  }
  return false;
}

FitResult fit_family(Family f, std::span<const double> sample) {
  check_sample(f, sample);
  switch (f) {
    case Family::Normal:
    case Family::Logistic:
    case Family::Cauchy: {
      const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
      if (*lo == *hi) {
        throw Error(ErrorCode::DegenerateSample,
                    "all values equal; " + std::string(family_name(f)) + " scale is not identifiable");
      }
      if (f != Family::Normal) return fit_location_scale(f, sample);
      FitResult out;
      out.theta = {stats::mean(sample), stats::population_sd(sample)};
      out.loglik = LogLik(f, sample)(out.theta);
      return out;
    }
    case Family::NegativeBinomial: return fit_negative_binomial(sample);
    case Family::Binomial: {
      FitResult out;
      out.theta = {stats::mean(sample)};
      out.loglik = LogLik(f, sample)(out.theta);
      return out;
    }
    case Family::DiscreteUniform: {
      const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
      FitResult out;
      out.theta = {*lo, *hi};
      out.loglik = LogLik(f, sample)(out.theta);
      return out;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown family");
}

std::vector<double> model_probabilities(std::span<const double> aics) {
  if (aics.empty()) return {};
  const double amin = *std::min_element(aics.begin(), aics.end());
  std::vector<double> p(aics.size());
  double total = 0.0;
  for (std::size_t i = 0; i < aics.size(); ++i) {
    p[i] = std::exp(-(aics[i] - amin) / 2.0);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::vector<FittedPrior> select_model(std::span<const double> sample,
                                      std::span<const Family> candidates) {
  std::vector<Family> valid;
  for (Family f : candidates) {
    if (sample.size() >= min_sample(f) && supports(f, sample) &&
        std::find(valid.begin(), valid.end(), f) == valid.end()) {
      valid.push_back(f);
    }
  }
  const bool integer_sample = all_integer(sample);
  std::vector<Family> same_class;
  for (Family f : valid) {
    if (is_discrete(f) == integer_sample) same_class.push_back(f);
  }
  if (!same_class.empty()) valid = same_class;
  if (valid.empty()) {
    throw Error(ErrorCode::NoValidCandidate, "no candidate family supports the sample");
  }

  std::vector<std::optional<FittedPrior>> fits(valid.size());
  parallel_for(valid.size(), [&](std::size_t i) {
    try {
      const FitResult r = fit_family(valid[i], sample);
      FittedPrior fp;
      fp.family = valid[i];
      fp.theta_hat = r.theta;
      fp.loglik = r.loglik;
      fp.aic = -2.0 * r.loglik + 2.0 * n_params(valid[i]);
      fits[i] = std::move(fp);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateSample) throw;
    }
  });
  std::vector<FittedPrior> out;
  for (auto& f : fits) {
    if (f && std::isfinite(f->aic)) out.push_back(std::move(*f));
  }
  if (out.empty()) {
    throw Error(ErrorCode::NoValidCandidate, "every admissible candidate is degenerate on the sample");
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FittedPrior& a, const FittedPrior& b) { return a.aic < b.aic; });
  std::vector<double> aics;
  for (const auto& fp : out) aics.push_back(fp.aic);
  const auto probs = model_probabilities(aics);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].model_prob = probs[i];
  return out;
}

std::vector<double> default_proposal_scales(Family f, std::span<const double> sample,
                                            std::span<const double> theta_hat) {
  const auto tx = transforms(f);
  const std::size_t k = tx.size();
  const double factor = 2.38 / std::sqrt(static_cast<double>(k));
  std::vector<double> scales(k, 0.1);
  if (f == Family::DiscreteUniform) {
    // The posterior of each bound decays like (width + t)^-n away from the
    // sample extreme, an exponential with scale about width / n.
    const double width = theta_hat[1] - theta_hat[0] + 1.0;
    std::fill(scales.begin(), scales.end(), factor * width / static_cast<double>(sample.size()));
    return scales;
  }
  const LogLik ll(f, sample);
  std::vector<double> phi(k);
  for (std::size_t i = 0; i < k; ++i) phi[i] = forward(tx[i], theta_hat[i]);
  auto eval = [&](const std::vector<double>& p) {
    std::vector<double> th(k);
    for (std::size_t i = 0; i < k; ++i) th[i] = backward(tx[i], p[i]);
    return ll(th);
  };
  const double l0 = eval(phi);
  for (std::size_t i = 0; i < k; ++i) {
    const double h = 1e-4 * (1.0 + std::abs(phi[i]));
    auto up = phi;
    auto dn = phi;
    up[i] += h;
    dn[i] -= h;
    const double curv = (eval(up) - 2.0 * l0 + eval(dn)) / (h * h);
    if (std::isfinite(curv) && curv < 0.0) scales[i] = factor / std::sqrt(-curv);
  }
  return scales;
}

ChainSummary mcmc_posterior(Family f, std::span<const double> sample,
                            std::span<const double> theta_hat, const McmcConfig& cfg) {
  if (cfg.burn_in >= cfg.n_iter) {
    throw Error(ErrorCode::InvalidConfig, "burn_in must be smaller than n_iter");
  }
  const auto tx = transforms(f);
  const std::size_t k = tx.size();
  std::vector<double> scales = cfg.proposal_scales.empty()
                                   ? default_proposal_scales(f, sample, theta_hat)
                                   : cfg.proposal_scales;
  if (scales.size() != k || !std::all_of(scales.begin(), scales.end(), [](double s) { return s > 0.0; })) {
    throw Error(ErrorCode::InvalidConfig, "proposal scales must be positive, one per parameter");
  }

  const LogLik ll(f, sample);
  std::vector<double> phi(k);
  std::vector<double> theta(k);
  for (std::size_t i = 0; i < k; ++i) {
    phi[i] = forward(tx[i], theta_hat[i]);
    theta[i] = theta_hat[i];
  }
  double cur = ll(theta);
  if (!std::isfinite(cur)) {
    throw Error(ErrorCode::ChainDiverged, "log-likelihood is not finite at the starting point");
  }

  Engine eng = make_engine(cfg.seed, "mcmc");
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t kept = cfg.n_iter - cfg.burn_in;
  ChainSummary out;
  out.draws = Matrix(kept, k);
  std::vector<double> prop_phi(k);
  std::vector<double> prop(k);
  std::size_t accepted = 0;
  std::size_t nonfinite_run = 0;
  for (std::size_t it = 0; it < cfg.n_iter; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      prop_phi[i] = phi[i] + scales[i] * normal(eng);
      prop[i] = backward(tx[i], prop_phi[i]);
    }
    const double lp = ll(prop);
    const double log_u = std::log(uniform_open01(eng));
    if (std::isfinite(lp)) {
      nonfinite_run = 0;
      if (log_u < lp - cur) {
        phi = prop_phi;
        theta = prop;
        cur = lp;
        ++accepted;
      }
    } else if (++nonfinite_run >= 100) {
      throw Error(ErrorCode::ChainDiverged,
                  "100 consecutive proposals with non-finite log-likelihood for " +
                      std::string(family_name(f)));
    }
    if (it >= cfg.burn_in) {
      auto row = out.draws.row(it - cfg.burn_in);
      std::copy(theta.begin(), theta.end(), row.begin());
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(cfg.n_iter);
  out.n_kept = kept;
  out.mean.resize(k);
  out.sd.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto col = out.draws.column(i);
    out.mean[i] = stats::mean(col);
    out.sd[i] = stats::sample_sd(col);
  }
  return out;
}

ChainSummary mcmc_posterior(Family f, std::span<const double> sample, const McmcConfig& cfg) {
  const FitResult r = fit_family(f, sample);
  return mcmc_posterior(f, sample, r.theta, cfg);
}

FittedPrior fit_prior(std::span<const double> sample, std::span<const Family> candidates,
                      const McmcConfig& cfg, std::vector<FittedPrior>* all) {
  auto fits = select_model(sample, candidates);
  FittedPrior best = fits.front();
  const bool boundary = best.family == Family::Binomial &&
                        (best.theta_hat[0] <= 0.0 || best.theta_hat[0] >= 1.0);
  if (!boundary) best.chain = mcmc_posterior(best.family, sample, best.theta_hat, cfg);
  if (all) *all = std::move(fits);
  return best;
}

std::vector<double> sample_prior(const FittedPrior& fp, std::size_t n, std::uint64_t seed) {
  Engine eng = make_engine(seed, "prior");
  return draw_n(fp.family, fp.theta(), n, eng);
}

nlohmann::json to_json(const FittedPrior& fp) {
  nlohmann::json j;
  j["family"] = std::string(family_name(fp.family));
  j["theta_hat"] = fp.theta_hat;
  j["theta"] = fp.theta();
  j["loglik"] = fp.loglik;
  j["aic"] = fp.aic;
  j["model_prob"] = fp.model_prob;
  if (fp.chain) {
    j["chain"] = {{"mean", fp.chain->mean},
                  {"sd", fp.chain->sd},
                  {"acceptance_rate", fp.chain->acceptance_rate},
                  {"n_kept", fp.chain->n_kept}};
  } else {
    j["chain"] = nullptr;
  }
  return j;
}

FittedPrior fitted_prior_from_json(const nlohmann::json& j) {
  try {
    FittedPrior fp;
    fp.family = family_from_name(j.at("family").get<std::string>());
    fp.theta_hat = j.at("theta_hat").get<std::vector<double>>();
    fp.loglik = j.at("loglik").get<double>();
    fp.aic = j.at("aic").get<double>();
    fp.model_prob = j.at("model_prob").get<double>();
    if (j.contains("chain") && !j["chain"].is_null()) {
      ChainSummary c;
      c.mean = j["chain"].at("mean").get<std::vector<double>>();
      c.sd = j["chain"].at("sd").get<std::vector<double>>();
      c.acceptance_rate = j["chain"].at("acceptance_rate").get<double>();
      c.n_kept = j["chain"].at("n_kept").get<std::size_t>();
      fp.chain = std::move(c);
    }
    return fp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("fitted prior: ") + e.what());
  }
}

}  // namespace mixedabc::distfit
