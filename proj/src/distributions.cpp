#include "mixedabc/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "mixedabc/error.hpp"

namespace mixedabc::distfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_integer(double x) { return std::isfinite(x) && x == std::floor(x); }

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Normal: return "normal";
    case Family::Logistic: return "logistic";
    case Family::Cauchy: return "cauchy";
    case Family::NegativeBinomial: return "negative_binomial";
    case Family::Binomial: return "binomial";
    case Family::DiscreteUniform: return "discrete_uniform";
  }
  return "unknown";
}

Family family_from_name(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown distribution family '" + std::string(name) + "'");
}

int n_params(Family f) { return f == Family::Binomial ? 1 : 2; }

bool is_discrete(Family f) {
  return f == Family::NegativeBinomial || f == Family::Binomial || f == Family::DiscreteUniform;
}

double log_density(Family f, std::span<const double> theta, double x) {
  switch (f) {
    case Family::Normal: {
      const double sigma = theta[1];
      if (!(sigma > 0.0)) return kNegInf;
      const double z = (x - theta[0]) / sigma;
      return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    case Family::Logistic: {
      const double s = theta[1];
      if (!(s > 0.0)) return kNegInf;
      const double a = std::abs((x - theta[0]) / s);
      return -a - std::log(s) - 2.0 * std::log1p(std::exp(-a));
    }
    case Family::Cauchy: {
      const double g = theta[1];
      if (!(g > 0.0)) return kNegInf;
      const double z = (x - theta[0]) / g;
      return -std::log(std::numbers::pi * g) - std::log1p(z * z);
    }
    case Family::NegativeBinomial: {
      const double n = theta[0];
      const double p = theta[1];
      if (!(n > 0.0) || !(p > 0.0) || p > 1.0 || !is_integer(x) || x < 0.0) return kNegInf;
      if (p == 1.0) return x == 0.0 ? 0.0 : kNegInf;
      return std::lgamma(x + n) - std::lgamma(n) - std::lgamma(x + 1.0) + n * std::log(p) +
             x * std::log1p(-p);
    }
    case Family::Binomial: {
      const double p = theta[0];
      if (!(p >= 0.0 && p <= 1.0)) return kNegInf;
      if (x == 1.0) return p > 0.0 ? std::log(p) : kNegInf;
      if (x == 0.0) return p < 1.0 ? std::log1p(-p) : kNegInf;
      return kNegInf;
    }
    case Family::DiscreteUniform: {
      const double a = theta[0];
      const double b = theta[1];
      if (!(b >= a) || !is_integer(x) || x < a || x > b) return kNegInf;
      return -std::log(b - a + 1.0);
    }
  }
  return kNegInf;
}

double log_likelihood(Family f, std::span<const double> theta, std::span<const double> sample) {
  double ll = 0.0;
  for (double x : sample) {
    ll += log_density(f, theta, x);
    if (ll == kNegInf) return ll;
  }
  return ll;
}

double family_mean(Family f, std::span<const double> theta) {
  switch (f) {
    case Family::Normal:
    case Family::Logistic: return theta[0];
    case Family::Cauchy: return std::numeric_limits<double>::quiet_NaN();
    case Family::NegativeBinomial: return theta[0] * (1.0 - theta[1]) / theta[1];
    case Family::Binomial: return theta[0];
    case Family::DiscreteUniform: return 0.5 * (std::round(theta[0]) + std::round(theta[1]));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double family_center(Family f, std::span<const double> theta) {
  return f == Family::Cauchy ? theta[0] : family_mean(f, theta);
}

double draw(Family f, std::span<const double> theta, Engine& eng) {
  switch (f) {
    case Family::Normal: return std::normal_distribution<double>(theta[0], theta[1])(eng);
    case Family::Logistic: {
      const double u = uniform_open01(eng);
      return theta[0] + theta[1] * std::log(u / (1.0 - u));
    }
    case Family::Cauchy: {
      const double u = uniform_open01(eng);
      return theta[0] + theta[1] * std::tan(std::numbers::pi * (u - 0.5));
    }
    case Family::NegativeBinomial: {
      const double n = theta[0];
      const double p = theta[1];
      if (p >= 1.0) return 0.0;
      // gamma-Poisson mixture
      const double lambda = std::gamma_distribution<double>(n, (1.0 - p) / p)(eng);
      if (!(lambda > 0.0)) return 0.0;
      return static_cast<double>(std::poisson_distribution<long long>(lambda)(eng));
    }
    case Family::Binomial: return uniform_open01(eng) < theta[0] ? 1.0 : 0.0;
    case Family::DiscreteUniform: {
      const double a = std::round(theta[0]);
      const double b = std::round(theta[1]);
      const auto width = static_cast<std::uint64_t>(b - a + 1.0);
      return a + static_cast<double>(uniform_index(eng, width));
    }
  }
  return 0.0;
}

std::vector<double> draw_n(Family f, std::span<const double> theta, std::size_t n, Engine& eng) {
  std::vector<double> out(n);
  for (auto& v : out) v = draw(f, theta, eng);
  return out;
}

}  // namespace mixedabc::distfit
