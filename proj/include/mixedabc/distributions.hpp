#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "mixedabc/rng.hpp"

namespace mixedabc::distfit {

/// Candidate families for priors and residual distributions.
///
/// Parameter vectors use these conventions:
///   normal            (mu, sigma)
///   logistic          (mu, s)
///   cauchy            (x0, gamma)
///   negative_binomial (n, p)   pmf C(k+n-1, k) p^n (1-p)^k, mean n(1-p)/p
///   binomial          (p)      a single Bernoulli component on {0, 1}
///   discrete_uniform  (a, b)   integers a..b inclusive
enum class Family { Normal, Logistic, Cauchy, NegativeBinomial, Binomial, DiscreteUniform };

inline constexpr Family kAllFamilies[] = {Family::Normal,           Family::Logistic,
                                          Family::Cauchy,           Family::NegativeBinomial,
                                          Family::Binomial,         Family::DiscreteUniform};

std::string_view family_name(Family f);
Family family_from_name(std::string_view name);

/// Number of hyperparameters k entering the AIC penalty.
int n_params(Family f);

bool is_discrete(Family f);

/// Log density (continuous) or log mass (discrete); -inf outside the support
/// or for invalid parameters.
double log_density(Family f, std::span<const double> theta, double x);

double log_likelihood(Family f, std::span<const double> theta, std::span<const double> sample);

/// Distribution mean; NaN for the Cauchy family.
double family_mean(Family f, std::span<const double> theta);

/// Central location: the mean where it exists, the location parameter for Cauchy.
double family_center(Family f, std::span<const double> theta);

double draw(Family f, std::span<const double> theta, Engine& eng);

std::vector<double> draw_n(Family f, std::span<const double> theta, std::size_t n, Engine& eng);

}  // namespace mixedabc::distfit
