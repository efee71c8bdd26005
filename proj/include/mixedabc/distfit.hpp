#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "mixedabc/distributions.hpp"
#include "mixedabc/matrix.hpp"

namespace mixedabc::distfit {

struct FitResult {
  std::vector<double> theta;
  double loglik = 0.0;
};

struct McmcConfig {
  std::size_t n_iter = 20000;
  std::size_t burn_in = 5000;
  std::vector<double> proposal_scales;  // transformed scale; empty selects defaults
  std::uint64_t seed = 0;
};

struct ChainSummary {
  std::vector<double> mean;  // natural parameterization
  std::vector<double> sd;
  double acceptance_rate = 0.0;
  std::size_t n_kept = 0;
  Matrix draws;  // n_kept x k, natural parameterization
};

struct FittedPrior {
  Family family = Family::Normal;
  std::vector<double> theta_hat;
  double loglik = 0.0;
  double aic = 0.0;
  double model_prob = 0.0;
  std::optional<ChainSummary> chain;

  /// Posterior mean when a chain is attached, the MLE otherwise.
  [[nodiscard]] const std::vector<double>& theta() const {
    return chain ? chain->mean : theta_hat;
  }
};

/// True when every value lies in the family's support (integers for the
/// count families, bits for binomial).
bool supports(Family f, std::span<const double> sample);

/// Maximum-likelihood fit. Throws TooFewValues (fewer than 8 values; an
/// empty sample for binomial), SupportViolation or DegenerateSample.
FitResult fit_family(Family f, std::span<const double> sample);

/// exp(-(aic_i - aic_min)/2), normalized.
std::vector<double> model_probabilities(std::span<const double> aics);

/// Fits every admissible candidate and returns them by ascending AIC.
///
/// Candidates whose support excludes the sample are skipped. A pmf and a pdf
/// are not comparable through AIC, so an integer-valued sample is compared
/// among the discrete candidates and a real-valued one among the continuous
/// candidates; if the matching class has no admissible member the other
/// class is used.
std::vector<FittedPrior> select_model(std::span<const double> sample,
                                      std::span<const Family> candidates);

/// Random-walk Metropolis over transformed parameters (log for positive,
/// logit for probabilities, identity otherwise) with flat priors on the
/// transformed scale, started at theta_hat.
ChainSummary mcmc_posterior(Family f, std::span<const double> sample,
                            std::span<const double> theta_hat, const McmcConfig& cfg);
ChainSummary mcmc_posterior(Family f, std::span<const double> sample, const McmcConfig& cfg);

/// Proposal scales from the curvature of the log-likelihood at theta_hat,
/// 2.38/sqrt(k) times the conditional posterior sd on the transformed scale.
std::vector<double> default_proposal_scales(Family f, std::span<const double> sample,
                                            std::span<const double> theta_hat);

/// Selects the best family and attaches its posterior chain. A binomial fit
/// on the boundary (p = 0 or 1) keeps the MLE.
FittedPrior fit_prior(std::span<const double> sample, std::span<const Family> candidates,
                      const McmcConfig& cfg, std::vector<FittedPrior>* all = nullptr);

std::vector<double> sample_prior(const FittedPrior& fp, std::size_t n, std::uint64_t seed);

nlohmann::json to_json(const FittedPrior& fp);
FittedPrior fitted_prior_from_json(const nlohmann::json& j);

}  // namespace mixedabc::distfit
