#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixedabc/distfit.hpp"
#include "mixedabc/matrix.hpp"
#include "mixedabc/surrogate.hpp"

namespace mixedabc::abc {

struct SummaryVector {
  double mean = 0.0;
  double sd = 0.0;  // n - 1 denominator
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;

  [[nodiscard]] std::array<double, 5> as_array() const { return {mean, sd, median, q1, q3}; }
};

/// Needs at least two values (TooFewValues otherwise). Quartiles are type 7.
SummaryVector summarize(std::span<const double> sample);

struct KernelDescriptor {
  std::string family = "logistic_pdf";
  double mu = 0.0;
  double s = 1.0;
};

/// Logistic density at d, evaluated without overflow on either side.
double logistic_pdf(double d, double mu, double s);

/// Additive measurement noise for the forward model: noise_scale * draw.
/// noise_scale = 0 gives a noiseless simulator.
struct NoiseModel {
  distfit::Family family = distfit::Family::Logistic;
  std::vector<double> theta = {0.0, 1.0};
  double noise_scale = 1.0;
};

/// Prior of one model input: a fitted distribution or a pinned constant.
struct FeaturePrior {
  std::optional<distfit::FittedPrior> prior;
  double pinned = 0.0;

  static FeaturePrior fitted(distfit::FittedPrior fp) { return {std::move(fp), 0.0}; }
  static FeaturePrior constant(double v) { return {std::nullopt, v}; }
};

using PriorSet = std::map<std::string, FeaturePrior>;

/// Forward map from a raw (unscaled) parameter vector to a noiseless output.
using ForwardMap = std::function<double(std::span<const double>)>;

struct SimulatedSet {
  std::vector<std::string> feature_names;
  Matrix draws;      // n_sims x features, raw units
  Matrix simulated;  // n_sims x sims_per_draw
};

/// Draw i uses its own stream (seed, "abc", i): features in column order,
/// then the noise values.
SimulatedSet simulate_forward(const ForwardMap& forward, const std::vector<std::string>& feature_names,
                              const PriorSet& priors, const NoiseModel& noise, std::size_t n_sims,
                              std::size_t sims_per_draw, std::uint64_t seed);

/// Same, with the surrogate (raw draws pass through its frozen scaling).
SimulatedSet simulate_forward(const surrogate::SurrogateModel& m, const PriorSet& priors, const NoiseModel& noise,
                              std::size_t n_sims, std::size_t sims_per_draw, std::uint64_t seed);

struct WeighOptions {
  /// Divide each summary difference by that component's sd over the
  /// simulated ensemble before taking the norm.
  bool standardize = false;
};

struct WeightedPosterior {
  std::vector<std::string> feature_names;
  Matrix draws;
  std::vector<double> raw_weights;
  std::vector<double> norm_weights;
  std::vector<double> distances;
  double ess = 0.0;
  KernelDescriptor kernel;
  SummaryVector observed;

  [[nodiscard]] std::size_t size() const noexcept { return distances.size(); }
  [[nodiscard]] double ess_fraction() const { return ess / static_cast<double>(size()); }
};

/// Distances between simulated and observed summaries, in draw order.
std::vector<double> summary_distances(const SimulatedSet& sims, std::span<const double> obs,
                                      const WeighOptions& opts = {});

WeightedPosterior weigh(const SimulatedSet& sims, std::span<const double> obs, const KernelDescriptor& kernel,
                        const WeighOptions& opts = {});

/// Arbitrary nonnegative kernel on the distance, e.g. an indicator for
/// rejection ABC. `kernel` is recorded as given.
WeightedPosterior weigh(const SimulatedSet& sims, std::span<const double> obs,
                        const std::function<double(double)>& kernel_fn, const KernelDescriptor& kernel,
                        const WeighOptions& opts = {});

/// "99.73%"
std::string format_ess(double ess, std::size_t n);

/// Smallest value whose cumulative normalized weight reaches p.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double p);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct PosteriorSummary {
  std::string feature;
  double mean = 0.0;
  double median = 0.0;
  Interval ci95;
  Interval ci50;
  std::vector<std::pair<double, double>> quantiles;  // (level, value)
};

PosteriorSummary posterior_summary(const WeightedPosterior& wp, const std::string& feature,
                                   std::span<const double> levels = {});

struct Histogram {
  std::vector<double> edges;
  std::vector<double> observed;   // densities
  std::vector<double> predicted;  // densities
};

struct ValidationReport {
  double observed_mean = 0.0;
  double observed_sd = 0.0;
  double predicted_mean = 0.0;
  double predicted_sd = 0.0;
  double abs_mean_diff = 0.0;
  std::vector<double> observed;
  std::vector<double> predicted;
  std::vector<std::size_t> resampled;  // draw indices picked by the resampler
  Histogram histogram;
};

/// Systematic resampling: positions (u + j) / n for one u ~ U[0, 1).
std::vector<std::size_t> systematic_resample(std::span<const double> norm_weights, std::size_t n, Engine& eng);

ValidationReport forward_validate(const WeightedPosterior& wp, const ForwardMap& forward, const NoiseModel& noise,
                                  std::span<const double> obs, std::uint64_t seed);
ValidationReport forward_validate(const WeightedPosterior& wp, const surrogate::SurrogateModel& m,
                                  const NoiseModel& noise, std::span<const double> obs, std::uint64_t seed);

/// Hartigan's dip of a sorted sample, in CDF units (at least 1/(2n)).
double dip_statistic(std::span<const double> sorted);

/// 95% quantile of the dip under uniform samples of size n (fixed-seed
/// Monte Carlo, 400 replicates).
double dip_critical_value(std::size_t n);

struct SufficiencyReport {
  std::size_t n = 0;
  double variance_explained = 1.0;
  double dip = 0.0;
  double dip_threshold = 0.0;
  bool multimodal = false;
};

/// Reconstructs obs from the five summaries with a maximum-entropy fit
/// (uniform between quartiles, exponential tails matched to mean and sd)
/// and reports the share of obs variance the reconstruction explains.
/// Needs at least 8 values.
SufficiencyReport sufficiency_check(std::span<const double> obs, const SummaryVector& stats);

nlohmann::json to_json(const SummaryVector& s);
nlohmann::json to_json(const KernelDescriptor& k);
nlohmann::json to_json(const NoiseModel& n);
nlohmann::json to_json(const WeightedPosterior& wp);
WeightedPosterior weighted_posterior_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PosteriorSummary& s);
nlohmann::json to_json(const ValidationReport& r);
nlohmann::json to_json(const SufficiencyReport& r);

}  // namespace mixedabc::abc
