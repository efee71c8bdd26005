#pragma once

#include <span>
#include <vector>

namespace mixedabc::stats {

double mean(std::span<const double> x);

/// Population standard deviation (divides by n).
double population_sd(std::span<const double> x);

/// Sample standard deviation (divides by n - 1); 0 for a single value.
double sample_sd(std::span<const double> x);

/// Type-7 (linear interpolation) quantile of already sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

/// Type-7 quantile; copies and sorts.
double quantile(std::span<const double> x, double p);

double median(std::span<const double> x);

/// Gaussian kernel density estimate evaluated on `grid`. With empty
/// `weights` all points count equally; the bandwidth follows Silverman's
/// rule, using the Kish effective size when weights are given.
std::vector<double> kde(std::span<const double> x, std::span<const double> weights,
                        std::span<const double> grid);

/// Silverman's rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> x, std::span<const double> weights);

}  // namespace mixedabc::stats
