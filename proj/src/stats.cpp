#include "mixedabc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mixedabc/error.hpp"

namespace mixedabc::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::TooFewValues, "mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

namespace {

double sum_sq_dev(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss;
}

}  // namespace

double population_sd(std::span<const double> x) {
  return std::sqrt(sum_sq_dev(x) / static_cast<double>(x.size()));
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(sum_sq_dev(x) / static_cast<double>(x.size() - 1));
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::TooFewValues, "quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> x, double p) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, p);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

double silverman_bandwidth(std::span<const double> x, std::span<const double> weights) {
  const auto n = x.size();
  if (n < 2) return 1.0;
  double m = 0.0;
  double var = 0.0;
  double n_eff = static_cast<double>(n);
  double iqr = 0.0;
  if (weights.empty()) {
    m = mean(x);
    var = sample_sd(x);
    var *= var;
    iqr = quantile(x, 0.75) - quantile(x, 0.25);
  } else {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m += weights[i] * x[i];
      sq += weights[i] * weights[i];
    }
    m /= total;
    for (std::size_t i = 0; i < n; ++i) var += weights[i] * (x[i] - m) * (x[i] - m);
    var /= total;
    n_eff = total * total / sq;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    auto wq = [&](double p) {
      double c = 0.0;
      for (auto i : order) {
        c += weights[i] / total;
        if (c >= p) return x[i];
      }
      return x[order.back()];
    };
    iqr = wq(0.75) - wq(0.25);
  }
  const double sd = std::sqrt(var);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
  return 0.9 * spread * std::pow(std::max(n_eff, 1.0), -0.2);
}

std::vector<double> kde(std::span<const double> x, std::span<const double> weights,
                        std::span<const double> grid) {
  const double h = silverman_bandwidth(x, weights);
  const double norm = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
  double total = weights.empty() ? static_cast<double>(x.size())
                                 : std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = (grid[g] - x[i]) / h;
      acc += (weights.empty() ? 1.0 : weights[i]) * std::exp(-0.5 * z * z);
    }
    out[g] = acc * norm / total;
  }
  return out;
}

}  // namespace mixedabc::stats
