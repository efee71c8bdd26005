#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixedabc/matrix.hpp"

namespace mixedabc::plot {

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

/// Gaussian KDE with Silverman bandwidth on an even grid spanning the data
/// plus three bandwidths on each side.
Curve kde_curve(std::span<const double> values, std::span<const double> weights, std::size_t points = 256);

/// Grid point where a curve peaks (first on ties).
double mode(const Curve& c);

/// Diverging blue-white-red color for v in [-1, 1], as "#rrggbb".
std::string diverging_color(double v);

std::string parity_svg(std::span<const double> actual, std::span<const double> predicted, const std::string& title);

std::string importance_svg(const std::vector<std::pair<std::string, double>>& ranking, std::size_t top = 10);

struct PosteriorPanel {
  std::string feature;
  std::vector<double> values;
  std::vector<double> weights;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  double ci50_lo = 0.0;
  double ci50_hi = 0.0;
  double median = 0.0;
  double mean = 0.0;
};

/// One row per feature: weighted KDE above a box whose whiskers span the
/// 95% interval and whose box spans the 50% interval.
std::string posterior_svg(const std::vector<PosteriorPanel>& panels, const std::string& title);

/// Observed vs predicted densities (histogram bars plus KDE lines).
std::string forward_svg(std::span<const double> observed, std::span<const double> predicted, const std::string& title);

std::string heatmap_svg(const std::vector<std::string>& labels, const Matrix& values, const std::string& title);

}  // namespace mixedabc::plot
