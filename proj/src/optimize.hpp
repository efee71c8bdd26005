#pragma once

#include <functional>
#include <vector>

namespace mixedabc::detail {

struct NelderMeadOptions {
  double initial_step = 0.1;
  double ftol = 1e-12;
  double xtol = 1e-10;
  int max_iter = 5000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
};

/// Minimizes f with the Nelder-Mead simplex (standard coefficients 1, 2,
/// 0.5, 0.5). `initial_step` is the per-coordinate offset of the starting
/// simplex vertices.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opt = {});

/// Golden-section search for the minimum of a unimodal f on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol = 1e-12, int max_iter = 500);

}  // namespace mixedabc::detail
