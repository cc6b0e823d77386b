#pragma once

#include <functional>
#include <vector>

namespace sandreg {

struct QuadratureSettings {
  double abs_tol = 1e-9;
  double rel_tol = 1e-8;
  std::size_t max_subdivisions = 2000;
  /// Gaussian components are integrated out to this many standard deviations.
  double gaussian_truncation = 40.0;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive Gauss-Kronrod over [a, b]; either end may be infinite. The
/// interval is split at every breakpoint strictly inside it. Throws
/// NumericalError (carrying the best value in its message) when the
/// tolerance is not met.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     const QuadratureSettings& settings = {},
                     const std::vector<double>& breakpoints = {});

}  // namespace sandreg
