#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace sandreg {

struct NelderMeadSettings {
  /// Edge length of the initial axis-aligned simplex.
  double init_scale = 0.5;
  /// Stop when (f_worst - f_best) <= ftol * |f_best| ...
  double ftol = 1e-6;
  /// ... and the simplex diameter (max distance to the best vertex) <= xtol.
  double xtol = 1e-5;
  int max_evals = 2000;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
  /// Best value after each iteration.
  std::vector<double> trace;
};

/// Minimises f from x0. Non-finite values and NumericalError throws are
/// treated as +inf. The returned point is the best ever evaluated.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadSettings& settings);

}  // namespace sandreg
