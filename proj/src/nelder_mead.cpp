#include "sandreg/nelder_mead.hpp"

#include "sandreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sandreg {

using Eigen::VectorXd;

NelderMeadResult nelder_mead(const std::function<double(const VectorXd&)>& f,
                             const VectorXd& x0, const NelderMeadSettings& settings) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Eigen::Index n = x0.size();
  NelderMeadResult res;
  res.x = x0;
  res.f = kInf;

  auto eval = [&](const VectorXd& x) {
    double v;
    try {
      v = f(x);
    } catch (const NumericalError&) {
      v = kInf;
    }
    if (!std::isfinite(v)) v = kInf;
    ++res.evals;
    if (v < res.f) {
      res.f = v;
      res.x = x;
    }
    return v;
  };

  if (n == 0) {
    eval(x0);
    res.converged = std::isfinite(res.f);
    res.trace.push_back(res.f);
    return res;
  }

  std::vector<VectorXd> xs(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> fs(static_cast<std::size_t>(n + 1));
  for (Eigen::Index k = 0; k < n; ++k) xs[static_cast<std::size_t>(k + 1)](k) += settings.init_scale;
  for (std::size_t k = 0; k < xs.size(); ++k) fs[k] = eval(xs[k]);

  std::vector<std::size_t> order(xs.size());
  while (res.evals < settings.max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t best = order.front(), worst = order.back();
    const std::size_t second = order[order.size() - 2];
    res.trace.push_back(res.f);

    double diameter = 0.0;
    for (const auto& x : xs) diameter = std::max(diameter, (x - xs[best]).cwiseAbs().maxCoeff());
    const double spread = fs[worst] - fs[best];
    // the absolute floor lets a minimum value of exactly zero converge
    if (std::isfinite(fs[worst]) && spread <= settings.ftol * std::fabs(fs[best]) + 1e-20 &&
        diameter <= settings.xtol) {
      res.converged = true;
      break;
    }

    VectorXd centroid = VectorXd::Zero(n);
    for (std::size_t k = 0; k < xs.size(); ++k)
      if (k != worst) centroid += xs[k];
    centroid /= static_cast<double>(n);

    const VectorXd xr = centroid + (centroid - xs[worst]);
    const double fr = eval(xr);
    if (fr < fs[best]) {
      const VectorXd xe = centroid + 2.0 * (centroid - xs[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      xs[worst] = xr;
      fs[worst] = fr;
      continue;
    }
    const bool outside = fr < fs[worst];
    const VectorXd xc = outside ? VectorXd(centroid + 0.5 * (xr - centroid))
                                : VectorXd(centroid + 0.5 * (xs[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fs[worst])) {
      xs[worst] = xc;
      fs[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (k == best) continue;
      xs[k] = xs[best] + 0.5 * (xs[k] - xs[best]);
      fs[k] = eval(xs[k]);
    }
  }
  return res;
}

}  // namespace sandreg
