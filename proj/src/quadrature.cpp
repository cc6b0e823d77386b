#include "sandreg/quadrature.hpp"

#include "sandreg/error.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace sandreg {

namespace {

double trampoline(double x, void* params) {
  return (*static_cast<const std::function<double(double)>*>(params))(x);
}

struct WorkspaceDeleter {
  void operator()(gsl_integration_workspace* w) const { gsl_integration_workspace_free(w); }
};

QuadResult integrate_piece(const std::function<double(double)>& f, double a, double b,
                           const QuadratureSettings& s, gsl_integration_workspace* w) {
  gsl_function fn;
  fn.function = &trampoline;
  fn.params = const_cast<std::function<double(double)>*>(&f);
  QuadResult r;
  int status;
  const bool lo_inf = std::isinf(a), hi_inf = std::isinf(b);
  if (lo_inf && hi_inf)
    status = gsl_integration_qagi(&fn, s.abs_tol, s.rel_tol, s.max_subdivisions, w, &r.value,
                                  &r.error);
  else if (hi_inf)
    status = gsl_integration_qagiu(&fn, a, s.abs_tol, s.rel_tol, s.max_subdivisions, w,
                                   &r.value, &r.error);
  else if (lo_inf)
    status = gsl_integration_qagil(&fn, b, s.abs_tol, s.rel_tol, s.max_subdivisions, w,
                                   &r.value, &r.error);
  else
    status = gsl_integration_qags(&fn, a, b, s.abs_tol, s.rel_tol, s.max_subdivisions, w,
                                  &r.value, &r.error);
  if (status != GSL_SUCCESS) {
    std::ostringstream os;
    os.precision(17);
    os << "quadrature on [" << a << ", " << b << "] failed (" << gsl_strerror(status)
       << "); best value " << r.value << " with error estimate " << r.error;
    throw NumericalError(os.str());
  }
  return r;
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     const QuadratureSettings& settings,
                     const std::vector<double>& breakpoints) {
  if (!(settings.abs_tol > 0.0) || !(settings.rel_tol > 0.0) || settings.max_subdivisions < 1)
    throw ConfigError("quadrature tolerances must be positive");
  if (a == b) return {};
  if (a > b) {
    QuadResult r = integrate(f, b, a, settings, breakpoints);
    r.value = -r.value;
    return r;
  }
  static const bool handler_off = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)handler_off;

  std::vector<double> edges{a};
  std::vector<double> inner = breakpoints;
  std::sort(inner.begin(), inner.end());
  for (double x : inner)
    if (x > a && x < b && x > edges.back()) edges.push_back(x);
  edges.push_back(b);

  std::unique_ptr<gsl_integration_workspace, WorkspaceDeleter> w(
      gsl_integration_workspace_alloc(settings.max_subdivisions));
  QuadResult total;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const QuadResult r = integrate_piece(f, edges[k], edges[k + 1], settings, w.get());
    total.value += r.value;
    total.error += r.error;
  }
  return total;
}

}  // namespace sandreg
