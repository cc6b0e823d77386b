#pragma once

#include "sandreg/dispersion.hpp"
#include "sandreg/quadrature.hpp"
#include "sandreg/rng.hpp"

#include <utility>
#include <vector>

namespace sandreg {

/// Parameters of the heavy-tailed heteroscedastic law: X has variance tau^2,
/// Var(Y | X) = c1 + c2 x^2 1{x >= 0} averages to sigma2, and delta sets the
/// reach of the quartic-tailed component.
struct CounterexampleSpec {
  double tau = 1.0;
  double sigma2 = 1.0;
  double c_tilde = 0.5;
  double delta = 10.0;

  void validate() const;
  double lambda2() const;
  double c1() const;
  double c2() const;
  /// Constant k with ratio >= k * B(delta).
  double bound_constant() const;
};

/// The law of X and Y | X for one spec, with the half-line moments needed
/// by the population losses precomputed by quadrature.
class CounterexampleLaw {
 public:
  explicit CounterexampleLaw(const CounterexampleSpec& spec, const QuadratureSettings& q = {});

  const CounterexampleSpec& spec() const { return spec_; }
  double lambda1() const { return lambda1_; }
  double rho() const { return rho_; }
  double nu2() const { return nu2_; }
  /// int_0^delta x^4/(1+x^4) / int_0^delta 1/(1+x^4).
  double b_delta() const { return b_; }

  double density(double x) const;
  double conditional_variance(double x) const;

  /// int_lo^hi f(x) p(x) dx with splits at 0 and +-delta and the Gaussian
  /// tail truncated.
  double expect(const std::function<double(double)>& f, double lo, double hi) const;

  /// E[X^2 1{X >= 0}], E[X^4 1{X >= 0}], E[X^2 / sigma^2(X) 1{X >= 0}], P(X >= 0).
  double pos_x2() const { return pos_x2_; }
  double pos_x4() const { return pos_x4_; }
  double pos_x2_over_var() const { return pos_w_; }
  double pos_mass() const { return pos_mass_; }

  /// Asymptotic variance of the weighted estimator with working variance
  /// g1 on x >= 0 and g2 on x < 0.
  double population_v(double g1, double g2) const;
  /// E[X^2 / sigma^2(X)]^{-1}.
  double optimal_v() const;
  /// Infimum of population_v over (g1, g2) in closed form.
  double two_piece_infimum() const;
  /// Same infimum by golden-section search in log coordinates (cross-check).
  std::pair<double, double> two_piece_minimiser_numeric(int sweeps = 2, double tol = 1e-6) const;

  /// Population EQML and GEE losses over the two-piece class.
  double population_eqml_loss(double g1, double g2) const;
  double population_gee_loss(double g1, double g2) const;

  /// Closed-form minimisers of both losses: (c1 + c2 tau^2, c1).
  std::pair<double, double> population_minimizers() const;
  /// E[sigma^2(X) | X >= 0] and E[sigma^2(X) | X < 0] by quadrature.
  std::pair<double, double> population_minimizers_quadrature() const;

  /// (1/2) int_0^inf p(x) {log(1 + c x^2) + 1/(1 + c x^2) - 1} dx.
  double kl_integral(double c) const;

  /// Draws X from the mixture; the quartic component is inverted through a
  /// 1e5-cell CDF table with linear interpolation.
  double sample_x(Rng& rng) const;

 private:
  void build_table();

  CounterexampleSpec spec_;
  QuadratureSettings q_;
  double j0_ = 0, j2_ = 0, j4_ = 0;
  double lambda1_ = 0, rho_ = 0, nu2_ = 0, b_ = 0;
  double pos_x2_ = 0, pos_x4_ = 0, pos_w_ = 0, pos_mass_ = 0;
  std::vector<double> cdf_;
};

struct DivergenceReport {
  double delta = 0.0;
  double b_delta = 0.0;
  /// V(gamma_EQML) / E[X^2/sigma^2]^{-1}.
  double ratio = 0.0;
  /// V(gamma_EQML) / inf over the two-piece class.
  double ratio_two_piece = 0.0;
  double lower_bound = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double v_eqml = 0.0;
  double v_opt = 0.0;
  double v_two_piece = 0.0;
  double kl = 0.0;
};

DivergenceReport divergence_report(const CounterexampleSpec& spec,
                                   const QuadratureSettings& q = {});
double divergence_ratio(const CounterexampleSpec& spec, const QuadratureSettings& q = {});

/// Smallest delta (3 significant figures) with divergence_ratio >= eta:
/// doubles from 1, then bisects.
double find_delta_for_eta(double tau, double sigma2, double c_tilde, double eta,
                          const QuadratureSettings& q = {});

/// Ungrouped sample of size n from the law, with Y = X beta + noise.
ClusterDataset sample_counterexample(const CounterexampleLaw& law, std::size_t n, Rng& rng,
                                     double beta = 1.0);

struct CrossCheckRow {
  std::string method;
  double mse = 0.0;
  double mse_se = 0.0;
  VectorXd mean_gamma;
  std::size_t failures = 0;
};

struct CrossCheckReport {
  std::vector<CrossCheckRow> rows;
  /// Mean and SE of squared-error difference sandwich - EQML.
  double diff = 0.0;
  double diff_se = 0.0;
};

/// Fits EQML, GEE and sandwich with the two-piece working variance on
/// `replications` samples of size n.
CrossCheckReport empirical_cross_check(const CounterexampleSpec& spec, std::size_t n,
                                       std::size_t replications, std::uint64_t seed,
                                       const OptimizerSettings& settings = {});

}  // namespace sandreg
