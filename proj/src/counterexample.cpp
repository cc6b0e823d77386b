#include "sandreg/counterexample.hpp"

#include "sandreg/error.hpp"

#include <algorithm>
#include <cmath>

namespace sandreg {

namespace {

constexpr std::size_t kTableSize = 100000;

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

void CounterexampleSpec::validate() const {
  if (!(tau > 0.0) || !(sigma2 > 0.0)) throw ConfigError("tau and sigma2 must be positive");
  if (!(c_tilde > 0.0 && c_tilde <= 1.0)) throw ConfigError("c_tilde must lie in (0, 1]");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
}

double CounterexampleSpec::lambda2() const { return std::max(0.5, 1.0 - tau * tau / 2.0); }

double CounterexampleSpec::c1() const { return 2.0 * sigma2 / (2.0 + c_tilde * tau * tau); }

double CounterexampleSpec::c2() const { return c_tilde * c1(); }

double CounterexampleSpec::bound_constant() const {
  const double a = c1(), b = c2(), t2 = tau * tau;
  return a * b * (1.0 - lambda2()) / (2.0 * t2 * (a + 2.0 * b * t2));
}

CounterexampleLaw::CounterexampleLaw(const CounterexampleSpec& spec, const QuadratureSettings& q)
    : spec_(spec), q_(q) {
  spec_.validate();
  const double d = spec_.delta;
  j0_ = integrate([](double x) { return 1.0 / (1.0 + x * x * x * x); }, 0.0, d, q_).value;
  j2_ = integrate([](double x) { return x * x / (1.0 + x * x * x * x); }, 0.0, d, q_).value;
  j4_ = integrate([](double x) { const double x4 = x * x * x * x; return x4 / (1.0 + x4); },
                  0.0, d, q_).value;
  const double l2 = spec_.lambda2();
  lambda1_ = (1.0 - l2) / (2.0 * j0_);
  rho_ = j2_ / j0_;
  nu2_ = spec_.tau * spec_.tau / l2 - (1.0 - l2) * rho_ / l2;
  if (!(nu2_ > 0.0)) throw NumericalError("Gaussian component variance is not positive");
  b_ = j4_ / j0_;

  const double inf = std::numeric_limits<double>::infinity();
  pos_mass_ = expect([](double) { return 1.0; }, 0.0, inf);
  pos_x2_ = expect([](double x) { return x * x; }, 0.0, inf);
  pos_x4_ = expect([](double x) { return x * x * x * x; }, 0.0, inf);
  pos_w_ = expect([this](double x) { return x * x / conditional_variance(x); }, 0.0, inf);
  build_table();
}

double CounterexampleLaw::density(double x) const {
  const double quartic = std::fabs(x) <= spec_.delta ? lambda1_ / (1.0 + x * x * x * x) : 0.0;
  const double l2 = spec_.lambda2();
  return quartic + l2 * std::exp(-x * x / (2.0 * nu2_)) / std::sqrt(2.0 * M_PI * nu2_);
}

double CounterexampleLaw::conditional_variance(double x) const {
  return spec_.c1() + (x >= 0.0 ? spec_.c2() * x * x : 0.0);
}

double CounterexampleLaw::expect(const std::function<double(double)>& f, double lo,
                                 double hi) const {
  const double tail = q_.gaussian_truncation * std::sqrt(nu2_);
  const double reach = std::max(spec_.delta, tail);
  lo = std::max(lo, -reach);
  hi = std::min(hi, reach);
  if (hi <= lo) return 0.0;
  return integrate([&](double x) { return f(x) * density(x); }, lo, hi, q_,
                   {-spec_.delta, -tail, 0.0, tail, spec_.delta})
      .value;
}

double CounterexampleLaw::population_v(double g1, double g2) const {
  if (!(g1 > 0.0) || !(g2 > 0.0)) throw ConfigError("working variances must be positive");
  const double a = pos_x2_;
  const double s_pos = spec_.c1() * a + spec_.c2() * pos_x4_;
  const double s_neg = spec_.c1() * a;
  const double bread = a / g1 + a / g2;
  return (s_pos / (g1 * g1) + s_neg / (g2 * g2)) / (bread * bread);
}

double CounterexampleLaw::optimal_v() const { return 1.0 / (pos_w_ + pos_x2_ / spec_.c1()); }

double CounterexampleLaw::two_piece_infimum() const {
  const double a = pos_x2_;
  const double s_pos = spec_.c1() * a + spec_.c2() * pos_x4_;
  const double s_neg = spec_.c1() * a;
  return 1.0 / (a * a / s_pos + a * a / s_neg);
}

std::pair<double, double> CounterexampleLaw::two_piece_minimiser_numeric(int sweeps,
                                                                         double tol) const {
  double t1 = 0.0, t2 = 0.0;
  for (int s = 0; s < sweeps; ++s) {
    t1 = golden_section([&](double t) { return population_v(std::exp(t), std::exp(t2)); },
                        t2 - 20.0, t2 + 20.0, tol);
    t2 = golden_section([&](double t) { return population_v(std::exp(t1), std::exp(t)); },
                        t1 - 20.0, t1 + 20.0, tol);
  }
  return {std::exp(t1), std::exp(t2)};
}

double CounterexampleLaw::population_eqml_loss(double g1, double g2) const {
  const double neg_mass = 1.0 - pos_mass_;
  const double var_pos = spec_.c1() * pos_mass_ + spec_.c2() * pos_x2_;
  const double var_neg = spec_.c1() * neg_mass;
  return pos_mass_ * std::log(g1) + var_pos / g1 + neg_mass * std::log(g2) + var_neg / g2;
}

double CounterexampleLaw::population_gee_loss(double g1, double g2) const {
  // E[(eps^2 - nu(X))^2] up to the additive constant E[eps^4].
  const double neg_mass = 1.0 - pos_mass_;
  const double var_pos = spec_.c1() * pos_mass_ + spec_.c2() * pos_x2_;
  const double var_neg = spec_.c1() * neg_mass;
  return pos_mass_ * g1 * g1 - 2.0 * g1 * var_pos + neg_mass * g2 * g2 - 2.0 * g2 * var_neg;
}

std::pair<double, double> CounterexampleLaw::population_minimizers() const {
  const double t2 = spec_.tau * spec_.tau;
  return {spec_.c1() + spec_.c2() * t2, spec_.c1()};
}

std::pair<double, double> CounterexampleLaw::population_minimizers_quadrature() const {
  const double inf = std::numeric_limits<double>::infinity();
  auto var = [this](double x) { return conditional_variance(x); };
  const double pos = expect(var, 0.0, inf) / expect([](double) { return 1.0; }, 0.0, inf);
  // x < 0 half: the integrand is constant there, so 0 is not a kink
  const double neg = expect(var, -inf, -0.0) / expect([](double) { return 1.0; }, -inf, -0.0);
  return {pos, neg};
}

double CounterexampleLaw::kl_integral(double c) const {
  return 0.5 * expect(
                   [c](double x) {
                     const double u = c * x * x;
                     return std::log1p(u) + 1.0 / (1.0 + u) - 1.0;
                   },
                   0.0, std::numeric_limits<double>::infinity());
}

void CounterexampleLaw::build_table() {
  // Grid x_k = delta (k/N)^2 puts most nodes where the quartic mass sits.
  const double d = spec_.delta;
  auto node = [d](std::size_t k) {
    const double u = static_cast<double>(k) / static_cast<double>(kTableSize);
    return d * u * u;
  };
  auto g = [](double x) { return 1.0 / (1.0 + x * x * x * x); };
  cdf_.assign(kTableSize + 1, 0.0);
  for (std::size_t k = 0; k < kTableSize; ++k) {
    const double a = node(k), b = node(k + 1);
    cdf_[k + 1] = cdf_[k] + (b - a) / 6.0 * (g(a) + 4.0 * g(0.5 * (a + b)) + g(b));
  }
  const double total = cdf_.back();
  for (double& v : cdf_) v /= total;
}

double CounterexampleLaw::sample_x(Rng& rng) const {
  if (rng.uniform() >= spec_.lambda2()) {
    const double v = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), v);
    const std::size_t k = std::min<std::size_t>(
        static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf_.begin() - 1, 0)),
        kTableSize - 1);
    const double u0 = static_cast<double>(k) / static_cast<double>(kTableSize);
    const double u1 = static_cast<double>(k + 1) / static_cast<double>(kTableSize);
    const double x0 = spec_.delta * u0 * u0, x1 = spec_.delta * u1 * u1;
    const double w = (v - cdf_[k]) / std::max(cdf_[k + 1] - cdf_[k], 1e-300);
    const double x = x0 + w * (x1 - x0);
    return rng.uniform() < 0.5 ? -x : x;
  }
  return std::sqrt(nu2_) * rng.normal();
}

DivergenceReport divergence_report(const CounterexampleSpec& spec, const QuadratureSettings& q) {
  const CounterexampleLaw law(spec, q);
  DivergenceReport r;
  r.delta = spec.delta;
  r.b_delta = law.b_delta();
  std::tie(r.gamma1, r.gamma2) = law.population_minimizers();
  r.v_eqml = law.population_v(r.gamma1, r.gamma2);
  r.v_opt = law.optimal_v();
  r.v_two_piece = law.two_piece_infimum();
  r.ratio = r.v_eqml / r.v_opt;
  r.ratio_two_piece = r.v_eqml / r.v_two_piece;
  r.lower_bound = spec.bound_constant() * r.b_delta;
  r.kl = law.kl_integral(spec.c2() / spec.c1());
  return r;
}

double divergence_ratio(const CounterexampleSpec& spec, const QuadratureSettings& q) {
  const CounterexampleLaw law(spec, q);
  const auto [g1, g2] = law.population_minimizers();
  return law.population_v(g1, g2) / law.optimal_v();
}

double find_delta_for_eta(double tau, double sigma2, double c_tilde, double eta,
                          const QuadratureSettings& q) {
  if (!(eta >= 1.0)) throw ConfigError("eta must be >= 1");
  auto ratio_at = [&](double d) { return divergence_ratio({tau, sigma2, c_tilde, d}, q); };
  double hi = 1.0;
  while (ratio_at(hi) < eta) {
    hi *= 2.0;
    if (hi > 1e6)
      throw ConvergenceError("divergence ratio stays below eta for delta up to 1e6");
  }
  double lo = hi / 2.0;
  if (ratio_at(lo) >= eta) lo = 0.0;
  const double resolution = 0.5 * std::pow(10.0, std::floor(std::log10(hi)) - 2.0);
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    if (ratio_at(mid) >= eta)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

ClusterDataset sample_counterexample(const CounterexampleLaw& law, std::size_t n, Rng& rng,
                                     double beta) {
  std::vector<ClusterData> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = law.sample_x(rng);
    const double y = beta * x + std::sqrt(law.conditional_variance(x)) * rng.normal();
    out.emplace_back(VectorXd::Constant(1, y), MatrixXd::Constant(1, 1, x));
  }
  return ClusterDataset(std::move(out));
}

CrossCheckReport empirical_cross_check(const CounterexampleSpec& spec, std::size_t n,
                                       std::size_t replications, std::uint64_t seed,
                                       const OptimizerSettings& settings) {
  if (replications < 2) throw ConfigError("cross check needs at least two replications");
  const CounterexampleLaw law(spec);
  const auto structure = CovarianceStructure::two_piece(0, ScaleMode::free);
  const std::vector<std::pair<std::string, DispersionObjective>> methods = {
      {"eqml", DispersionObjective::eqml()},
      {"gee", DispersionObjective::gee()},
      {"sandwich", DispersionObjective::sandwich(VectorXd::Ones(1))}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> err(methods.size(), std::vector<double>(replications, nan));
  std::vector<std::vector<VectorXd>> gam(methods.size(),
                                         std::vector<VectorXd>(replications));

  for_each_index(settings.exec, replications, [&](std::size_t r) {
    Rng rng(seed, r);
    const ClusterDataset data = sample_counterexample(law, n, rng);
    OptimizerSettings opt = settings;
    opt.exec = Exec::serial;
    opt.seed = splitmix64(seed + r);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      try {
        const SandregFit fit =
            minimize_dispersion(data, GlmFamily::gaussian(), structure, methods[m].second, opt);
        const double e = fit.beta_hat(0) - 1.0;
        err[m][r] = e * e;
        // (variance on x >= 0, variance on x < 0)
        const double s = fit.gamma_hat.scale;
        gam[m][r] = (VectorXd(2) << s, s * fit.gamma_hat.shape(0)).finished();
      } catch (const Error&) {
      }
    }
  });

  CrossCheckReport report;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    CrossCheckRow row;
    row.method = methods[m].first;
    row.mean_gamma = VectorXd::Zero(2);
    double s = 0.0, s2 = 0.0;
    std::size_t k = 0;
    for (std::size_t r = 0; r < replications; ++r) {
      if (std::isnan(err[m][r])) {
        ++row.failures;
        continue;
      }
      s += err[m][r];
      s2 += err[m][r] * err[m][r];
      row.mean_gamma += gam[m][r];
      ++k;
    }
    if (k >= 2) {
      row.mse = s / static_cast<double>(k);
      row.mse_se = std::sqrt(std::max(s2 / static_cast<double>(k) - row.mse * row.mse, 0.0) /
                             static_cast<double>(k - 1));
      row.mean_gamma /= static_cast<double>(k);
    }
    report.rows.push_back(row);
  }
  double s = 0.0, s2 = 0.0;
  std::size_t k = 0;
  for (std::size_t r = 0; r < replications; ++r) {
    if (std::isnan(err[2][r]) || std::isnan(err[0][r])) continue;
    const double d = err[2][r] - err[0][r];
    s += d;
    s2 += d * d;
    ++k;
  }
  if (k >= 2) {
    report.diff = s / static_cast<double>(k);
    report.diff_se = std::sqrt(
        std::max(s2 / static_cast<double>(k) - report.diff * report.diff, 0.0) /
        static_cast<double>(k - 1));
  }
  return report;
}

}  // namespace sandreg
