#include "sandreg/counterexample.hpp"
#include "sandreg/error.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace sandreg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Ternary search on a unimodal function of log(x).
double argmin_log(const std::function<double(double)>& f, double lo, double hi) {
  double a = std::log(lo), b = std::log(hi);
  for (int k = 0; k < 200; ++k) {
    const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
    if (f(std::exp(m1)) < f(std::exp(m2)))
      b = m2;
    else
      a = m1;
  }
  return std::exp(0.5 * (a + b));
}

CounterexampleSpec spec_at(double delta, double tau = 1.0) {
  CounterexampleSpec s;
  s.tau = tau;
  s.delta = delta;
  return s;
}

}  // namespace

TEST_SUITE("quadrature") {

TEST_CASE("polynomial and rational integrals") {
  CHECK(std::fabs(integrate([](double x) { return x; }, 0.0, 1.0).value - 0.5) <= 1e-12);
  const double r = integrate([](double x) { return 1.0 / (1.0 + x * x * x * x); }, 0.0, kInf).value;
  CHECK(std::fabs(r - M_PI / (2.0 * std::sqrt(2.0))) <= 1e-8);
  CHECK(std::fabs(r - 1.1107207345395916) <= 1e-8);
}

TEST_CASE("gaussian second moment over the real line") {
  const double m2 = integrate(
      [](double x) { return x * x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }, -kInf, kInf)
                        .value;
  CHECK(std::fabs(m2 - 1.0) <= 1e-9);
}

TEST_CASE("breakpoints handle kinks") {
  const double v = integrate([](double x) { return std::fabs(x - 0.3); }, -1.0, 1.0, {}, {0.3}).value;
  CHECK(std::fabs(v - (0.5 * 1.3 * 1.3 + 0.5 * 0.7 * 0.7)) <= 1e-12);
}

TEST_CASE("divergent integral is reported") {
  CHECK_THROWS_AS(integrate([](double x) { return 1.0 / x; }, 0.0, 1.0), NumericalError);
}

}

TEST_SUITE("prop1_oracle") {

TEST_CASE("default constants") {
  const CounterexampleSpec s;
  CHECK(std::fabs(s.c1() - 0.8) <= 1e-15);
  CHECK(std::fabs(s.c2() - 0.4) <= 1e-15);
  CHECK(std::fabs(s.bound_constant() - 0.05) <= 1e-15);
  CHECK(s.lambda2() == 0.5);
  CHECK(spec_at(1.0, 2.0).lambda2() == 0.5);
  CHECK(std::fabs(spec_at(1.0, 0.5).lambda2() - 0.875) <= 1e-15);
}

TEST_CASE("spec validation") {
  CounterexampleSpec s;
  s.c_tilde = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.delta = -1.0;
  CHECK_THROWS_AS(CounterexampleLaw{s}, ConfigError);
  s = {};
  s.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("density moments across a grid") {
  for (double tau : {0.5, 1.0, 2.0})
    for (double delta : {1.0, 10.0, 100.0}) {
      CAPTURE(tau);
      CAPTURE(delta);
      const CounterexampleLaw law(spec_at(delta, tau));
      const double mass = law.expect([](double) { return 1.0; }, -kInf, kInf);
      const double m2 = law.expect([](double x) { return x * x; }, -kInf, kInf);
      const double m4 = law.expect([](double x) { return x * x * x * x; }, -kInf, kInf);
      const double l2 = law.spec().lambda2();
      const double m4_closed = (1.0 - l2) * law.b_delta() + 3.0 * l2 * law.nu2() * law.nu2();
      CHECK(std::fabs(mass - 1.0) <= 1e-8);
      CHECK(std::fabs(m2 - tau * tau) <= 1e-7);
      CHECK(std::fabs(m4 - m4_closed) <= 1e-7 * m4_closed);
      CHECK(std::fabs(law.pos_mass() - 0.5) <= 1e-8);
    }
}

TEST_CASE("quartic tail constant") {
  const double expected[] = {3.5124077444431862, 17.007001821230451, 89.031658634700904,
                             899.31631642729589};
  const double deltas[] = {5.0, 20.0, 100.0, 1000.0};
  double prev = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double b = CounterexampleLaw(spec_at(deltas[k])).b_delta();
    CHECK(std::fabs(b - expected[k]) <= 1e-8 * expected[k]);
    CHECK(b > prev);
    prev = b;
  }
  CHECK(std::fabs(prev / 1000.0 * 1.1107207345395916 - 1.0) <= 0.01);
}

TEST_CASE("conditional variance averages to sigma2") {
  for (double tau : {0.5, 1.0, 2.0}) {
    CounterexampleSpec s = spec_at(20.0, tau);
    s.sigma2 = 1.7;
    const CounterexampleLaw law(s);
    const double ev =
        law.expect([&](double x) { return law.conditional_variance(x); }, -kInf, kInf);
    CHECK(std::fabs(ev - 1.7) <= 1e-7);
  }
}

TEST_CASE("population minimisers") {
  const CounterexampleLaw law(spec_at(20.0));
  const auto [g1, g2] = law.population_minimizers();
  CHECK(std::fabs(g1 - 1.2) <= 1e-15);
  CHECK(std::fabs(g2 - 0.8) <= 1e-15);
  const auto [q1, q2] = law.population_minimizers_quadrature();
  CHECK(std::fabs(q1 - 1.2) <= 1e-7);
  CHECK(std::fabs(q2 - 0.8) <= 1e-7);
}

TEST_CASE("eqml and gee population losses share the minimiser") {
  for (double delta : {5.0, 50.0}) {
    const CounterexampleLaw law(spec_at(delta));
    const auto [g1, g2] = law.population_minimizers();
    const double e1 = argmin_log([&](double g) { return law.population_eqml_loss(g, g2); }, 1e-3, 1e3);
    const double e2 = argmin_log([&](double g) { return law.population_eqml_loss(g1, g); }, 1e-3, 1e3);
    const double q1 = argmin_log([&](double g) { return law.population_gee_loss(g, g2); }, 1e-3, 1e3);
    const double q2 = argmin_log([&](double g) { return law.population_gee_loss(g1, g); }, 1e-3, 1e3);
    CHECK(std::fabs(e1 - g1) <= 1e-5);
    CHECK(std::fabs(e2 - g2) <= 1e-5);
    CHECK(std::fabs(q1 - g1) <= 1e-5);
    CHECK(std::fabs(q2 - g2) <= 1e-5);
  }
}

TEST_CASE("no working variance beats the optimal weights") {
  const CounterexampleLaw law(spec_at(30.0));
  const double v_opt = law.optimal_v();
  const double v_two = law.two_piece_infimum();
  CHECK(v_two >= v_opt);
  Rng rng(11, 0);
  for (int k = 0; k < 100; ++k) {
    const double g1 = std::exp(3.0 * rng.normal()), g2 = std::exp(3.0 * rng.normal());
    const double v = law.population_v(g1, g2);
    CHECK(v >= v_opt);
    CHECK(v >= v_two * (1.0 - 1e-12));
  }
}

TEST_CASE("two-piece infimum by search") {
  const CounterexampleLaw law(spec_at(40.0));
  const auto [g1, g2] = law.two_piece_minimiser_numeric();
  CHECK(std::fabs(law.population_v(g1, g2) / law.two_piece_infimum() - 1.0) <= 1e-8);
  // the loss depends on the ratio only
  CHECK(std::fabs(law.population_v(3.0 * g1, 3.0 * g2) - law.population_v(g1, g2)) <= 1e-12);
}

TEST_CASE("nearly homoscedastic law has ratio near one") {
  CounterexampleSpec s = spec_at(100.0);
  s.c_tilde = 1e-6;
  CHECK(std::fabs(divergence_ratio(s) - 1.0) <= 1e-4);
}

TEST_CASE("divergence ratio exceeds the bound and grows") {
  for (double delta : {5.0, 20.0, 100.0}) {
    const DivergenceReport r = divergence_report(spec_at(delta));
    CAPTURE(delta);
    CHECK(r.ratio >= r.lower_bound);
    CHECK(r.ratio >= r.ratio_two_piece);
    CHECK(r.ratio_two_piece >= 1.0);
    CHECK(r.kl > 0.0);
  }
  CHECK(divergence_ratio(spec_at(50.0)) > divergence_ratio(spec_at(5.0)));
  const DivergenceReport r100 = divergence_report(spec_at(100.0));
  CHECK(std::fabs(r100.ratio - 6.0670524665947603) <= 1e-7);
  CHECK(std::fabs(r100.v_opt - 1.1085282106922955) <= 1e-8);
  CHECK(std::fabs(r100.lower_bound - 0.05 * 89.031658634700904) <= 1e-9);
}

TEST_CASE("delta search") {
  const double d = find_delta_for_eta(1.0, 1.0, 0.5, 10.0);
  CHECK(d <= 500.0);
  CHECK(divergence_ratio(spec_at(d)) >= 10.0);
  CHECK(divergence_ratio(spec_at(0.98 * d)) < 10.0);
  CHECK_THROWS_AS(find_delta_for_eta(1.0, 1.0, 0.5, 0.5), ConfigError);
}

TEST_CASE("sampler moments") {
  const CounterexampleLaw law(spec_at(10.0));
  Rng rng(5, 0);
  const int n = 1000000;
  double s1 = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = law.sample_x(rng);
    s1 += x;
    s2 += x * x;
  }
  CHECK(std::fabs(s1 / n) <= 0.01);
  CHECK(std::fabs(s2 / n - 1.0) <= 0.01);
}

TEST_CASE("eqml working variances are consistent") {
  const CounterexampleLaw law(spec_at(10.0));
  Rng rng(9, 0);
  const ClusterDataset data = sample_counterexample(law, 100000, rng);
  OptimizerSettings opt;
  opt.restarts = 1;
  opt.exec = Exec::serial;
  const SandregFit fit =
      minimize_dispersion(data, GlmFamily::gaussian(),
                          CovarianceStructure::two_piece(0, ScaleMode::free),
                          DispersionObjective::eqml(), opt);
  const double v_pos = fit.gamma_hat.scale, v_neg = fit.gamma_hat.scale * fit.gamma_hat.shape(0);

  // Monte Carlo SE of the per-half mean of squared residuals
  double sp = 0, spp = 0, sn = 0, snn = 0;
  std::size_t np = 0, nn = 0;
  for (const auto& c : data.clusters()) {
    const double r = c.y(0) - c.x(0, 0) * fit.beta_hat(0);
    if (c.x(0, 0) >= 0.0) {
      sp += r * r;
      spp += r * r * r * r;
      ++np;
    } else {
      sn += r * r;
      snn += r * r * r * r;
      ++nn;
    }
  }
  const double se_pos = std::sqrt((spp / np - (sp / np) * (sp / np)) / np);
  const double se_neg = std::sqrt((snn / nn - (sn / nn) * (sn / nn)) / nn);
  const auto [g1, g2] = law.population_minimizers();
  CHECK(std::fabs(v_pos - g1) <= 3.0 * se_pos);
  CHECK(std::fabs(v_neg - g2) <= 3.0 * se_neg);
}

}

TEST_SUITE("cross_check") {

TEST_CASE("sandwich beats eqml on the heavy-tailed law") {
  const CounterexampleSpec s = spec_at(100.0);
  REQUIRE(divergence_ratio(s) >= 5.0);
  OptimizerSettings opt;
  opt.restarts = 1;
  const CrossCheckReport r = empirical_cross_check(s, 5000, 200, 7, opt);
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) CHECK(row.failures == 0);
  const auto& eqml = r.rows[0];
  const auto& sandwich = r.rows[2];
  MESSAGE("n*mse eqml " << 5000 * eqml.mse << " sandwich " << 5000 * sandwich.mse
                        << " paired diff " << 5000 * r.diff << " se " << 5000 * r.diff_se);
  CHECK(sandwich.mse < eqml.mse);
  CHECK(-r.diff >= 2.0 * r.diff_se);
  // eqml lands on the population minimisers (1.2, 0.8)
  CHECK(std::fabs(eqml.mean_gamma(0) - 1.2) <= 0.05);
  CHECK(std::fabs(eqml.mean_gamma(1) - 0.8) <= 0.05);
}

}
