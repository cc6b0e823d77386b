#include "helpers.hpp"
#include "sandreg/dispersion.hpp"
#include "sandreg/error.hpp"
#include "sandreg/sim.hpp"

#include <doctest.h>

using namespace sandreg;

namespace {

const GlmFamily kGauss = GlmFamily::gaussian();

DispersionParams shape1(double v, double scale = 1.0) {
  return DispersionParams{VectorXd::Constant(1, v), scale};
}

OptimizerSettings quick(Exec exec = Exec::parallel) {
  OptimizerSettings s;
  s.exec = exec;
  return s;
}

}  // namespace

TEST_SUITE("nelder_mead") {

TEST_CASE("minimises a curved valley") {
  auto rosen = [](const Eigen::VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  NelderMeadSettings s;
  s.ftol = 1e-12;
  s.xtol = 1e-8;
  s.max_evals = 5000;
  const auto r = nelder_mead(rosen, Eigen::Vector2d(-1.2, 1.0), s);
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("best-so-far trace never increases and invalid points are skipped") {
  int calls = 0;
  auto f = [&calls](const Eigen::VectorXd& x) {
    ++calls;
    if (x(0) < -0.5) return std::numeric_limits<double>::quiet_NaN();
    if (x(1) > 2.0) throw NumericalError("outside");
    return (x(0) - 0.3) * (x(0) - 0.3) + (x(1) - 1.0) * (x(1) - 1.0);
  };
  const auto r = nelder_mead(f, Eigen::Vector2d(0.0, 0.0), {});
  CHECK(r.converged);
  CHECK(r.evals == calls);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1]);
  CHECK(r.f == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("evaluation budget is respected") {
  NelderMeadSettings s;
  s.max_evals = 30;
  s.ftol = 0.0;
  s.xtol = 0.0;
  const auto r = nelder_mead([](const Eigen::VectorXd& x) { return x.squaredNorm(); },
                             Eigen::Vector3d(1, 2, 3), s);
  CHECK_FALSE(r.converged);
  CHECK(r.evals <= 30);
}

}

TEST_SUITE("dispersion_fit") {

TEST_CASE("objectives match an independent dense implementation") {
  const ClusterDataset d = testing::trig_dataset();
  const auto s = CovarianceStructure::exchangeable(4, ScaleMode::free);
  const VectorXd pilot = Eigen::Vector2d(0.575279984643439, 1.0352743268147881);
  // numpy reference values on the same data.
  CHECK(eqml_objective(d, kGauss, s, shape1(0.2, 1.5), pilot) ==
        doctest::Approx(16.9316276047338).epsilon(1e-10));
  CHECK(gee_objective(d, kGauss, s, shape1(0.2, 1.5), pilot) ==
        doctest::Approx(34.02506671502069).epsilon(1e-10));
  double phi = 0.0;
  CHECK(profiled_eqml_objective(d, kGauss, s, VectorXd::Constant(1, 0.2), pilot, &phi) ==
        doctest::Approx(8.462609220171952).epsilon(1e-10));
  CHECK(phi == doctest::Approx(0.5515235706014473).epsilon(1e-12));
  CHECK(eqml_objective(d, kGauss, s, shape1(0.2, phi), pilot) ==
        doctest::Approx(8.462609220171952).epsilon(1e-10));
}

TEST_CASE("profiled scale is the closed-form minimiser") {
  Rng rng(3, 0);
  const ClusterDataset d = testing::random_dataset(rng, 40, 1, 1, 2);
  const auto s = CovarianceStructure::independence(ScaleMode::free);
  const VectorXd beta = Eigen::Vector2d(0.1, 0.2);
  double rss = 0.0;
  for (const auto& c : d.clusters()) {
    const double r = (c.y - c.x * beta)(0);
    rss += r * r;
  }
  double phi = 0.0;
  const double v = profiled_eqml_objective(d, kGauss, s, VectorXd(), beta, &phi);
  CHECK(phi == doctest::Approx(rss / 40.0));
  CHECK(v == doctest::Approx(40.0 * std::log(rss / 40.0) + 40.0));
  CHECK(eqml_objective(d, kGauss, s, DispersionParams{VectorXd(), 1.1 * phi}, beta) > v);
  profiled_gee_objective(d, kGauss, s, VectorXd(), beta, &phi);
  CHECK(phi == doctest::Approx(rss / 40.0));
}

TEST_CASE("gee exchangeable estimate has the moment closed form on balanced data") {
  Rng rng(18, 0);
  const ClusterDataset d = gen_linear_multilevel(0.0, 300, rng);
  OptimizerSettings opt = quick();
  opt.outer_rounds = 1;
  const SandregFit fit = minimize_dispersion(
      d, kGauss, CovarianceStructure::exchangeable(4, ScaleMode::free), DispersionObjective::gee(),
      opt);
  const VectorXd pilot = pooled_glm_start(d, kGauss);
  double diag = 0.0, off = 0.0;
  for (const auto& c : d.clusters()) {
    const VectorXd r = c.y - c.x * pilot;
    diag += r.squaredNorm();
    off += r.sum() * r.sum() - r.squaredNorm();
  }
  diag /= 4.0 * 300;
  off /= 12.0 * 300;
  CHECK(fit.gamma_hat.scale == doctest::Approx(diag).epsilon(1e-6));
  CHECK(fit.gamma_hat.shape(0) == doctest::Approx(off / diag).epsilon(1e-4));
}

TEST_CASE("eqml recovers compound symmetry") {
  Rng rng(19, 0);
  const ClusterDataset d = gen_linear_multilevel(0.0, 2000, rng);
  const SandregFit fit = minimize_dispersion(
      d, kGauss, CovarianceStructure::exchangeable(4, ScaleMode::free), DispersionObjective::eqml(),
      quick());
  CHECK(fit.converged);
  CHECK(fit.gamma_hat.shape(0) == doctest::Approx(0.5).epsilon(0.1));
  CHECK(fit.gamma_hat.scale == doctest::Approx(1.0).epsilon(0.1));
    // gradient of a sum over 8000 observations
  CHECK(eqml_equation_residual(d, fit) <= 1e-4 * static_cast<double>(d.total_observations()));
}

TEST_CASE("unweighted objective returns the pooled fit") {
  Rng rng(20, 0);
  const ClusterDataset d = gen_binomial_copula(LatentKind::equicorr, 30, rng);
  const SandregFit fit =
      minimize_dispersion(d, GlmFamily::binomial(), CovarianceStructure::exchangeable(20),
                          DispersionObjective::none(), quick());
  CHECK(fit.structure.kind == CovKind::independence);
  CHECK((fit.beta_hat - pooled_glm_start(d, GlmFamily::binomial())).norm() <= 1e-8);
  CHECK(fit.method() == "unweighted");
}

TEST_CASE("sandwich optimiser reaches the grid minimum in one dimension") {
  Rng rng(21, 0);
  const ClusterDataset d = gen_longitudinal_intro(40, rng);
  const auto s = CovarianceStructure::ar1();
  const VectorXd c = VectorXd::Ones(1);
  const SandregFit fit =
      minimize_dispersion(d, kGauss, s, DispersionObjective::sandwich(c), quick());
  double grid_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 200; ++k) {
    const double theta = -4.0 + 8.0 * k / 199.0;
    const double rho = unpack_shape(s, VectorXd::Constant(1, theta))(0);
    grid_min = std::min(grid_min, sandwich_loss(d, kGauss, s, shape1(rho), c).value);
  }
  CHECK(fit.objective_value <= grid_min + 1e-4);
  // Reported gamma reproduces the reported loss.
  CHECK(sandwich_loss(d, kGauss, s, fit.gamma_hat, c).value ==
        doctest::Approx(fit.objective_value).epsilon(1e-10));
  CHECK((pack_shape(s, fit.gamma_hat.shape) - fit.theta_hat).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("sandwich fit is no worse than eqml and gee on its own criterion") {
  Rng rng(22, 0);
  const ClusterDataset d = gen_linear_multilevel(3.0, 100, rng);
  const VectorXd c = VectorXd::Ones(1);
  const auto s = CovarianceStructure::exchangeable(4, ScaleMode::free);
  const SandregFit sw = minimize_dispersion(d, kGauss, s, DispersionObjective::sandwich(c), quick());
  for (const auto& obj : {DispersionObjective::eqml(), DispersionObjective::gee()}) {
    const SandregFit other = minimize_dispersion(d, kGauss, s, obj, quick());
    const double at_other =
        sandwich_loss(d, kGauss, sw.structure, DispersionParams{other.gamma_hat.shape, 1.0}, c)
            .value;
    CHECK(sw.objective_value <= at_other + 1e-8);
  }
}

TEST_CASE("fits are deterministic and independent of the execution policy") {
  Rng rng(23, 0);
  const ClusterDataset d = gen_binomial_copula(LatentKind::arma22, 40, rng);
  const GlmFamily f = GlmFamily::binomial();
  const auto s = CovarianceStructure::arma(1, 1);
  const VectorXd c = VectorXd::Ones(1);
  const SandregFit a = minimize_dispersion(d, f, s, DispersionObjective::sandwich(c), quick());
  const SandregFit b = minimize_dispersion(d, f, s, DispersionObjective::sandwich(c), quick());
  const SandregFit e =
      minimize_dispersion(d, f, s, DispersionObjective::sandwich(c), quick(Exec::serial));
  CHECK(a.theta_hat == b.theta_hat);
  CHECK(a.beta_hat == b.beta_hat);
  CHECK(a.theta_hat == e.theta_hat);
  CHECK(a.objective_value == e.objective_value);
}

TEST_CASE("settings and objectives are validated") {
  OptimizerSettings bad;
  bad.restarts = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(DispersionObjective::sandwich(VectorXd::Ones(3)).validate(2), ConfigError);
  const DispersionObjective eqml_with_target{ObjectiveKind::eqml, VectorXd::Ones(2)};
  CHECK_THROWS_AS(eqml_with_target.validate(2), ConfigError);
  CHECK(parse_objective("sandwich_large_sample") == ObjectiveKind::sandwich_large_sample);
  CHECK_THROWS_AS(parse_objective("reml"), ConfigError);
}

}
