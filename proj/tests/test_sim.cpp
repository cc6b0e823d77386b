#include "helpers.hpp"
#include "sandreg/error.hpp"
#include "sandreg/quadrature.hpp"
#include "sandreg/sim.hpp"

#include <doctest.h>

#include <set>

using namespace sandreg;

TEST_SUITE("sim_harness") {

TEST_CASE("normal cdf") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std_normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
  for (double x : {-8.0, -3.3, -1.0, 0.4, 2.2, 6.0}) {
    const double q = integrate(std_normal_pdf, -std::numeric_limits<double>::infinity(), x).value;
    CHECK(std::fabs(std_normal_cdf(x) - q) <= 1e-12);
  }
  // lower tail keeps relative accuracy
  CHECK(std_normal_cdf(-30.0) > 0.0);
}

TEST_CASE("streams are reproducible and distinct") {
  Rng a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  std::set<std::uint64_t> firsts;
  for (int k = 0; k < 10; ++k) CHECK(a.next() == b.next());
  firsts.insert(a.next());
  firsts.insert(c.next());
  firsts.insert(d.next());
  CHECK(firsts.size() == 3);
}

TEST_CASE("uniform and normal moments") {
  Rng rng(1, 0);
  const int n = 1000000;
  double su = 0, suu = 0, sn = 0, snn = 0, lo = 1, hi = 0;
  for (int k = 0; k < n; ++k) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    su += u;
    suu += u * u;
    const double z = rng.normal();
    sn += z;
    snn += z * z;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.005));
  CHECK(suu / n - (su / n) * (su / n) == doctest::Approx(1.0 / 12).epsilon(0.01));
  CHECK(std::fabs(sn / n) <= 0.005);
  CHECK(snn / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("multivariate normal draws") {
  MatrixXd cov(3, 3);
  cov << 2.0, 0.6, -0.4, 0.6, 1.0, 0.3, -0.4, 0.3, 0.5;
  const VectorXd mean = Eigen::Vector3d(1.0, -1.0, 0.0);
  const MvnSampler s(mean, cov);
  Rng rng(2, 0);
  const int n = 1000000;
  VectorXd m = VectorXd::Zero(3);
  MatrixXd sxx = MatrixXd::Zero(3, 3);
  for (int k = 0; k < n; ++k) {
    const VectorXd x = s.draw(rng);
    m += x;
    sxx += (x - mean) * (x - mean).transpose();
  }
  CHECK((m / n - mean).cwiseAbs().maxCoeff() <= 1e-2);
  CHECK((sxx / n - cov).cwiseAbs().maxCoeff() <= 1e-2);

  // rank one: the pivoted fallback reproduces the matrix
  const VectorXd v = Eigen::Vector3d(1.0, 2.0, -1.0);
  const MvnSampler semi(VectorXd::Zero(3), v * v.transpose());
  CHECK((semi.factor() * semi.factor().transpose() - v * v.transpose()).norm() <= 1e-12);
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(0, 1) = bad(1, 0) = 2.0;
  CHECK_THROWS_AS(MvnSampler(VectorXd::Zero(2), bad), NumericalError);
}

TEST_CASE("linear multilevel generator") {
  VectorXd x = VectorXd::Zero(4);
  CHECK(linear_multilevel_cov(3.0, x)(0, 0) == 16.0);
  const MatrixXd c0 = linear_multilevel_cov(0.0, Eigen::Vector4d(0.3, -1.0, 2.0, 0.1));
  CHECK(c0(1, 1) == 1.0);
  CHECK(c0(1, 3) == 0.5);

  // standardised residuals have unit variance and correlation one half
  Rng rng(5, 0);
  const ClusterDataset d = gen_linear_multilevel(3.0, 30000, rng);
  double vv = 0, cc = 0;
  for (const auto& k : d.clusters()) {
    VectorXd e(4);
    for (int j = 0; j < 4; ++j) {
      const double s = 1.0 + 3.0 * std::exp(-2.0 * k.x(j, 0) * k.x(j, 0));
      e(j) = (k.y(j) - k.x(j, 0)) / s;
    }
    vv += e.squaredNorm() / 4.0;
    cc += (e.sum() * e.sum() - e.squaredNorm()) / 12.0;
  }
  CHECK(vv / 30000 == doctest::Approx(1.0).epsilon(0.03));
  CHECK(cc / 30000 == doctest::Approx(0.5).epsilon(0.03));
  CHECK(d.p() == 1);
  CHECK(d.max_group_size() == 4);
}

TEST_CASE("binomial copula generator") {
  Rng rng(6, 0);
  const ClusterDataset eq = gen_binomial_copula(LatentKind::equicorr, 100000, rng);
  double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0, marg = 0;
  for (const auto& k : eq.clusters()) {
    const double a = k.y(0), b = k.y(1);
    s1 += a;
    s2 += b;
    s11 += a * a;
    s22 += b * b;
    s12 += a * b;
    for (int j = 0; j < 20; ++j) marg += k.y(j) - 1.0 / (1.0 + std::exp(-k.x(j, 0)));
  }
  const double n = 100000;
  const double corr = (s12 / n - s1 / n * s2 / n) /
                      std::sqrt((s11 / n - s1 * s1 / n / n) * (s22 / n - s2 * s2 / n / n));
  CHECK(corr == doctest::Approx(0.4).epsilon(0.075));  // +-0.03
  CHECK(std::fabs(marg / (20 * n)) <= 5e-3);

  // latent correlation is the normalised ARMA(2,2) autocovariance
  const VectorXd acf = arma_autocovariance(Eigen::Vector2d(0.4, 0.5), Eigen::Vector2d(-0.9, 0.4),
                                           1.0, 19);
  const MatrixXd lat = copula_latent_correlation(LatentKind::arma22);
  for (int k = 0; k < 20; ++k) CHECK(lat(0, k) == doctest::Approx(acf(k) / acf(0)).epsilon(1e-14));

  // Residual correlations of the binary responses sit near the published
  // lag profile (loose check; the printed vector is rounded).
  const double published[] = {-0.07, 0.41, 0.12, 0.25, 0.16, 0.19, 0.16};
  const ClusterDataset ar = gen_binomial_copula(LatentKind::arma22, 50000, rng);
  for (int lag = 1; lag <= 7; ++lag) {
    double sab = 0, saa = 0, sbb = 0;
    for (const auto& k : ar.clusters())
      for (int j = 0; j + lag < 20; ++j) {
        auto res = [&](int t) { return k.y(t) - 1.0 / (1.0 + std::exp(-k.x(t, 0))); };
        const double a = res(j), b = res(j + lag);
        sab += a * b;
        saa += a * a;
        sbb += b * b;
      }
    CHECK(std::fabs(sab / std::sqrt(saa * sbb) - published[lag - 1]) <= 0.05);
  }
}

TEST_CASE("longitudinal covariance") {
  const MatrixXd om = longitudinal_omega(50);
  CHECK(om.diagonal() == VectorXd::Ones(50));
  CHECK(om(3, 4) == doctest::Approx(std::exp(-0.5) + 0.25 * std::cos(1.0) * std::exp(-0.05)));
  CHECK(om(3, 4) == doctest::Approx(0.7350).epsilon(1e-4));
  double lo = 1, hi = -1;
  for (int a = 0; a < 50; ++a)
    for (int b = 0; b < 50; ++b)
      if (a != b) {
        lo = std::min(lo, om(a, b));
        hi = std::max(hi, om(a, b));
      }
  CHECK(lo >= 0.24);
  CHECK(hi <= 0.74);
  CHECK(Eigen::LLT<MatrixXd>(om).info() == Eigen::Success);
  Rng rng(7, 0);
  const ClusterDataset d = gen_longitudinal_intro(5, rng);
  CHECK(d.total_observations() == 250);
}

TEST_CASE("experiment with only the unweighted fit") {
  ExperimentSettings es;
  es.replications = 5;
  const MseReport r = run_mse_experiment({DgpSpec{DgpKind::linear_multilevel, 1.0, 30}},
                                         {{"unweighted", DispersionObjective::none(),
                                           CovarianceStructure::independence()}},
                                         es);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].mse_ratio == 1.0);
  CHECK(r.rows[0].mc_se == 0.0);
  CHECK(r.to_tsv().rfind("dgp\tmethod\tI\treps\tmse_ratio\tmc_se", 0) == 0);
}

TEST_CASE("experiments are paired and independent of the worker layout") {
  ExperimentSettings es;
  es.replications = 6;
  es.root_seed = 77;
  const std::vector<DgpSpec> dgps{{DgpKind::linear_multilevel, 3.0, 40},
                                  {DgpKind::binomial_equicorr, 0.0, 20}};
  const std::vector<MethodSpec> methods{
      {"eqml", DispersionObjective::eqml(), CovarianceStructure::exchangeable(20)},
      {"sandwich", DispersionObjective::sandwich(VectorXd::Ones(1)),
       CovarianceStructure::exchangeable(20)}};
  const MseReport a = run_mse_experiment(dgps, methods, es);
  es.exec = Exec::serial;
  const MseReport b = run_mse_experiment(dgps, methods, es);
  CHECK(a.to_tsv() == b.to_tsv());
  CHECK(a.methods.front() == "unweighted");
  CHECK(a.digests == b.digests);
  CHECK(a.digests[0][0] != a.digests[0][1]);
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t r = 0; r < 6; ++r) {
        const double x = a.sq_errors[d][m][r], y = b.sq_errors[d][m][r];
        CHECK((x == y || (std::isnan(x) && std::isnan(y))));
      }
}

TEST_CASE("weighting helps in the well-specified linear design") {
  ExperimentSettings es;
  es.replications = 100;
  es.root_seed = 5;
  const MseReport r = run_mse_experiment(
      {{DgpKind::linear_multilevel, 0.0, 200}},
      {{"eqml", DispersionObjective::eqml(), CovarianceStructure::exchangeable(4, ScaleMode::free)}},
      es);
  CHECK(r.rows[r.method_index("eqml")].mse_ratio < 1.0);
}

TEST_CASE("dgp specification") {
  CHECK(parse_dgp("binomial_arma22") == DgpKind::binomial_arma22);
  CHECK_THROWS_AS(parse_dgp("garch"), ConfigError);
  DgpSpec bad;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.lambda = 0.0;
  bad.clusters = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(DgpSpec{DgpKind::binomial_equicorr}.family().link == Link::logit);
}

}
