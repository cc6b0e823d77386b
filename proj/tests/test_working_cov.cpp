#include "helpers.hpp"
#include "sandreg/error.hpp"
#include "sandreg/working_cov.hpp"

#include <doctest.h>

using namespace sandreg;

namespace {

DispersionParams shape1(double v, double scale = 1.0) {
  return DispersionParams{VectorXd::Constant(1, v), scale};
}

bool is_pd(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

std::vector<CovarianceStructure> all_structures() {
  return {CovarianceStructure::independence(ScaleMode::free),
          CovarianceStructure::exchangeable(6, ScaleMode::free),
          CovarianceStructure::ar1(),
          CovarianceStructure::arma(2, 2, ScaleMode::free),
          CovarianceStructure::arma(0, 1),
          CovarianceStructure::random_effects({1}, true, 2, ScaleMode::free),
          CovarianceStructure::two_piece(1, ScaleMode::free)};
}

}  // namespace

TEST_SUITE("working_cov") {

TEST_CASE("correlation examples") {
  const auto ar = CovarianceStructure::ar1();
  CHECK(build_correlation(ar, shape1(0.0), 3) == MatrixXd::Identity(3, 3));
  MatrixXd expect(3, 3);
  expect << 1, .5, .25, .5, 1, .5, .25, .5, 1;
  CHECK((build_correlation(ar, shape1(0.5), 3) - expect).norm() <= 1e-15);

  const auto ex = CovarianceStructure::exchangeable(3);
  const MatrixXd e = build_correlation(ex, shape1(0.5), 3);
  CHECK(e.diagonal() == VectorXd::Ones(3));
  CHECK(e(0, 1) == 0.5);
  CHECK(e(0, 2) == 0.5);
  CHECK(e(1, 2) == 0.5);

  const auto exf = CovarianceStructure::exchangeable(3, ScaleMode::free);
  CHECK(build_correlation(exf, shape1(0.5, 2.0), 3)(0, 0) == 2.0);

  CHECK_THROWS_AS(build_correlation(ex, shape1(-0.6), 3), NumericalError);
  CHECK_THROWS_AS(build_correlation(ar, shape1(1.0), 3), NumericalError);
}

TEST_CASE("every structure gives symmetric positive definite matrices") {
  Rng rng(5, 1);
  for (const auto& s : all_structures()) {
    for (int rep = 0; rep < 20; ++rep) {
      VectorXd theta(static_cast<Eigen::Index>(s.dim()));
      for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = 6.0 * rng.uniform() - 3.0;
      const DispersionParams g = unpack(s, theta);
      for (int n : {1, 2, 6, 50}) {
        MatrixXd x(n, 2);
        for (int j = 0; j < n; ++j) {
          x(j, 0) = 1.0;
          x(j, 1) = rng.normal();
        }
        if (s.kind == CovKind::exchangeable && n > 6) continue;
        const ClusterData c(VectorXd::Zero(n), x);
        const MatrixXd p = pseudo_correlation(s, g, c);
        CHECK((p - p.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * p.cwiseAbs().maxCoeff());
        CHECK(is_pd(p));
        if (s.scale_mode == ScaleMode::unit && s.kind != CovKind::random_effects &&
            s.kind != CovKind::two_piece)
          CHECK((p.diagonal() - VectorXd::Ones(n)).norm() <= 1e-12);
      }
    }
  }
}

TEST_CASE("arma autocovariance against closed forms and an external reference") {
  // AR(1): sigma2 phi^k / (1 - phi^2)
  const VectorXd ar1 = arma_autocovariance(VectorXd::Constant(1, 0.5), VectorXd(), 1.0, 4);
  for (int k = 0; k <= 4; ++k)
    CHECK(ar1(k) == doctest::Approx(std::pow(0.5, k) / 0.75).epsilon(1e-12));

  const VectorXd ma1 = arma_autocovariance(VectorXd(), VectorXd::Constant(1, 0.4), 1.0, 3);
  CHECK(ma1(0) == doctest::Approx(1.16));
  CHECK(ma1(1) == doctest::Approx(0.4));
  CHECK(std::fabs(ma1(2)) <= 1e-14);
  CHECK(std::fabs(ma1(3)) <= 1e-14);

  // ARMA(1,1), phi 0.6, theta 0.3, sigma2 2; values from statsmodels arma_acovf.
  const VectorXd a11 =
      arma_autocovariance(VectorXd::Constant(1, 0.6), VectorXd::Constant(1, 0.3), 2.0, 3);
  const double ref11[] = {4.53125, 3.31875, 1.99125, 1.19475};
  for (int k = 0; k < 4; ++k) CHECK(a11(k) == doctest::Approx(ref11[k]).epsilon(1e-12));

  // ARMA(2,2), phi (0.4, 0.5), theta (-0.9, 0.4); statsmodels arma_acovf.
  const VectorXd a22 = arma_autocovariance(Eigen::Vector2d(0.4, 0.5), Eigen::Vector2d(-0.9, 0.4),
                                           1.0, 5);
  const double ref22[] = {2.259259259259259,  -0.39259259259259277, 1.3725925925925926,
                          0.3527407407407407, 0.8273925925925926,   0.5073274074074074};
  for (int k = 0; k < 6; ++k) CHECK(a22(k) == doctest::Approx(ref22[k]).epsilon(1e-12));

  CHECK_THROWS_AS(arma_autocovariance(VectorXd::Constant(1, 1.0), VectorXd(), 1.0, 2),
                  NumericalError);
}

TEST_CASE("arma autocovariance obeys the Yule-Walker recursion beyond the MA order") {
  Rng rng(9, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const int p = 1 + rep % 3, q = rep % 3;
    VectorXd pacf(p);
    for (int k = 0; k < p; ++k) pacf(k) = 1.8 * rng.uniform() - 0.9;
    const VectorXd phi = pacf_to_ar(pacf);
    const VectorXd theta = rng.normals(q);
    const VectorXd g = arma_autocovariance(phi, theta, 1.0, 12);
    for (int k = q + 1; k <= 12; ++k) {
      double rhs = 0.0;
      for (int j = 1; j <= p; ++j) rhs += phi(j - 1) * g(std::abs(k - j));
      CHECK(std::fabs(g(k) - rhs) <= 1e-10 * g(0));
    }
  }
}

TEST_CASE("pacf transform") {
  Rng rng(3, 0);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd pacf(3);
    for (int k = 0; k < 3; ++k) pacf(k) = 1.98 * rng.uniform() - 0.99;
    const VectorXd phi = pacf_to_ar(pacf);
    CHECK(ar_stationary(phi));
    CHECK((ar_to_pacf(phi) - pacf).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK_FALSE(ar_stationary(VectorXd::Constant(1, 1.01)));
  CHECK_FALSE(ar_stationary(Eigen::Vector2d(0.6, 0.5)));
}

TEST_CASE("random effects covariance") {
  const auto s = CovarianceStructure::random_effects({}, true, 1, ScaleMode::free);
  const ClusterData c(VectorXd::Zero(3), MatrixXd::Ones(3, 1));
  const MatrixXd sig =
      random_effects_cov(s, DispersionParams::random_effects(MatrixXd::Constant(1, 1, 2.0), 0.5), c);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) CHECK(sig(a, b) == doctest::Approx(a == b ? 2.5 : 2.0));

  // V_u = 0 is outside the positive-definite Cholesky domain; a vanishing
  // diagonal gives sigma2 I in the limit.
  DispersionParams tiny = DispersionParams::identity(s);
  tiny.shape(0) = 1e-12;
  tiny.scale = 0.7;
  CHECK((random_effects_cov(s, tiny, c) - 0.7 * MatrixXd::Identity(3, 3)).norm() <= 1e-12);

  // Triple-product oracle with two random columns.
  Rng rng(21, 0);
  const auto s2 = CovarianceStructure::random_effects({0, 1}, false, 1, ScaleMode::free);
  MatrixXd x(5, 2);
  for (int j = 0; j < 5; ++j)
    for (int k = 0; k < 2; ++k) x(j, k) = rng.normal();
  const ClusterData c2(VectorXd::Zero(5), x);
  MatrixXd vu(2, 2);
  vu << 1.3, 0.4, 0.4, 0.8;
  const MatrixXd ref = x * vu * x.transpose() + 0.9 * MatrixXd::Identity(5, 5);
  CHECK(testing::rel_err(random_effects_cov(s2, DispersionParams::random_effects(vu, 0.9), c2), ref) <=
        1e-12);
}

TEST_CASE("weight matrix inverts the working covariance") {
  Rng rng(17, 0);
  MatrixXd x(6, 2);
  for (int j = 0; j < 6; ++j) {
    x(j, 0) = 1.0;
    x(j, 1) = rng.normal();
  }
  const ClusterData c(VectorXd::Zero(6), x);
  const VectorXd beta = Eigen::Vector2d(0.2, -0.7);

  const auto ind = CovarianceStructure::independence();
  CHECK((weight_matrix(c, GlmFamily::gaussian(), beta, ind, DispersionParams::identity(ind)) -
         MatrixXd::Identity(6, 6))
            .norm() <= 1e-14);

  const auto ex = CovarianceStructure::exchangeable(6);
  const MatrixXd p = build_correlation(ex, shape1(0.3), 6);
  CHECK(testing::rel_err(weight_matrix(c, GlmFamily::gaussian(), beta, ex, shape1(0.3)),
                         MatrixXd(p.inverse())) <= 1e-12);

  for (const auto& s : all_structures()) {
    VectorXd theta(static_cast<Eigen::Index>(s.dim()));
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = rng.normal();
    const DispersionParams g = unpack(s, theta);
    for (const GlmFamily f : {GlmFamily::binomial(), GlmFamily::poisson()}) {
      const MatrixXd w = weight_matrix(c, f, beta, s, g);
      const MatrixXd sig = working_covariance(c, f, beta, s, g);
      CHECK((w * sig - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("pack and unpack are inverse bijections") {
  CHECK(pack(CovarianceStructure::ar1(), shape1(0.0))(0) == 0.0);
  const auto ex = CovarianceStructure::exchangeable(4, ScaleMode::free);
  CHECK(pack(ex, shape1(0.2, 1.0))(1) == 0.0);

  Rng rng(77, 0);
  for (const auto& s : all_structures()) {
    for (int rep = 0; rep < 1000; ++rep) {
      VectorXd theta(static_cast<Eigen::Index>(s.dim()));
      for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = 6.0 * rng.uniform() - 3.0;
      const DispersionParams g = unpack(s, theta);
      validate_params(s, g);
      CHECK((pack(s, g) - theta).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("exchangeable bound follows the largest group") {
  const auto s = CovarianceStructure::exchangeable(5);
  const double lo = unpack_shape(s, VectorXd::Constant(1, -40.0))(0);
  const double hi = unpack_shape(s, VectorXd::Constant(1, 40.0))(0);
  CHECK(lo == doctest::Approx(-0.25 + 1e-6).epsilon(1e-9));
  CHECK(hi == doctest::Approx(1.0 - 1e-6).epsilon(1e-12));
  CHECK(is_pd(build_correlation(s, shape1(-0.2499), 5)));
}

TEST_CASE("structure metadata and validation") {
  CHECK(CovarianceStructure::arma(2, 1, ScaleMode::free).dim() == 4);
  CHECK(CovarianceStructure::random_effects({1}, true, 2).shape_dim() == 6);
  CHECK(parse_structure("arma(2,2)", ScaleMode::unit).ma_order == 2);
  CHECK(parse_structure("ar1", ScaleMode::free).parameter_names().size() == 2);
  CHECK_THROWS_AS(parse_structure("toeplitz", ScaleMode::unit), ConfigError);
  CHECK_THROWS_AS(CovarianceStructure::arma(0, 0).validate(2), ConfigError);
  CHECK_THROWS_AS(CovarianceStructure::random_effects({3}, true, 1).validate(2), ConfigError);
  CHECK_THROWS_AS(CovarianceStructure::random_effects({0, 1}, true, 2).validate(2), ConfigError);
  CHECK_THROWS_AS(CovarianceStructure::two_piece(4).validate(2), ConfigError);
}

}
