#pragma once

#include "sandreg/dispersion.hpp"
#include "sandreg/rng.hpp"

#include <string>
#include <vector>

namespace sandreg {

enum class DgpKind { linear_multilevel, binomial_equicorr, binomial_arma22, longitudinal_intro };

std::string to_string(DgpKind k);
DgpKind parse_dgp(const std::string& s);

struct DgpSpec {
  DgpKind kind = DgpKind::linear_multilevel;
  /// Heteroscedasticity strength for linear_multilevel.
  double lambda = 0.0;
  std::size_t clusters = 100;
  VectorXd beta_true = VectorXd::Ones(1);

  void validate() const;
  std::string label() const;
  GlmFamily family() const;
};

/// Groups of 4, X ~ N(0, I), Y | X ~ N(X beta, Sigma(X)) with
/// Sigma_jk = rho_jk s(X_j) s(X_k), s(x) = 1 + lambda exp(-2 x^2),
/// rho_jk = 1 on the diagonal and 0.5 off it.
ClusterDataset gen_linear_multilevel(double lambda, std::size_t clusters, Rng& rng,
                                     double beta = 1.0);

/// Conditional covariance used by gen_linear_multilevel.
MatrixXd linear_multilevel_cov(double lambda, const VectorXd& x);

enum class LatentKind { equicorr, arma22 };

/// Groups of 20 binary responses through a Gaussian copula. The latent
/// correlation is 0.6 equicorrelated or the ARMA(2,2) autocorrelation with
/// AR (0.4, 0.5) and MA (-0.9, 0.4).
ClusterDataset gen_binomial_copula(LatentKind latent, std::size_t clusters, Rng& rng,
                                   double beta = 1.0);

MatrixXd copula_latent_correlation(LatentKind latent, std::size_t n = 20);

/// Groups of 50, X ~ N(0, 0.9 11^T + 0.1 I), Y | X ~ N(X beta, Omega).
ClusterDataset gen_longitudinal_intro(std::size_t clusters, Rng& rng, double beta = 1.0);

/// Omega_jk = 1 if j = k, else exp(-|j-k|^{1/4} / 2) + 0.25 cos|j-k| exp(-|j-k| / 20).
MatrixXd longitudinal_omega(std::size_t n = 50);

ClusterDataset generate(const DgpSpec& dgp, Rng& rng);

struct MethodSpec {
  std::string name;
  DispersionObjective objective;
  CovarianceStructure structure;
};

struct ExperimentSettings {
  std::size_t replications = 100;
  std::uint64_t root_seed = 1;
  OptimizerSettings optimizer;
  /// Target contrast; defaults to the first coordinate.
  VectorXd contrast;
  double max_failure_rate = 0.05;
  Exec exec = Exec::parallel;
};

struct MseRow {
  std::string dgp;
  std::string method;
  std::size_t clusters = 0;
  std::size_t reps = 0;
  double mse = 0.0;
  double mse_ratio = 1.0;
  double mc_se = 0.0;
  std::size_t failures = 0;
};

struct MseReport {
  std::vector<DgpSpec> dgps;
  std::vector<std::string> methods;
  std::vector<MseRow> rows;
  /// sq_errors[dgp][method][rep]; NaN marks a failed fit.
  std::vector<std::vector<std::vector<double>>> sq_errors;
  /// Dataset digest per (dgp, rep).
  std::vector<std::vector<std::uint64_t>> digests;
  std::size_t attempts = 0;
  std::size_t failures = 0;
  bool aborted = false;

  double failure_rate() const {
    return attempts ? static_cast<double>(failures) / static_cast<double>(attempts) : 0.0;
  }
  /// Mean and standard error of sq_error(a) - sq_error(b) over reps where both succeeded.
  std::pair<double, double> paired_difference(std::size_t dgp, std::size_t a,
                                              std::size_t b) const;
  std::size_t method_index(const std::string& name) const;
  /// Columns dgp, method, I, reps, mse_ratio, mc_se, mse, failures.
  std::string to_tsv() const;
};

/// Fits every method on the same simulated datasets. An unweighted method is
/// added first when the list lacks one; ratios are relative to it.
MseReport run_mse_experiment(const std::vector<DgpSpec>& dgps, std::vector<MethodSpec> methods,
                             const ExperimentSettings& settings);

/// Formats with 17 significant digits.
std::string format_number(double v);

}  // namespace sandreg
