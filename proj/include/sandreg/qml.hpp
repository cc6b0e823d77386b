#pragma once

#include "sandreg/kernels.hpp"

#include <optional>

namespace sandreg {

struct ScoringSettings {
  /// Converged when ||score||_inf <= tol * (1 + ||beta||_inf).
  double tol = 1e-8;
  int max_iter = 100;
  int max_halvings = 20;
};

/// beta-tilde(gamma) together with the per-cluster terms at the solution.
struct QmlSolution {
  VectorXd beta;
  double score_norm = 0.0;
  int iterations = 0;
  std::vector<kernels::ClusterTerms> terms;
  MatrixXd dtwd;      // sum D^T W D
  MatrixXd dtwd_inv;  // its inverse
  /// Reciprocal condition estimate of dtwd (ratio of extreme eigenvalues).
  double rcond = 1.0;
  /// Binomial fits with |X beta| > 30 on a growing share of observations.
  bool separation_warning = false;
};

/// sum_i D_i^T W_i (Y_i - mu_i(beta)).
VectorXd estimating_equation(const ClusterDataset& data, const GlmFamily& family,
                             const CovarianceStructure& s, const DispersionParams& gamma,
                             const VectorXd& beta, Exec exec = Exec::parallel);

/// Closed-form weighted least squares (identity link, constant variance).
QmlSolution solve_wls(const ClusterDataset& data, const CovarianceStructure& s,
                      const DispersionParams& gamma, Exec exec = Exec::parallel);

QmlSolution fisher_scoring(const ClusterDataset& data, const GlmFamily& family,
                           const CovarianceStructure& s, const DispersionParams& gamma,
                           const VectorXd& beta_init, const ScoringSettings& settings = {},
                           Exec exec = Exec::parallel);

/// GLM fit under independence from beta = 0.
VectorXd pooled_glm_start(const ClusterDataset& data, const GlmFamily& family,
                          Exec exec = Exec::parallel);

/// solve_wls for the linear model, fisher_scoring otherwise (warm-started
/// from `warm` or the pooled fit).
QmlSolution fit_beta(const ClusterDataset& data, const GlmFamily& family,
                     const CovarianceStructure& s, const DispersionParams& gamma,
                     const std::optional<VectorXd>& warm = std::nullopt,
                     const ScoringSettings& settings = {}, Exec exec = Exec::parallel);

/// Completes a solution from its cluster terms: reduces the normal matrix,
/// inverts it, and records the score norm. Throws NumericalError when the
/// normal matrix is singular.
void finalise_solution(QmlSolution& sol);

}  // namespace sandreg
