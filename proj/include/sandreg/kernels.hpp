#pragma once

#include "sandreg/glm.hpp"
#include "sandreg/parallel.hpp"
#include "sandreg/working_cov.hpp"

#include <vector>

namespace sandreg::kernels {

/// Per-cluster quantities at a fixed (beta, gamma).
struct ClusterTerms {
  MatrixXd d;      // D_i
  MatrixXd w;      // W_i
  MatrixXd sigma;  // W_i^{-1}
  VectorXd r;      // Y_i - mu_i
  MatrixXd dtwd;   // D_i^T W_i D_i
  VectorXd dtwr;   // D_i^T W_i R_i
  double logdet_sigma = 0.0;
};

/// Leave-one-cluster-out quantities given M^{-1} = (sum D^T W D)^{-1}.
struct LooTerms {
  MatrixXd u;      // W_i^{-1} - D_i M^{-1} D_i^T
  MatrixXd t;      // (M - D_i^T W_i D_i)^{-1} via Woodbury
  VectorXd g;      // D_i^T W_i R_i
  VectorXd delta;  // -T_i g_i
  int jitter_steps = 0;
};

/// Factorised scale * P for one group size.
struct CorrelationFactor {
  MatrixXd p;
  MatrixXd p_inv;
  double logdet = 0.0;
};

/// Factors of P for each distinct group size, or empty when P depends on
/// covariates. Indexed by group size.
std::vector<CorrelationFactor> correlation_factors(const ClusterDataset& data,
                                                   const CovarianceStructure& s,
                                                   const DispersionParams& gamma);

ClusterTerms cluster_term(const ClusterData& cluster, const GlmFamily& family,
                          const CovarianceStructure& s, const DispersionParams& gamma,
                          const VectorXd& beta, const CorrelationFactor* factor);

/// Throws LeverageError when U_i cannot be factorised after jitter escalation.
LooTerms loo_term(std::size_t i, const ClusterTerms& term, const MatrixXd& m_inv);

namespace serial {
std::vector<ClusterTerms> cluster_terms(const ClusterDataset& data, const GlmFamily& family,
                                        const CovarianceStructure& s,
                                        const DispersionParams& gamma, const VectorXd& beta);
std::vector<LooTerms> loo_terms(const std::vector<ClusterTerms>& terms,
                                const MatrixXd& m_inv);
}  // namespace serial

namespace omp {
std::vector<ClusterTerms> cluster_terms(const ClusterDataset& data, const GlmFamily& family,
                                        const CovarianceStructure& s,
                                        const DispersionParams& gamma, const VectorXd& beta);
std::vector<LooTerms> loo_terms(const std::vector<ClusterTerms>& terms,
                                const MatrixXd& m_inv);
}  // namespace omp

std::vector<ClusterTerms> cluster_terms(Exec exec, const ClusterDataset& data,
                                        const GlmFamily& family, const CovarianceStructure& s,
                                        const DispersionParams& gamma, const VectorXd& beta);
std::vector<LooTerms> loo_terms(Exec exec, const std::vector<ClusterTerms>& terms,
                                const MatrixXd& m_inv);

/// sum_i D_i^T W_i D_i and sum_i D_i^T W_i R_i, accumulated in cluster order.
void reduce_normal_equations(const std::vector<ClusterTerms>& terms, MatrixXd& dtwd,
                             VectorXd& dtwr);

/// sum_i delta_i delta_i^T in cluster order.
MatrixXd reduce_outer(const std::vector<LooTerms>& loo);

}  // namespace sandreg::kernels
