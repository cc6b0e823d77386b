#pragma once

#include "sandreg/qml.hpp"

namespace sandreg {

/// Leave-one-cluster-out caches built from a QmlSolution.
struct LooCache {
  std::vector<kernels::LooTerms> clusters;

  /// S_i = g_i g_i^T.
  MatrixXd s(std::size_t i) const { return clusters[i].g * clusters[i].g.transpose(); }
};

struct LossValue {
  double value = 0.0;
  MatrixXd vtilde;
  VectorXd beta;
};

LooCache build_loo_cache(const QmlSolution& solution, Exec exec = Exec::parallel);

/// beta-tilde_(-i) - beta-tilde. Exact in the linear model.
VectorXd loo_beta(const QmlSolution& solution, std::size_t i);

/// c^T (sum_i T_i S_i T_i) c at a solution already in hand.
LossValue sandwich_loss(const QmlSolution& solution, const VectorXd& c,
                        Exec exec = Exec::parallel);

/// Fits beta-tilde(gamma) and evaluates the finite-sample sandwich loss.
/// `warm` seeds Fisher scoring for non-linear families.
LossValue sandwich_loss(const ClusterDataset& data, const GlmFamily& family,
                        const CovarianceStructure& s, const DispersionParams& gamma,
                        const VectorXd& c, const std::optional<VectorXd>& warm = std::nullopt,
                        const ScoringSettings& settings = {}, Exec exec = Exec::parallel);

/// c^T M^{-1} (sum_i g_i g_i^T) M^{-1} c, the plug-in large-sample form.
LossValue large_sample_sandwich_loss(const QmlSolution& solution, const VectorXd& c);

LossValue large_sample_sandwich_loss(const ClusterDataset& data, const GlmFamily& family,
                                     const CovarianceStructure& s,
                                     const DispersionParams& gamma, const VectorXd& c,
                                     const std::optional<VectorXd>& warm = std::nullopt,
                                     const ScoringSettings& settings = {},
                                     Exec exec = Exec::parallel);

}  // namespace sandreg
