#pragma once

#include "sandreg/dispersion.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sandreg {

struct VarianceEstimate {
  MatrixXd vhat;
  /// beta-hat_(-i) - beta-hat per cluster.
  std::vector<VectorXd> deltas;
  int newton_steps_used = 0;
  /// theta_(-i) - theta-hat in unconstrained shape coordinates.
  std::vector<VectorXd> gamma_steps;
  /// Clusters whose Hessian could not be used (Delta set to zero).
  std::size_t fallbacks = 0;
  std::vector<std::string> warnings;

  double contrast_variance(const VectorXd& c) const { return c.dot(vhat * c); }
};

struct JackknifeSettings {
  int steps = 1;
  /// Finite-difference step is rel_step * (1 + |theta|).
  double rel_step = 1e-4;
  double eigen_floor = 1e-8;
  /// Cap on each dispersion step in unconstrained coordinates (max norm).
  double max_step = 1.0;
  /// Step halvings allowed before the step is dropped.
  int max_halvings = 20;
  /// Inner Fisher-scoring tolerance for the leave-one-out losses.
  double scoring_tol = 1e-12;
  Exec exec = Exec::parallel;
};

/// Leave-one-cluster-out jackknife accounting for re-estimation of the
/// dispersion. The per-cluster gamma update is a Newton step on the
/// leave-one-out objective, taken in the direction that decreases it,
/// capped at max_step and halved until the leave-one-out loss does not rise.
VarianceEstimate jackknife_variance(const SandregFit& fit, const ClusterDataset& data,
                                    const VectorXd& c, const JackknifeSettings& settings = {});

struct ModelCandidate {
  std::string label;
  CovarianceStructure structure;
  std::optional<VectorXd> warm_start;
};

struct SelectionRow {
  std::string label;
  VectorXd gamma;
  double contrast_variance = 0.0;
  bool selected = false;
  bool failed = false;
  std::string error;
  std::optional<SandregFit> fit;
};

struct SelectionResult {
  std::string selected;
  std::vector<SelectionRow> rows;
};

/// Shape of a smaller fitted model mapped into a larger nesting one, if any.
std::optional<VectorXd> nested_warm_start(const CovarianceStructure& from, const VectorXd& shape,
                                          const CovarianceStructure& to);

/// Fits every candidate and picks the smallest c^T V c. Ties keep the first
/// candidate. Candidates that fail are reported and skipped.
SelectionResult select_model(const std::vector<ModelCandidate>& candidates,
                             const ClusterDataset& data, const GlmFamily& family,
                             const DispersionObjective& objective, const VectorXd& c,
                             const OptimizerSettings& settings,
                             const JackknifeSettings& jackknife = {});

/// [d g^{-1}/d eta at c^T beta-hat]^2 c^T V c.
double delta_method_variance(const VectorXd& beta_hat, const MatrixXd& vhat, const VectorXd& c,
                             const GlmFamily& family);

}  // namespace sandreg
