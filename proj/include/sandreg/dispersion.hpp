#pragma once

#include "sandreg/nelder_mead.hpp"
#include "sandreg/sandwich.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace sandreg {

enum class ObjectiveKind { none, sandwich, sandwich_large_sample, eqml, gee };

std::string to_string(ObjectiveKind k);
ObjectiveKind parse_objective(const std::string& s);

struct DispersionObjective {
  ObjectiveKind kind = ObjectiveKind::sandwich;
  /// Contrast c; used by the sandwich kinds only.
  VectorXd target;

  static DispersionObjective none() { return {ObjectiveKind::none, {}}; }
  static DispersionObjective sandwich(VectorXd c) { return {ObjectiveKind::sandwich, std::move(c)}; }
  static DispersionObjective sandwich_large_sample(VectorXd c) {
    return {ObjectiveKind::sandwich_large_sample, std::move(c)};
  }
  static DispersionObjective eqml() { return {ObjectiveKind::eqml, {}}; }
  static DispersionObjective gee() { return {ObjectiveKind::gee, {}}; }

  bool is_sandwich() const {
    return kind == ObjectiveKind::sandwich || kind == ObjectiveKind::sandwich_large_sample;
  }
  void validate(std::size_t p) const;
};

struct OptimizerSettings {
  int restarts = 5;
  double init_scale = 0.5;
  /// Relative objective spread for Nelder-Mead.
  double tol = 1e-6;
  /// Simplex diameter in unconstrained coordinates.
  double xtol = 1e-5;
  int max_evals = 2000;
  std::uint64_t seed = 1;
  /// EQML/GEE beta/gamma alternation.
  int outer_rounds = 10;
  double outer_tol = 1e-6;
  ScoringSettings scoring;
  Exec exec = Exec::parallel;

  void validate() const;
};

struct SandregFit {
  VectorXd beta_hat;
  DispersionParams gamma_hat;
  /// Unconstrained shape coordinates of gamma_hat.
  VectorXd theta_hat;
  double objective_value = 0.0;
  std::vector<double> trace;
  bool converged = false;
  int evaluations = 0;
  int outer_rounds = 0;
  /// Structure actually fitted (sandwich kinds fix the scale at 1).
  CovarianceStructure structure;
  DispersionObjective objective;
  GlmFamily family;
  QmlSolution solution;

  std::string method() const;
};

/// sum_i [log det Sigma_i(gamma) + r_i^T Sigma_i(gamma)^{-1} r_i], r_i at beta_pilot.
double eqml_objective(const ClusterDataset& data, const GlmFamily& family,
                      const CovarianceStructure& s, const DispersionParams& gamma,
                      const VectorXd& beta_pilot);

/// sum_i || A_i^{-1/2} r_i r_i^T A_i^{-1/2} - scale P_i ||_F^2, r_i at beta_pilot.
double gee_objective(const ClusterDataset& data, const GlmFamily& family,
                     const CovarianceStructure& s, const DispersionParams& gamma,
                     const VectorXd& beta_pilot);

/// Objectives over the shape alone. When the structure's scale is free it is
/// replaced by its closed-form minimiser, returned through `scale`.
double profiled_eqml_objective(const ClusterDataset& data, const GlmFamily& family,
                               const CovarianceStructure& s, const VectorXd& shape,
                               const VectorXd& beta_pilot, double* scale = nullptr);
double profiled_gee_objective(const ClusterDataset& data, const GlmFamily& family,
                              const CovarianceStructure& s, const VectorXd& shape,
                              const VectorXd& beta_pilot, double* scale = nullptr);

/// Scalar objective over unconstrained shape coordinates on one dataset.
/// Sandwich kinds refit beta at each call; EQML/GEE evaluate at a fixed pilot.
class DispersionEvaluator {
 public:
  DispersionEvaluator(const ClusterDataset& data, GlmFamily family, CovarianceStructure s,
                      DispersionObjective objective, ScoringSettings scoring, Exec exec);

  double operator()(const VectorXd& theta_shape);

  /// Pilot beta for EQML/GEE, warm start for the sandwich kinds.
  void set_beta(const VectorXd& beta) { beta_ = beta; }
  /// When true, sandwich evaluations warm-start from the previous call's beta.
  void track_warm_start(bool on) { track_ = on; }
  /// Profiled scale from the latest EQML/GEE evaluation.
  double last_scale() const { return last_scale_; }

 private:
  const ClusterDataset* data_;
  GlmFamily family_;
  CovarianceStructure s_;
  DispersionObjective objective_;
  ScoringSettings scoring_;
  Exec exec_;
  std::optional<VectorXd> beta_;
  bool track_ = true;
  double last_scale_ = 1.0;
};

/// Structure actually optimised for an objective (scale fixed at 1 for the
/// sandwich kinds, independence for `none`).
CovarianceStructure effective_structure(const CovarianceStructure& s,
                                        const DispersionObjective& objective);

SandregFit minimize_dispersion(const ClusterDataset& data, const GlmFamily& family,
                               const CovarianceStructure& s,
                               const DispersionObjective& objective,
                               const OptimizerSettings& settings,
                               const std::optional<VectorXd>& warm_shape = std::nullopt);

/// Infinity norm of the central-difference gradient of the EQML objective in
/// the full gamma at gamma_hat; near zero at an interior EQML solution.
double eqml_equation_residual(const ClusterDataset& data, const SandregFit& fit);

}  // namespace sandreg
