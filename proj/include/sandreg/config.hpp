#pragma once

#include "sandreg/counterexample.hpp"
#include "sandreg/data_io.hpp"
#include "sandreg/inference.hpp"
#include "sandreg/sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sandreg {

inline constexpr const char* kVersion = "0.1.0";

/// Settings for every subcommand, parsed from a JSON object. Keys:
///
///   family            "gaussian" | "binomial" | "poisson"
///   link, variance    override the family's link / variance function
///   structure         working covariance for fit (see parse_structure)
///   scale             "unit" | "free" (default: free for constant variance)
///   re_columns, re_intercept, re_degree, piece_column   structure selectors
///   candidates        [{label, structure, scale?, re_columns?, re_intercept?,
///                       re_degree?, piece_column?, warm_start?}] for select
///   objective         "sandwich" | "sandwich_large_sample" | "eqml" | "gee" | "none"
///   compare           objectives reported next to the main one by fit
///   contrast          numeric vector c, or
///   contrast_column   covariate name giving the unit contrast
///   predict_at        covariate row for a delta-method prediction SE
///   restarts, init_scale, tol, xtol, max_evals, seed, outer_rounds, outer_tol
///   jackknife_steps   Newton steps per leave-one-out dispersion update
///   threads           worker count (0 = all available)
///   cluster_column, response_column, covariate_columns   CSV layout
///   dgps              [{kind, lambda?, clusters, beta?}] for simulate
///   methods           [{name, objective, structure?, scale?}] for simulate
///   replications      simulate replication count
///   max_failure_rate  simulate abort threshold
///   tau, sigma2, c_tilde, deltas, eta   counterexample sweep
///
/// Unknown keys are rejected with ConfigError.
struct RunConfig {
  GlmFamily family = GlmFamily::gaussian();
  CovarianceStructure structure = CovarianceStructure::exchangeable(2, ScaleMode::free);
  std::vector<ModelCandidate> candidates;
  ObjectiveKind objective = ObjectiveKind::sandwich;
  std::vector<ObjectiveKind> compare;
  VectorXd contrast;
  std::string contrast_column;
  VectorXd predict_at;
  OptimizerSettings optimizer;
  int jackknife_steps = 1;
  int threads = 0;
  CsvLayout layout;

  std::vector<DgpSpec> dgps;
  std::vector<MethodSpec> methods;
  std::size_t replications = 100;
  double max_failure_rate = 0.05;

  CounterexampleSpec counterexample;
  std::vector<double> deltas;
  std::optional<double> eta;

  /// FNV-1a digest of the canonical JSON form.
  std::uint64_t digest = 0;

  /// Contrast resolved against the covariate names.
  VectorXd resolve_contrast(const std::vector<std::string>& covariates) const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

std::string hex_digest(std::uint64_t d);

}  // namespace sandreg
