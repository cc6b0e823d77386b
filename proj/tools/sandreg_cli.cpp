// sandreg: fit, simulate, select and counterexample subcommands.

#include "sandreg/config.hpp"
#include "sandreg/counterexample.hpp"
#include "sandreg/data_io.hpp"
#include "sandreg/error.hpp"
#include "sandreg/inference.hpp"
#include "sandreg/sim.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace {

using namespace sandreg;

constexpr int kExitConfig = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitData = 4;

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::config: return kExitConfig;
    case Error::Category::data: return kExitData;
    case Error::Category::convergence:
    case Error::Category::numerical: return kExitConvergence;
  }
  return kExitConvergence;
}

struct Output {
  std::ofstream file;
  std::ostream* out = &std::cout;
  // Human summary goes to stdout when results are written to a file.
  std::ostream* summary = &std::cerr;

  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path);
    if (!file) throw ConfigError("cannot write " + path);
    out = &file;
    summary = &std::cout;
  }
};

void write_preamble(std::ostream& os, const std::string& command, const RunConfig& cfg) {
  os << "# sandreg " << kVersion << " " << command << " config " << hex_digest(cfg.digest)
     << "\n";
}

std::string join(const VectorXd& v) {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) s += ",";
    s += format_number(v(k));
  }
  return s;
}

std::vector<std::string> covariate_names(const RunConfig& cfg, const std::string& path) {
  if (!cfg.layout.covariates.empty()) return cfg.layout.covariates;
  std::vector<std::string> names;
  for (const auto& col : read_csv_header(path))
    if (col != cfg.layout.cluster && col != cfg.layout.response) names.push_back(col);
  return names;
}

// Config errors that depend on the covariate count surface here, before the
// body of the file is parsed.
VectorXd check_against_header(const RunConfig& cfg, const std::vector<std::string>& names) {
  const std::size_t p = names.size();
  VectorXd c = cfg.resolve_contrast(names);
  if (cfg.predict_at.size() && static_cast<std::size_t>(cfg.predict_at.size()) != p)
    throw ConfigError("predict_at has " + std::to_string(cfg.predict_at.size()) +
                      " entries for " + std::to_string(p) + " covariates");
  cfg.structure.validate(p);
  for (const auto& m : cfg.candidates) m.structure.validate(p);
  return c;
}

DispersionObjective objective_for(ObjectiveKind kind, const VectorXd& c) {
  return {kind, kind == ObjectiveKind::sandwich || kind == ObjectiveKind::sandwich_large_sample
                    ? c
                    : VectorXd()};
}

JackknifeSettings jackknife_settings(const RunConfig& cfg) {
  JackknifeSettings js;
  js.steps = cfg.jackknife_steps;
  return js;
}

int cmd_fit(const RunConfig& cfg, const std::string& data_path, const std::string& out_path) {
  const auto names = covariate_names(cfg, data_path);
  const VectorXd c = check_against_header(cfg, names);
  Output out(out_path);
  const ClusterDataset data = ingest_csv(data_path, cfg.layout);

  std::vector<ObjectiveKind> kinds{ObjectiveKind::none, cfg.objective};
  for (auto k : cfg.compare)
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  if (cfg.objective == ObjectiveKind::none) kinds.erase(kinds.begin() + 1);

  struct Result {
    SandregFit fit;
    VarianceEstimate var;
  };
  std::vector<Result> results;
  for (auto kind : kinds) {
    const DispersionObjective obj = objective_for(kind, c);
    SandregFit fit = minimize_dispersion(data, cfg.family, cfg.structure, obj, cfg.optimizer);
    VarianceEstimate var = jackknife_variance(fit, data, c, jackknife_settings(cfg));
    results.push_back({std::move(fit), std::move(var)});
  }
  const double v_unweighted = results.front().var.contrast_variance(c);

  std::ostream& os = *out.out;
  write_preamble(os, "fit", cfg);
  os << "# data " << hex_digest(data.digest()) << " clusters " << data.num_clusters()
     << " observations " << data.total_observations() << "\n";
  os << "record\tmethod\tname\testimate\tse\textra\n";
  for (const auto& r : results) {
    const std::string m = r.fit.method();
    const double v = r.var.contrast_variance(c);
    os << "contrast\t" << m << "\tc'beta\t" << format_number(c.dot(r.fit.beta_hat)) << "\t"
       << format_number(std::sqrt(v)) << "\t" << format_number(v) << "\n";
    os << "reduction_pct\t" << m << "\tvariance\t"
       << format_number(100.0 * (1.0 - v / v_unweighted)) << "\t\t\n";
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      os << "beta\t" << m << "\t" << names[k] << "\t" << format_number(r.fit.beta_hat(kk))
         << "\t" << format_number(std::sqrt(r.var.vhat(kk, kk))) << "\t\n";
    }
    const VectorXd gamma = r.fit.gamma_hat.full(r.fit.structure);
    const auto labels = r.fit.structure.parameter_names();
    for (std::size_t k = 0; k < labels.size(); ++k)
      os << "gamma\t" << m << "\t" << r.fit.structure.label() << "." << labels[k] << "\t"
         << format_number(gamma(static_cast<Eigen::Index>(k))) << "\t\t\n";
    os << "loss\t" << m << "\t" << to_string(r.fit.objective.kind) << "\t"
       << format_number(r.fit.objective_value) << "\t\t" << (r.fit.converged ? "converged" : "not_converged")
       << "\n";
    if (cfg.predict_at.size()) {
      const double eta = cfg.predict_at.dot(r.fit.beta_hat);
      const double pv =
          delta_method_variance(r.fit.beta_hat, r.var.vhat, cfg.predict_at, cfg.family);
      os << "prediction\t" << m << "\tmean\t" << format_number(cfg.family.linkinv(eta)) << "\t"
         << format_number(std::sqrt(pv)) << "\t\n";
    }
    for (const auto& w : r.var.warnings) os << "# warning " << m << ": " << w << "\n";
  }

  std::ostream& sum = *out.summary;
  sum << "sandreg fit: " << data.num_clusters() << " clusters, " << data.total_observations()
      << " observations, structure " << cfg.structure.label() << "\n";
  for (const auto& r : results) {
    const double v = r.var.contrast_variance(c);
    sum << "  " << r.fit.method() << ": c'beta = " << c.dot(r.fit.beta_hat)
        << ", se = " << std::sqrt(v) << ", variance reduction vs unweighted = "
        << 100.0 * (1.0 - v / v_unweighted) << "%\n";
  }
  return 0;
}

int cmd_select(const RunConfig& cfg, const std::string& data_path, const std::string& out_path) {
  if (cfg.candidates.empty()) throw ConfigError("select needs a non-empty 'candidates' list");
  const auto names = covariate_names(cfg, data_path);
  const VectorXd c = check_against_header(cfg, names);
  Output out(out_path);
  const ClusterDataset data = ingest_csv(data_path, cfg.layout);

  const SelectionResult sel =
      select_model(cfg.candidates, data, cfg.family, objective_for(cfg.objective, c), c,
                   cfg.optimizer, jackknife_settings(cfg));
  std::ostream& os = *out.out;
  write_preamble(os, "select", cfg);
  os << "# data " << hex_digest(data.digest()) << "\n";
  os << "label\tgamma\tcontrast_variance\tselected\tstatus\n";
  for (const auto& row : sel.rows) {
    os << row.label << "\t" << join(row.gamma) << "\t"
       << (row.failed ? std::string("nan") : format_number(row.contrast_variance)) << "\t"
       << (row.selected ? 1 : 0) << "\t" << (row.failed ? "failed: " + row.error : "ok")
       << "\n";
  }
  *out.summary << "sandreg select: chose " << sel.selected << "\n";
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_path) {
  if (cfg.dgps.empty()) throw ConfigError("simulate needs a non-empty 'dgps' list");
  Output out(out_path);
  std::vector<MethodSpec> methods = cfg.methods;
  if (methods.empty())
    for (auto kind : {ObjectiveKind::eqml, ObjectiveKind::gee, ObjectiveKind::sandwich})
      methods.push_back({to_string(kind), {kind, {}}, cfg.structure});

  ExperimentSettings es;
  es.replications = cfg.replications;
  es.root_seed = cfg.optimizer.seed;
  es.optimizer = cfg.optimizer;
  es.contrast = cfg.contrast;
  es.max_failure_rate = cfg.max_failure_rate;
  const MseReport report = run_mse_experiment(cfg.dgps, methods, es);

  std::ostream& os = *out.out;
  write_preamble(os, "simulate", cfg);
  os << "# attempts " << report.attempts << " failures " << report.failures
     << (report.aborted ? " aborted" : "") << "\n";
  os << report.to_tsv();
  *out.summary << "sandreg simulate: " << report.rows.size() << " rows, failure rate "
               << report.failure_rate() << "\n";
  if (report.aborted || report.failure_rate() > cfg.max_failure_rate) return kExitConvergence;
  return 0;
}

int cmd_counterexample(const RunConfig& cfg, const std::string& out_path) {
  Output out(out_path);
  std::vector<double> deltas = cfg.deltas;
  if (deltas.empty()) deltas = {5.0, 20.0, 100.0};
  std::vector<DivergenceReport> rows(deltas.size());
  for_each_index(Exec::parallel, deltas.size(), [&](std::size_t k) {
    CounterexampleSpec spec = cfg.counterexample;
    spec.delta = deltas[k];
    rows[k] = divergence_report(spec);
  });

  std::ostream& os = *out.out;
  write_preamble(os, "counterexample", cfg);
  os << "delta\tb_delta\tratio\tratio_two_piece\tlower_bound\tgamma_eqml_pos\tgamma_eqml_neg"
        "\tv_eqml\tv_opt\tv_two_piece\tkl\n";
  for (const auto& r : rows)
    os << format_number(r.delta) << "\t" << format_number(r.b_delta) << "\t"
       << format_number(r.ratio) << "\t" << format_number(r.ratio_two_piece) << "\t"
       << format_number(r.lower_bound) << "\t" << format_number(r.gamma1) << "\t"
       << format_number(r.gamma2) << "\t" << format_number(r.v_eqml) << "\t"
       << format_number(r.v_opt) << "\t" << format_number(r.v_two_piece) << "\t"
       << format_number(r.kl) << "\n";
  if (cfg.eta) {
    const auto& s = cfg.counterexample;
    const double d = find_delta_for_eta(s.tau, s.sigma2, s.c_tilde, *cfg.eta);
    os << "\neta\tdelta_star\n" << format_number(*cfg.eta) << "\t" << format_number(d) << "\n";
    *out.summary << "sandreg counterexample: ratio reaches " << *cfg.eta << " at delta " << d
                 << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sandwich regression for clustered data"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  int threads = -1;
  app.add_option("--threads", threads, "worker threads (default: all available)")
      ->check(CLI::NonNegativeNumber);

  std::string config_path, data_path, out_path;
  auto* fit = app.add_subcommand("fit", "estimate beta and dispersion, with jackknife errors");
  auto* simulate = app.add_subcommand("simulate", "paired Monte Carlo MSE experiment");
  auto* select = app.add_subcommand("select", "compare working covariance candidates");
  auto* counter = app.add_subcommand("counterexample", "population divergence ratio sweep");
  for (auto* sub : {fit, simulate, select, counter}) {
    sub->add_option("-c,--config", config_path, "JSON config file")->required();
    sub->add_option("-o,--out", out_path, "result file (default: stdout)");
  }
  for (auto* sub : {fit, select})
    sub->add_option("-d,--data", data_path, "CSV with cluster, response and covariates")
        ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const RunConfig cfg = load_config(config_path);
    const int n = threads >= 0 ? threads : cfg.threads;
    set_threads(n);
    if (*fit) return cmd_fit(cfg, data_path, out_path);
    if (*select) return cmd_select(cfg, data_path, out_path);
    if (*simulate) return cmd_simulate(cfg, out_path);
    return cmd_counterexample(cfg, out_path);
  } catch (const Error& e) {
    std::cerr << "sandreg: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "sandreg: internal error: " << e.what() << "\n";
    return 1;
  }
}
