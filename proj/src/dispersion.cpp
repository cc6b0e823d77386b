#include "sandreg/dispersion.hpp"

#include "sandreg/error.hpp"
#include "sandreg/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace sandreg {

namespace {

template <class Fn>
void for_each_cluster(const ClusterDataset& data, const GlmFamily& family,
                      const CovarianceStructure& s, const DispersionParams& gamma,
                      const VectorXd& beta, bool need_inverse, Fn&& fn) {
  const auto factors = kernels::correlation_factors(data, s, gamma);
  for (const auto& c : data.clusters()) {
    const VectorXd a = variance_diag(c, family, beta);
    const VectorXd e = (c.y - mean_vector(c, family, beta)).cwiseQuotient(a.cwiseSqrt());
    if (!factors.empty()) {
      fn(e, a, factors[c.size()]);
      continue;
    }
    kernels::CorrelationFactor f;
    f.p = pseudo_correlation(s, gamma, c);
    if (need_inverse) {
      Eigen::LLT<MatrixXd> llt(f.p);
      if (llt.info() != Eigen::Success)
        throw NumericalError("working correlation " + s.label() + " is not positive definite");
      f.p_inv = llt.solve(MatrixXd::Identity(f.p.rows(), f.p.cols()));
      f.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }
    fn(e, a, f);
  }
}

DispersionParams with_scale(const VectorXd& shape, double scale) {
  DispersionParams g;
  g.shape = shape;
  g.scale = scale;
  return g;
}

std::string describe(const VectorXd& v) {
  std::ostringstream os;
  os.precision(8);
  os << "(";
  for (Eigen::Index k = 0; k < v.size(); ++k) os << (k ? ", " : "") << v(k);
  os << ")";
  return os.str();
}

}  // namespace

std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::none: return "unweighted";
    case ObjectiveKind::sandwich: return "sandwich";
    case ObjectiveKind::sandwich_large_sample: return "sandwich_large_sample";
    case ObjectiveKind::eqml: return "eqml";
    case ObjectiveKind::gee: return "gee";
  }
  return "?";
}

ObjectiveKind parse_objective(const std::string& s) {
  if (s == "none" || s == "unweighted") return ObjectiveKind::none;
  if (s == "sandwich") return ObjectiveKind::sandwich;
  if (s == "sandwich_large_sample") return ObjectiveKind::sandwich_large_sample;
  if (s == "eqml") return ObjectiveKind::eqml;
  if (s == "gee") return ObjectiveKind::gee;
  throw ConfigError("unknown objective '" + s + "'");
}

void DispersionObjective::validate(std::size_t p) const {
  if (is_sandwich()) {
    if (static_cast<std::size_t>(target.size()) != p)
      throw ConfigError("sandwich objective needs a contrast of length " + std::to_string(p));
    if (target.isZero(0.0)) throw ConfigError("contrast must be nonzero");
  } else if (target.size() != 0) {
    throw ConfigError("objective " + to_string(kind) + " takes no contrast");
  }
}

void OptimizerSettings::validate() const {
  if (restarts < 1 || !(init_scale > 0) || !(tol > 0) || !(xtol > 0) || max_evals < 1 ||
      outer_rounds < 1 || !(outer_tol > 0))
    throw ConfigError("optimizer settings must all be positive");
}

std::string SandregFit::method() const {
  if (objective.kind == ObjectiveKind::none) return "unweighted";
  return to_string(objective.kind) + ":" + structure.label();
}

double eqml_objective(const ClusterDataset& data, const GlmFamily& family,
                      const CovarianceStructure& s, const DispersionParams& gamma,
                      const VectorXd& beta_pilot) {
  double total = 0.0;
  for_each_cluster(data, family, s, gamma, beta_pilot, true,
                   [&](const VectorXd& e, const VectorXd& a, const kernels::CorrelationFactor& f) {
                     total += f.logdet + a.array().log().sum() + e.dot(f.p_inv * e);
                   });
  return total;
}

double gee_objective(const ClusterDataset& data, const GlmFamily& family,
                     const CovarianceStructure& s, const DispersionParams& gamma,
                     const VectorXd& beta_pilot) {
  double total = 0.0;
  for_each_cluster(data, family, s, gamma, beta_pilot, false,
                   [&](const VectorXd& e, const VectorXd&, const kernels::CorrelationFactor& f) {
                     total += (e * e.transpose() - f.p).squaredNorm();
                   });
  return total;
}

double profiled_eqml_objective(const ClusterDataset& data, const GlmFamily& family,
                               const CovarianceStructure& s, const VectorXd& shape,
                               const VectorXd& beta_pilot, double* scale) {
  const DispersionParams unit = with_scale(shape, 1.0);
  double logdet = 0.0, quad = 0.0;
  for_each_cluster(data, family, s, unit, beta_pilot, true,
                   [&](const VectorXd& e, const VectorXd& a, const kernels::CorrelationFactor& f) {
                     logdet += f.logdet + a.array().log().sum();
                     quad += e.dot(f.p_inv * e);
                   });
  if (s.scale_mode == ScaleMode::unit) {
    if (scale) *scale = 1.0;
    return logdet + quad;
  }
  const double n = static_cast<double>(data.total_observations());
  const double phi = quad / n;
  if (scale) *scale = phi;
  if (!(phi > 0.0)) return -std::numeric_limits<double>::infinity();
  return n * std::log(phi) + logdet + n;
}

double profiled_gee_objective(const ClusterDataset& data, const GlmFamily& family,
                              const CovarianceStructure& s, const VectorXd& shape,
                              const VectorXd& beta_pilot, double* scale) {
  const DispersionParams unit = with_scale(shape, 1.0);
  double ee = 0.0, ep = 0.0, pp = 0.0;
  for_each_cluster(data, family, s, unit, beta_pilot, false,
                   [&](const VectorXd& e, const VectorXd&, const kernels::CorrelationFactor& f) {
                     const double sq = e.squaredNorm();
                     ee += sq * sq;
                     ep += e.dot(f.p * e);
                     pp += f.p.squaredNorm();
                   });
  double phi = 1.0;
  if (s.scale_mode == ScaleMode::free) phi = std::max(ep / pp, 0.0);
  if (scale) *scale = phi;
  return ee - 2.0 * phi * ep + phi * phi * pp;
}

CovarianceStructure effective_structure(const CovarianceStructure& s,
                                        const DispersionObjective& objective) {
  if (objective.kind == ObjectiveKind::none) return CovarianceStructure::independence();
  CovarianceStructure out = s;
  if (objective.is_sandwich()) out.scale_mode = ScaleMode::unit;
  return out;
}

DispersionEvaluator::DispersionEvaluator(const ClusterDataset& data, GlmFamily family,
                                         CovarianceStructure s, DispersionObjective objective,
                                         ScoringSettings scoring, Exec exec)
    : data_(&data),
      family_(family),
      s_(std::move(s)),
      objective_(std::move(objective)),
      scoring_(scoring),
      exec_(exec) {}

double DispersionEvaluator::operator()(const VectorXd& theta_shape) {
  const VectorXd shape = unpack_shape(s_, theta_shape);
  switch (objective_.kind) {
    case ObjectiveKind::sandwich:
    case ObjectiveKind::sandwich_large_sample: {
      const DispersionParams gamma = with_scale(shape, 1.0);
      QmlSolution sol = fit_beta(*data_, family_, s_, gamma, beta_, scoring_, exec_);
      const double v = objective_.kind == ObjectiveKind::sandwich
                           ? sandwich_loss(sol, objective_.target, exec_).value
                           : large_sample_sandwich_loss(sol, objective_.target).value;
      if (track_) beta_ = sol.beta;
      return v;
    }
    case ObjectiveKind::eqml:
      return profiled_eqml_objective(*data_, family_, s_, shape, *beta_, &last_scale_);
    case ObjectiveKind::gee:
      return profiled_gee_objective(*data_, family_, s_, shape, *beta_, &last_scale_);
    case ObjectiveKind::none: return 0.0;
  }
  return 0.0;
}

namespace {

struct StartOutcome {
  NelderMeadResult nm;
  bool ok = false;
};

// Multi-start Nelder-Mead over the shape. Start 0 sits at theta0, the rest
// are Gaussian perturbations of it.
NelderMeadResult multi_start(const DispersionEvaluator& proto, const VectorXd& theta0,
                             int restarts, const OptimizerSettings& settings,
                             std::uint64_t round) {
  NelderMeadSettings nm;
  nm.init_scale = settings.init_scale;
  nm.ftol = settings.tol;
  nm.xtol = settings.xtol;
  nm.max_evals = settings.max_evals;

  std::vector<StartOutcome> outcomes(static_cast<std::size_t>(restarts));
  for_each_index(settings.exec, outcomes.size(), [&](std::size_t k) {
    VectorXd x0 = theta0;
    if (k > 0) {
      Rng rng(settings.seed, (round << 32) + k);
      for (Eigen::Index j = 0; j < x0.size(); ++j) x0(j) += settings.init_scale * rng.normal();
    }
    DispersionEvaluator eval = proto;
    outcomes[k].nm = nelder_mead([&eval](const VectorXd& t) { return eval(t); }, x0, nm);
    outcomes[k].ok = true;
  });

  const NelderMeadResult* best = nullptr;
  int evals = 0;
  bool any_converged = false;
  for (const auto& o : outcomes) {
    evals += o.nm.evals;
    any_converged = any_converged || o.nm.converged;
    if (!best || o.nm.f < best->f) best = &o.nm;
  }
  if (!std::isfinite(best->f))
    throw ConvergenceError("dispersion optimiser found no finite objective value from " +
                           std::to_string(restarts) + " starts");
  if (!any_converged)
    throw ConvergenceError("dispersion optimiser: no start converged within " +
                           std::to_string(settings.max_evals) +
                           " evaluations; best value " + std::to_string(best->f) +
                           " at theta = " + describe(best->x));
  NelderMeadResult out = *best;
  out.evals = evals;
  return out;
}

}  // namespace

SandregFit minimize_dispersion(const ClusterDataset& data, const GlmFamily& family,
                               const CovarianceStructure& s,
                               const DispersionObjective& objective,
                               const OptimizerSettings& settings,
                               const std::optional<VectorXd>& warm_shape) {
  settings.validate();
  objective.validate(data.p());
  CovarianceStructure eff = effective_structure(s, objective);
  eff.validate(data.p());
  if (eff.kind == CovKind::exchangeable) eff.max_group_size = data.max_group_size();

  SandregFit fit;
  fit.structure = eff;
  fit.objective = objective;
  fit.family = family;

  const VectorXd pilot = pooled_glm_start(data, family, settings.exec);
  VectorXd theta0 = VectorXd::Zero(static_cast<Eigen::Index>(eff.shape_dim()));
  if (warm_shape && warm_shape->size() == theta0.size()) {
    validate_params(eff, with_scale(*warm_shape, 1.0));
    theta0 = pack_shape(eff, *warm_shape);
  }

  auto finish = [&](const VectorXd& theta, double scale, const VectorXd& warm) {
    fit.theta_hat = theta;
    fit.gamma_hat = with_scale(unpack_shape(eff, theta), scale);
    fit.solution = fit_beta(data, family, eff, fit.gamma_hat, warm, settings.scoring,
                            settings.exec);
    fit.beta_hat = fit.solution.beta;
  };

  if (objective.kind == ObjectiveKind::none) {
    fit.converged = true;
    finish(theta0, 1.0, pilot);
    return fit;
  }

  if (objective.is_sandwich()) {
    DispersionEvaluator eval(data, family, eff, objective, settings.scoring, settings.exec);
    eval.set_beta(pilot);
    const NelderMeadResult nm = multi_start(eval, theta0, settings.restarts, settings, 0);
    fit.objective_value = nm.f;
    fit.trace = nm.trace;
    fit.evaluations = nm.evals;
    fit.converged = nm.converged;
    fit.outer_rounds = 1;
    finish(nm.x, 1.0, pilot);
    return fit;
  }

  // EQML / GEE: minimise at a fixed pilot, refit beta, repeat.
  VectorXd beta = pilot;
  VectorXd theta = theta0;
  VectorXd gamma_prev;
  double scale = 1.0;
  bool settled = false;
  for (int round = 0; round < settings.outer_rounds; ++round) {
    DispersionEvaluator eval(data, family, eff, objective, settings.scoring, settings.exec);
    eval.set_beta(beta);
    const NelderMeadResult nm = multi_start(eval, theta, round == 0 ? settings.restarts : 1,
                                            settings, static_cast<std::uint64_t>(round));
    theta = nm.x;
    eval(theta);
    scale = eval.last_scale();
    fit.objective_value = nm.f;
    fit.trace.push_back(nm.f);
    fit.evaluations += nm.evals;
    fit.outer_rounds = round + 1;

    const DispersionParams gamma = with_scale(unpack_shape(eff, theta), scale);
    const VectorXd gamma_full = gamma.full(eff);
    const QmlSolution sol = fit_beta(data, family, eff, gamma, beta, settings.scoring,
                                     settings.exec);
    beta = sol.beta;
    if (gamma_prev.size() == gamma_full.size() &&
        (gamma_full - gamma_prev).cwiseAbs().maxCoeff() <= settings.outer_tol) {
      settled = true;
      break;
    }
    if (gamma_full.size() == 0) {
      settled = true;
      break;
    }
    gamma_prev = gamma_full;
  }
  fit.converged = settled;
  finish(theta, scale, beta);
  return fit;
}

double eqml_equation_residual(const ClusterDataset& data, const SandregFit& fit) {
  const VectorXd g = fit.gamma_hat.full(fit.structure);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double h = 1e-5 * (1.0 + std::fabs(g(k)));
    VectorXd up = g, dn = g;
    up(k) += h;
    dn(k) -= h;
    const double fu = eqml_objective(data, fit.family, fit.structure,
                                     DispersionParams::from_full(fit.structure, up), fit.beta_hat);
    const double fd = eqml_objective(data, fit.family, fit.structure,
                                     DispersionParams::from_full(fit.structure, dn), fit.beta_hat);
    worst = std::max(worst, std::fabs((fu - fd) / (2.0 * h)));
  }
  return worst;
}

}  // namespace sandreg
