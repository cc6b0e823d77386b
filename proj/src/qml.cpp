#include "sandreg/qml.hpp"

#include "sandreg/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace sandreg {

namespace {

struct NormalSystem {
  MatrixXd dtwd;
  VectorXd dtwr;
};

NormalSystem reduce(const std::vector<kernels::ClusterTerms>& terms) {
  NormalSystem ns;
  kernels::reduce_normal_equations(terms, ns.dtwd, ns.dtwr);
  return ns;
}

double rcond_estimate(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double hi = ev.cwiseAbs().maxCoeff();
  return hi > 0.0 ? ev.minCoeff() / hi : 0.0;
}

MatrixXd invert_normal(const MatrixXd& m, double& rcond) {
  rcond = rcond_estimate(m);
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || !(rcond > 1e-14)) {
    std::ostringstream os;
    os << "normal matrix sum D^T W D is rank deficient (reciprocal condition " << rcond << ")";
    throw NumericalError(os.str());
  }
  MatrixXd inv = llt.solve(MatrixXd::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

double separation_share(const ClusterDataset& data, const VectorXd& beta) {
  std::size_t big = 0;
  for (const auto& c : data.clusters())
    big += static_cast<std::size_t>(((c.x * beta).array().abs() > 30.0).count());
  return static_cast<double>(big) / static_cast<double>(data.total_observations());
}

}  // namespace

void finalise_solution(QmlSolution& sol) {
  VectorXd dtwr;
  kernels::reduce_normal_equations(sol.terms, sol.dtwd, dtwr);
  sol.dtwd_inv = invert_normal(sol.dtwd, sol.rcond);
  sol.score_norm = dtwr.cwiseAbs().maxCoeff();
}

VectorXd estimating_equation(const ClusterDataset& data, const GlmFamily& family,
                             const CovarianceStructure& s, const DispersionParams& gamma,
                             const VectorXd& beta, Exec exec) {
  return reduce(kernels::cluster_terms(exec, data, family, s, gamma, beta)).dtwr;
}

QmlSolution solve_wls(const ClusterDataset& data, const CovarianceStructure& s,
                      const DispersionParams& gamma, Exec exec) {
  const GlmFamily family = GlmFamily::gaussian();
  const VectorXd zero = VectorXd::Zero(static_cast<Eigen::Index>(data.p()));
  // At beta = 0 the residual is Y, so the reduction yields X^T W Y directly.
  auto terms = kernels::cluster_terms(exec, data, family, s, gamma, zero);
  const NormalSystem ns = reduce(terms);
  double rcond = 0.0;
  const MatrixXd inv = invert_normal(ns.dtwd, rcond);
  QmlSolution sol;
  sol.beta = inv * ns.dtwr;
  sol.iterations = 1;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    auto& t = terms[i];
    t.r = data[i].y - data[i].x * sol.beta;
    t.dtwr = t.d.transpose() * (t.w * t.r);
  }
  sol.terms = std::move(terms);
  finalise_solution(sol);
  return sol;
}

QmlSolution fisher_scoring(const ClusterDataset& data, const GlmFamily& family,
                           const CovarianceStructure& s, const DispersionParams& gamma,
                           const VectorXd& beta_init, const ScoringSettings& settings,
                           Exec exec) {
  if (!beta_init.allFinite()) throw NumericalError("fisher scoring start is not finite");
  VectorXd beta = beta_init;
  auto terms = kernels::cluster_terms(exec, data, family, s, gamma, beta);
  NormalSystem ns = reduce(terms);
  double norm = ns.dtwr.cwiseAbs().maxCoeff();
  double prev_share = 0.0;
  bool separation = false;
  int growth = 0;

  for (int it = 0; it <= settings.max_iter; ++it) {
    if (norm <= settings.tol * (1.0 + beta.cwiseAbs().maxCoeff())) {
      QmlSolution sol;
      sol.beta = beta;
      sol.iterations = it;
      sol.terms = std::move(terms);
      sol.separation_warning = separation;
      finalise_solution(sol);
      return sol;
    }
    if (it == settings.max_iter) break;

    double rcond = 0.0;
    const VectorXd step = invert_normal(ns.dtwd, rcond) * ns.dtwr;
    double scale = 1.0;
    VectorXd best_beta;
    std::vector<kernels::ClusterTerms> best_terms;
    NormalSystem best_ns;
    double best_norm = std::numeric_limits<double>::infinity();
    for (int h = 0; h <= settings.max_halvings; ++h, scale *= 0.5) {
      VectorXd trial = beta + scale * step;
      try {
        auto trial_terms = kernels::cluster_terms(exec, data, family, s, gamma, trial);
        NormalSystem trial_ns = reduce(trial_terms);
        const double trial_norm = trial_ns.dtwr.cwiseAbs().maxCoeff();
        if (std::isfinite(trial_norm) && (h == 0 || trial_norm < best_norm)) {
          best_beta = std::move(trial);
          best_terms = std::move(trial_terms);
          best_ns = std::move(trial_ns);
          best_norm = trial_norm;
        }
        if (trial_norm < norm) break;
      } catch (const NumericalError&) {
        // degenerate mean along the full step; keep halving
      }
    }
    if (best_terms.empty())
      throw NumericalError("fisher scoring step failed at every halving");
    beta = std::move(best_beta);
    terms = std::move(best_terms);
    ns = std::move(best_ns);
    norm = best_norm;

    if (family.variance == VarianceFn::binomial) {
      const double share = separation_share(data, beta);
      growth = share > prev_share && share > 0.0 ? growth + 1 : 0;
      if (growth >= 3) separation = true;
      prev_share = share;
    }
  }
  std::ostringstream os;
  os << "fisher scoring did not converge in " << settings.max_iter
     << " iterations: score norm " << norm << " at beta = (";
  for (Eigen::Index k = 0; k < beta.size(); ++k) os << (k ? ", " : "") << beta(k);
  os << ")";
  throw ConvergenceError(os.str());
}

VectorXd pooled_glm_start(const ClusterDataset& data, const GlmFamily& family, Exec exec) {
  const auto indep = CovarianceStructure::independence();
  const auto gamma = DispersionParams::identity(indep);
  if (family.link == Link::identity && family.variance == VarianceFn::constant)
    return solve_wls(data, indep, gamma, exec).beta;
  return fisher_scoring(data, family, indep, gamma,
                        VectorXd::Zero(static_cast<Eigen::Index>(data.p())), {}, exec)
      .beta;
}

QmlSolution fit_beta(const ClusterDataset& data, const GlmFamily& family,
                     const CovarianceStructure& s, const DispersionParams& gamma,
                     const std::optional<VectorXd>& warm, const ScoringSettings& settings,
                     Exec exec) {
  if (family.link == Link::identity && family.variance == VarianceFn::constant)
    return solve_wls(data, s, gamma, exec);
  const VectorXd start = warm ? *warm : pooled_glm_start(data, family, exec);
  return fisher_scoring(data, family, s, gamma, start, settings, exec);
}

}  // namespace sandreg
