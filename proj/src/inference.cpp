#include "sandreg/inference.hpp"

#include "sandreg/error.hpp"

#include <cmath>
#include <set>

namespace sandreg {

namespace {

struct Derivatives {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
};

VectorXd fd_steps(const VectorXd& theta, double rel) {
  return (1.0 + theta.array().abs()) * rel;
}

VectorXd gradient(DispersionEvaluator& f, const VectorXd& theta, const VectorXd& h) {
  VectorXd g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    VectorXd up = theta, dn = theta;
    up(k) += h(k);
    dn(k) -= h(k);
    g(k) = (f(up) - f(dn)) / (2.0 * h(k));
  }
  return g;
}

Derivatives gradient_and_hessian(DispersionEvaluator& f, const VectorXd& theta,
                                 const VectorXd& h) {
  const Eigen::Index q = theta.size();
  Derivatives d;
  d.grad.resize(q);
  d.hess.resize(q, q);
  const double f0 = f(theta);
  d.value = f0;
  for (Eigen::Index k = 0; k < q; ++k) {
    VectorXd up = theta, dn = theta;
    up(k) += h(k);
    dn(k) -= h(k);
    const double fu = f(up), fd = f(dn);
    d.grad(k) = (fu - fd) / (2.0 * h(k));
    d.hess(k, k) = (fu - 2.0 * f0 + fd) / (h(k) * h(k));
  }
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index k = j + 1; k < q; ++k) {
      auto at = [&](double sj, double sk) {
        VectorXd t = theta;
        t(j) += sj * h(j);
        t(k) += sk * h(k);
        return f(t);
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h(j) * h(k));
      d.hess(j, k) = d.hess(k, j) = v;
    }
  return d;
}

// Inverse of H with eigenvalues replaced by max(|lambda|, floor * max|lambda|).
std::optional<MatrixXd> regularised_inverse(const MatrixXd& h, double floor) {
  if (!h.allFinite()) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (h + h.transpose()));
  if (es.info() != Eigen::Success) return std::nullopt;
  VectorXd ev = es.eigenvalues().cwiseAbs();
  const double top = ev.maxCoeff();
  if (!(top > 0.0) || !std::isfinite(top)) return std::nullopt;
  ev = ev.cwiseMax(floor * top);
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

VarianceEstimate jackknife_variance(const SandregFit& fit, const ClusterDataset& data,
                                    const VectorXd& c, const JackknifeSettings& settings) {
  const std::size_t n_clusters = data.num_clusters();
  if (n_clusters < data.p() + 2)
    throw DataError("jackknife needs at least p + 2 clusters");
  if (settings.steps < 0) throw ConfigError("jackknife steps must be >= 0");
  if (!(settings.max_step > 0.0) || settings.max_halvings < 0)
    throw ConfigError("jackknife max_step must be positive and max_halvings >= 0");
  const QmlSolution& sol = fit.solution;
  const auto loo = kernels::loo_terms(settings.exec, sol.terms, sol.dtwd_inv);
  const Eigen::Index p = sol.beta.size();
  const auto& s = fit.structure;

  VarianceEstimate out;
  out.deltas.resize(n_clusters);
  out.gamma_steps.assign(n_clusters, VectorXd::Zero(static_cast<Eigen::Index>(s.shape_dim())));

  const bool move_gamma = settings.steps > 0 && s.shape_dim() > 0 &&
                          fit.objective.kind != ObjectiveKind::none;
  if (!move_gamma) {
    for (std::size_t i = 0; i < n_clusters; ++i) out.deltas[i] = loo[i].delta;
  } else {
    out.newton_steps_used = settings.steps;
    DispersionObjective objective = fit.objective;
    if (objective.is_sandwich()) objective.target = c;
    ScoringSettings scoring;
    scoring.tol = settings.scoring_tol;
    auto make_eval = [&](const ClusterDataset& d) {
      DispersionEvaluator e(d, fit.family, s, objective, scoring, Exec::serial);
      e.set_beta(fit.beta_hat);
      e.track_warm_start(false);
      return e;
    };
    const VectorXd theta_hat = fit.theta_hat;
    const VectorXd h0 = fd_steps(theta_hat, settings.rel_step);
    DispersionEvaluator full = make_eval(data);
    const VectorXd grad_full = gradient(full, theta_hat, h0);

    std::vector<char> fallback(n_clusters, 0);
    for_each_index(settings.exec, n_clusters, [&](std::size_t i) {
      const ClusterDataset rest = data.without(i);
      DispersionEvaluator partial = make_eval(rest);
      VectorXd theta = theta_hat;
      bool ok = true;
      try {
        for (int step = 0; step < settings.steps && ok; ++step) {
          const VectorXd h = fd_steps(theta, settings.rel_step);
          Derivatives d = gradient_and_hessian(partial, theta, h);
          // The first step uses grad L_(-i) - grad L, which removes the
          // optimiser's residual gradient at theta-hat.
          const VectorXd g = step == 0 ? VectorXd(d.grad - grad_full) : d.grad;
          const auto inv = regularised_inverse(d.hess, settings.eigen_floor);
          if (!inv || !g.allFinite()) {
            ok = false;
            break;
          }
          VectorXd move = -(*inv * g);
          const double big = move.cwiseAbs().maxCoeff();
          if (big > settings.max_step) move *= settings.max_step / big;
          // halve until the leave-one-out loss does not go up
          int halvings = 0;
          while (!(partial(VectorXd(theta + move)) <= d.value)) {
            if (++halvings > settings.max_halvings) {
              move.setZero();
              break;
            }
            move *= 0.5;
          }
          theta += move;
        }
      } catch (const NumericalError&) {
        ok = false;
      }
      if (!ok || !theta.allFinite()) {
        fallback[i] = 1;
        out.deltas[i] = loo[i].delta;
        return;
      }
      out.gamma_steps[i] = theta - theta_hat;

      DispersionParams gamma_i = fit.gamma_hat;
      gamma_i.shape = unpack_shape(s, theta);
      const auto moved =
          kernels::serial::cluster_terms(data, fit.family, s, gamma_i, fit.beta_hat);
      MatrixXd e = MatrixXd::Zero(p, p);
      VectorXd f = VectorXd::Zero(p);
      for (std::size_t j = 0; j < n_clusters; ++j) {
        if (j == i) continue;
        e += moved[j].dtwd - sol.terms[j].dtwd;
        f += moved[j].dtwr - sol.terms[j].dtwr;
      }
      const MatrixXd& t = loo[i].t;
      out.deltas[i] = (MatrixXd::Identity(p, p) - t * e) * loo[i].delta + t * f;
    });
    for (std::size_t i = 0; i < n_clusters; ++i)
      if (fallback[i]) {
        ++out.fallbacks;
        out.warnings.push_back("cluster " + std::to_string(i) +
                               ": leave-one-out Hessian unusable, dispersion held fixed");
      }
  }

  out.vhat = MatrixXd::Zero(p, p);
  for (const auto& d : out.deltas) out.vhat.noalias() += d * d.transpose();
  out.vhat *= static_cast<double>(n_clusters - 1) / static_cast<double>(n_clusters);
  return out;
}

std::optional<VectorXd> nested_warm_start(const CovarianceStructure& from, const VectorXd& shape,
                                          const CovarianceStructure& to) {
  if (static_cast<std::size_t>(shape.size()) != from.shape_dim()) return std::nullopt;
  if (to.kind == CovKind::arma && (from.kind == CovKind::arma || from.kind == CovKind::ar1)) {
    const int fp = from.kind == CovKind::ar1 ? 1 : from.ar_order;
    const int fq = from.kind == CovKind::ar1 ? 0 : from.ma_order;
    if (fp > to.ar_order || fq > to.ma_order) return std::nullopt;
    VectorXd out = VectorXd::Zero(to.ar_order + to.ma_order);
    out.head(fp) = shape.head(fp);
    out.segment(to.ar_order, fq) = shape.tail(fq);
    return out;
  }
  if (from.kind == to.kind && from.shape_dim() == to.shape_dim() && to.shape_dim() > 0)
    return shape;
  return std::nullopt;
}

SelectionResult select_model(const std::vector<ModelCandidate>& candidates,
                             const ClusterDataset& data, const GlmFamily& family,
                             const DispersionObjective& objective, const VectorXd& c,
                             const OptimizerSettings& settings,
                             const JackknifeSettings& jackknife) {
  if (candidates.empty()) throw ConfigError("model selection needs at least one candidate");
  std::set<std::string> labels;
  for (const auto& m : candidates)
    if (!labels.insert(m.label).second)
      throw ConfigError("duplicate candidate label '" + m.label + "'");

  SelectionResult result;
  std::optional<std::size_t> best;
  for (const auto& m : candidates) {
    SelectionRow row;
    row.label = m.label;
    std::optional<VectorXd> warm = m.warm_start;
    if (!warm) {
      for (auto it = result.rows.rbegin(); it != result.rows.rend() && !warm; ++it)
        if (it->fit)
          warm = nested_warm_start(it->fit->structure, it->fit->gamma_hat.shape, m.structure);
    }
    try {
      SandregFit fit = minimize_dispersion(data, family, m.structure, objective, settings, warm);
      const VarianceEstimate v = jackknife_variance(fit, data, c, jackknife);
      row.gamma = fit.gamma_hat.full(fit.structure);
      row.contrast_variance = v.contrast_variance(c);
      row.fit = std::move(fit);
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    if (!row.failed &&
        (!best || row.contrast_variance < result.rows[*best].contrast_variance))
      best = result.rows.size();
    result.rows.push_back(std::move(row));
  }
  if (!best) throw ConvergenceError("every candidate model failed to fit");
  result.rows[*best].selected = true;
  result.selected = result.rows[*best].label;
  return result;
}

double delta_method_variance(const VectorXd& beta_hat, const MatrixXd& vhat, const VectorXd& c,
                             const GlmFamily& family) {
  const double slope = family.mu_eta(c.dot(beta_hat));
  return slope * slope * c.dot(vhat * c);
}

}  // namespace sandreg
