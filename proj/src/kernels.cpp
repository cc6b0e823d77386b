#include "sandreg/kernels.hpp"

#include "sandreg/error.hpp"

#include <cmath>
#include <sstream>

namespace sandreg::kernels {

namespace {

CorrelationFactor factorise(MatrixXd p, const CovarianceStructure& s,
                            const DispersionParams& gamma) {
  if (p.rows() == 1 && p(0, 0) > 0.0) {
    CorrelationFactor f;
    f.p_inv = MatrixXd::Constant(1, 1, 1.0 / p(0, 0));
    f.logdet = std::log(p(0, 0));
    f.p = std::move(p);
    return f;
  }
  Eigen::LLT<MatrixXd> llt(p);
  if (llt.info() != Eigen::Success)
    throw NumericalError("working correlation " + s.label() + " with shape of size " +
                         std::to_string(gamma.shape.size()) +
                         " is not positive definite for group size " +
                         std::to_string(p.rows()));
  CorrelationFactor f;
  f.p_inv = llt.solve(MatrixXd::Identity(p.rows(), p.cols()));
  f.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  f.p = std::move(p);
  return f;
}

}  // namespace

std::vector<CorrelationFactor> correlation_factors(const ClusterDataset& data,
                                                   const CovarianceStructure& s,
                                                   const DispersionParams& gamma) {
  std::vector<CorrelationFactor> out;
  if (s.covariate_dependent()) return out;
  const std::size_t n_max = data.max_group_size();
  std::vector<char> seen(n_max + 1, 0);
  for (const auto& c : data.clusters()) seen[c.size()] = 1;
  out.resize(n_max + 1);
  for (std::size_t n = 1; n <= n_max; ++n)
    if (seen[n]) out[n] = factorise(build_correlation(s, gamma, n), s, gamma);
  return out;
}

ClusterTerms cluster_term(const ClusterData& cluster, const GlmFamily& family,
                          const CovarianceStructure& s, const DispersionParams& gamma,
                          const VectorXd& beta, const CorrelationFactor* factor) {
  CorrelationFactor local;
  if (!factor) {
    local = factorise(pseudo_correlation(s, gamma, cluster), s, gamma);
    factor = &local;
  }
  const VectorXd a = variance_diag(cluster, family, beta);
  ClusterTerms t;
  t.d = mean_jacobian(cluster, family, beta);
  t.r = cluster.y - mean_vector(cluster, family, beta);
  if (family.variance == VarianceFn::constant) {
    t.w = factor->p_inv;
    t.sigma = factor->p;
    t.logdet_sigma = factor->logdet;
  } else {
    const VectorXd a_half = a.cwiseSqrt();
    const VectorXd a_inv_half = a_half.cwiseInverse();
    t.w = a_inv_half.asDiagonal() * factor->p_inv * a_inv_half.asDiagonal();
    t.sigma = a_half.asDiagonal() * factor->p * a_half.asDiagonal();
    t.logdet_sigma = factor->logdet + a.array().log().sum();
  }
  const MatrixXd dtw = t.d.transpose() * t.w;
  t.dtwd = dtw * t.d;
  t.dtwr = dtw * t.r;
  return t;
}

namespace {

// Singleton clusters: U_i is a scalar, so the factorisation reduces to a
// positivity check with the same jitter schedule as the general path.
LooTerms loo_term_scalar(std::size_t i, const ClusterTerms& term, const MatrixXd& m_inv) {
  LooTerms out;
  const VectorXd k = m_inv * term.d.row(0).transpose();
  const double sigma = term.sigma(0, 0);
  const double u = sigma - term.d.row(0).dot(k);
  const double jitter0 = std::fabs(1e-12 * u);
  double jitter = 0.0;
  bool ok = false;
  double pivot = u;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    if (attempt > 0) jitter = attempt == 1 ? jitter0 : jitter * 10.0;
    pivot = u + jitter;
    if (pivot > 0.0 && pivot > 1e-10 * sigma) {
      ok = true;
      out.jitter_steps = attempt;
      break;
    }
  }
  if (!ok) {
    std::ostringstream os;
    os << "cluster " << i << " carries full leverage: U_i is singular";
    throw LeverageError(i, os.str());
  }
  out.u = MatrixXd::Constant(1, 1, u);
  out.t = m_inv;
  out.t.noalias() += (k / pivot) * k.transpose();
  out.t = 0.5 * (out.t + out.t.transpose());
  out.g = term.dtwr;
  out.delta = -(out.t * out.g);
  return out;
}

}  // namespace

LooTerms loo_term(std::size_t i, const ClusterTerms& term, const MatrixXd& m_inv) {
  if (term.d.rows() == 1) return loo_term_scalar(i, term, m_inv);
  LooTerms out;
  const MatrixXd k = term.d * m_inv;
  MatrixXd u = term.sigma - k * term.d.transpose();
  u = 0.5 * (u + u.transpose());

  const double max_diag = term.sigma.diagonal().maxCoeff();
  const double jitter0 = 1e-12 * u.trace() / static_cast<double>(u.rows());
  Eigen::LLT<MatrixXd> llt;
  bool ok = false;
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    MatrixXd trial = u;
    if (attempt > 0) {
      jitter = attempt == 1 ? std::fabs(jitter0) : jitter * 10.0;
      trial.diagonal().array() += jitter;
    }
    llt.compute(trial);
    if (llt.info() == Eigen::Success &&
        llt.matrixLLT().diagonal().array().square().minCoeff() > 1e-10 * max_diag) {
      ok = true;
      out.jitter_steps = attempt;
      break;
    }
  }
  if (!ok) {
    std::ostringstream os;
    os << "cluster " << i << " carries full leverage: U_i is singular";
    throw LeverageError(i, os.str());
  }
  out.u = std::move(u);
  MatrixXd t = m_inv + k.transpose() * llt.solve(k);
  out.t = 0.5 * (t + t.transpose());
  out.g = term.dtwr;
  out.delta = -(out.t * out.g);
  return out;
}

std::vector<ClusterTerms> cluster_terms(Exec exec, const ClusterDataset& data,
                                        const GlmFamily& family, const CovarianceStructure& s,
                                        const DispersionParams& gamma, const VectorXd& beta) {
  return exec == Exec::serial ? serial::cluster_terms(data, family, s, gamma, beta)
                              : omp::cluster_terms(data, family, s, gamma, beta);
}

std::vector<LooTerms> loo_terms(Exec exec, const std::vector<ClusterTerms>& terms,
                                const MatrixXd& m_inv) {
  return exec == Exec::serial ? serial::loo_terms(terms, m_inv) : omp::loo_terms(terms, m_inv);
}

void reduce_normal_equations(const std::vector<ClusterTerms>& terms, MatrixXd& dtwd,
                             VectorXd& dtwr) {
  const Eigen::Index p = terms.front().dtwd.rows();
  dtwd = MatrixXd::Zero(p, p);
  dtwr = VectorXd::Zero(p);
  for (const auto& t : terms) {
    dtwd += t.dtwd;
    dtwr += t.dtwr;
  }
}

MatrixXd reduce_outer(const std::vector<LooTerms>& loo) {
  const Eigen::Index p = loo.front().delta.size();
  MatrixXd v = MatrixXd::Zero(p, p);
  for (const auto& l : loo) v.noalias() += l.delta * l.delta.transpose();
  return v;
}

}  // namespace sandreg::kernels
