#include "sandreg/sandwich.hpp"

#include "sandreg/error.hpp"

namespace sandreg {

namespace {

void check_contrast(const VectorXd& c, std::size_t p) {
  if (static_cast<std::size_t>(c.size()) != p)
    throw ConfigError("contrast has length " + std::to_string(c.size()) + ", expected " +
                      std::to_string(p));
  if (c.isZero(0.0)) throw ConfigError("contrast must be nonzero");
}

}  // namespace

LooCache build_loo_cache(const QmlSolution& solution, Exec exec) {
  return {kernels::loo_terms(exec, solution.terms, solution.dtwd_inv)};
}

VectorXd loo_beta(const QmlSolution& solution, std::size_t i) {
  if (i >= solution.terms.size())
    throw ConfigError("cluster index " + std::to_string(i) + " out of range");
  return kernels::loo_term(i, solution.terms[i], solution.dtwd_inv).delta;
}

LossValue sandwich_loss(const QmlSolution& solution, const VectorXd& c, Exec exec) {
  check_contrast(c, static_cast<std::size_t>(solution.beta.size()));
  const LooCache cache = build_loo_cache(solution, exec);
  LossValue out;
  out.vtilde = kernels::reduce_outer(cache.clusters);
  out.value = c.dot(out.vtilde * c);
  out.beta = solution.beta;
  return out;
}

LossValue sandwich_loss(const ClusterDataset& data, const GlmFamily& family,
                        const CovarianceStructure& s, const DispersionParams& gamma,
                        const VectorXd& c, const std::optional<VectorXd>& warm,
                        const ScoringSettings& settings, Exec exec) {
  if (data.num_clusters() < data.p() + 1)
    throw DataError("sandwich loss needs at least p + 1 clusters");
  return sandwich_loss(fit_beta(data, family, s, gamma, warm, settings, exec), c, exec);
}

LossValue large_sample_sandwich_loss(const QmlSolution& solution, const VectorXd& c) {
  check_contrast(c, static_cast<std::size_t>(solution.beta.size()));
  const Eigen::Index p = solution.beta.size();
  MatrixXd meat = MatrixXd::Zero(p, p);
  for (const auto& t : solution.terms) meat.noalias() += t.dtwr * t.dtwr.transpose();
  LossValue out;
  out.vtilde = solution.dtwd_inv * meat * solution.dtwd_inv;
  out.vtilde = 0.5 * (out.vtilde + out.vtilde.transpose());
  out.value = c.dot(out.vtilde * c);
  out.beta = solution.beta;
  return out;
}

LossValue large_sample_sandwich_loss(const ClusterDataset& data, const GlmFamily& family,
                                     const CovarianceStructure& s,
                                     const DispersionParams& gamma, const VectorXd& c,
                                     const std::optional<VectorXd>& warm,
                                     const ScoringSettings& settings, Exec exec) {
  return large_sample_sandwich_loss(fit_beta(data, family, s, gamma, warm, settings, exec), c);
}

}  // namespace sandreg
