#include "sandreg/kernels.hpp"

namespace sandreg::kernels::omp {

std::vector<ClusterTerms> cluster_terms(const ClusterDataset& data, const GlmFamily& family,
                                        const CovarianceStructure& s,
                                        const DispersionParams& gamma, const VectorXd& beta) {
  const auto factors = correlation_factors(data, s, gamma);
  std::vector<ClusterTerms> out(data.num_clusters());
  for_each_index(Exec::parallel, out.size(), [&](std::size_t i) {
    const auto& c = data[i];
    out[i] = cluster_term(c, family, s, gamma, beta,
                          factors.empty() ? nullptr : &factors[c.size()]);
  });
  return out;
}

std::vector<LooTerms> loo_terms(const std::vector<ClusterTerms>& terms, const MatrixXd& m_inv) {
  std::vector<LooTerms> out(terms.size());
  for_each_index(Exec::parallel, out.size(),
                 [&](std::size_t i) { out[i] = loo_term(i, terms[i], m_inv); });
  return out;
}

}  // namespace sandreg::kernels::omp
