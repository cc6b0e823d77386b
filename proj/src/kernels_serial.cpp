#include "sandreg/kernels.hpp"

namespace sandreg::kernels::serial {

std::vector<ClusterTerms> cluster_terms(const ClusterDataset& data, const GlmFamily& family,
                                        const CovarianceStructure& s,
                                        const DispersionParams& gamma, const VectorXd& beta) {
  const auto factors = correlation_factors(data, s, gamma);
  std::vector<ClusterTerms> out;
  out.reserve(data.num_clusters());
  for (const auto& c : data.clusters())
    out.push_back(cluster_term(c, family, s, gamma, beta,
                               factors.empty() ? nullptr : &factors[c.size()]));
  return out;
}

std::vector<LooTerms> loo_terms(const std::vector<ClusterTerms>& terms, const MatrixXd& m_inv) {
  std::vector<LooTerms> out;
  out.reserve(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) out.push_back(loo_term(i, terms[i], m_inv));
  return out;
}

}  // namespace sandreg::kernels::serial
