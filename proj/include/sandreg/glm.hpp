#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sandreg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Link { identity, logit, log };
enum class VarianceFn { constant, binomial, poisson };

/// Mean model g(E[Y|X]) = X beta together with the GLM variance function v.
struct GlmFamily {
  Link link = Link::identity;
  VarianceFn variance = VarianceFn::constant;

  static GlmFamily gaussian() { return {Link::identity, VarianceFn::constant}; }
  static GlmFamily binomial() { return {Link::logit, VarianceFn::binomial}; }
  static GlmFamily poisson() { return {Link::log, VarianceFn::poisson}; }

  double linkfun(double mu) const;
  double linkinv(double eta) const;
  /// g'(mu).
  double link_derivative(double mu) const;
  /// d mu / d eta evaluated at eta, i.e. 1 / g'(g^{-1}(eta)).
  double mu_eta(double eta) const;
  double variance_fn(double mu) const;

  std::string name() const;
};

Link parse_link(const std::string& s);
VarianceFn parse_variance(const std::string& s);
std::string to_string(Link link);
std::string to_string(VarianceFn v);

/// One independent cluster. Rows are observations in within-cluster order.
struct ClusterData {
  VectorXd y;
  MatrixXd x;

  ClusterData() = default;
  ClusterData(VectorXd y_in, MatrixXd x_in);

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
};

class ClusterDataset {
 public:
  ClusterDataset() = default;
  explicit ClusterDataset(std::vector<ClusterData> clusters);

  std::size_t num_clusters() const { return clusters_.size(); }
  std::size_t p() const { return p_; }
  std::size_t total_observations() const { return n_total_; }
  std::size_t max_group_size() const { return n_max_; }

  const ClusterData& operator[](std::size_t i) const { return clusters_[i]; }
  const std::vector<ClusterData>& clusters() const { return clusters_; }

  /// Copy with cluster `i` deleted.
  ClusterDataset without(std::size_t i) const;

  /// Dataset with every response multiplied by `s`.
  ClusterDataset scaled_response(double s) const;

  /// 64-bit FNV-1a digest over the raw numbers; used to confirm paired
  /// designs see identical data.
  std::uint64_t digest() const;

 private:
  std::vector<ClusterData> clusters_;
  std::size_t p_ = 0;
  std::size_t n_total_ = 0;
  std::size_t n_max_ = 0;
};

VectorXd mean_vector(const ClusterData& cluster, const GlmFamily& family,
                     const VectorXd& beta);

/// D_i = d mu_i / d beta^T, entry (j, k) = X_jk / g'(mu_j).
MatrixXd mean_jacobian(const ClusterData& cluster, const GlmFamily& family,
                       const VectorXd& beta);

/// Diagonal of A_i = diag(v(mu_i)). Throws NumericalError when an entry
/// falls to 1e-300 or below.
VectorXd variance_diag(const ClusterData& cluster, const GlmFamily& family,
                       const VectorXd& beta);

}  // namespace sandreg
