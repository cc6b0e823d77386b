#include "sandreg/glm.hpp"

#include "sandreg/error.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace sandreg {

namespace {

double expit(double eta) {
  // exponent argument kept <= 0 on both branches
  if (eta >= 0.0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// mu (1 - mu) computed from eta without forming 1 - mu by subtraction.
double expit_derivative(double eta) {
  const double e = std::exp(-std::fabs(eta));
  const double d = 1.0 + e;
  return e / (d * d);
}

}  // namespace

double GlmFamily::linkfun(double mu) const {
  switch (link) {
    case Link::identity: return mu;
    case Link::logit: return std::log(mu) - std::log1p(-mu);
    case Link::log: return std::log(mu);
  }
  return mu;
}

double GlmFamily::linkinv(double eta) const {
  switch (link) {
    case Link::identity: return eta;
    case Link::logit: return expit(eta);
    case Link::log: return std::exp(eta);
  }
  return eta;
}

double GlmFamily::link_derivative(double mu) const {
  switch (link) {
    case Link::identity: return 1.0;
    case Link::logit: return 1.0 / (mu * (1.0 - mu));
    case Link::log: return 1.0 / mu;
  }
  return 1.0;
}

double GlmFamily::mu_eta(double eta) const {
  switch (link) {
    case Link::identity: return 1.0;
    case Link::logit: return expit_derivative(eta);
    case Link::log: return std::exp(eta);
  }
  return 1.0;
}

double GlmFamily::variance_fn(double mu) const {
  switch (variance) {
    case VarianceFn::constant: return 1.0;
    case VarianceFn::binomial: return mu * (1.0 - mu);
    case VarianceFn::poisson: return mu;
  }
  return 1.0;
}

std::string GlmFamily::name() const {
  return to_string(link) + "/" + to_string(variance);
}

Link parse_link(const std::string& s) {
  if (s == "identity") return Link::identity;
  if (s == "logit") return Link::logit;
  if (s == "log") return Link::log;
  throw ConfigError("unknown link '" + s + "'");
}

VarianceFn parse_variance(const std::string& s) {
  if (s == "constant") return VarianceFn::constant;
  if (s == "binomial") return VarianceFn::binomial;
  if (s == "poisson") return VarianceFn::poisson;
  throw ConfigError("unknown variance function '" + s + "'");
}

std::string to_string(Link link) {
  switch (link) {
    case Link::identity: return "identity";
    case Link::logit: return "logit";
    case Link::log: return "log";
  }
  return "?";
}

std::string to_string(VarianceFn v) {
  switch (v) {
    case VarianceFn::constant: return "constant";
    case VarianceFn::binomial: return "binomial";
    case VarianceFn::poisson: return "poisson";
  }
  return "?";
}

ClusterData::ClusterData(VectorXd y_in, MatrixXd x_in)
    : y(std::move(y_in)), x(std::move(x_in)) {
  if (y.size() < 1) throw DataError("cluster must contain at least one observation");
  if (x.rows() != y.size()) {
    std::ostringstream os;
    os << "covariate rows (" << x.rows() << ") differ from response length ("
       << y.size() << ")";
    throw DataError(os.str());
  }
  if (!y.allFinite() || !x.allFinite())
    throw DataError("cluster contains non-finite values");
}

ClusterDataset::ClusterDataset(std::vector<ClusterData> clusters)
    : clusters_(std::move(clusters)) {
  if (clusters_.empty()) throw DataError("dataset needs at least one cluster");
  p_ = static_cast<std::size_t>(clusters_.front().x.cols());
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    const auto& c = clusters_[i];
    if (static_cast<std::size_t>(c.x.cols()) != p_) {
      std::ostringstream os;
      os << "cluster " << i << " has " << c.x.cols() << " covariates, expected " << p_;
      throw DataError(os.str());
    }
    if (c.y.size() < 1 || c.x.rows() != c.y.size())
      throw DataError("malformed cluster " + std::to_string(i));
    n_total_ += c.size();
    n_max_ = std::max(n_max_, c.size());
  }
}

ClusterDataset ClusterDataset::without(std::size_t i) const {
  std::vector<ClusterData> rest;
  rest.reserve(clusters_.size() - 1);
  for (std::size_t j = 0; j < clusters_.size(); ++j)
    if (j != i) rest.push_back(clusters_[j]);
  return ClusterDataset(std::move(rest));
}

ClusterDataset ClusterDataset::scaled_response(double s) const {
  std::vector<ClusterData> out = clusters_;
  for (auto& c : out) c.y *= s;
  return ClusterDataset(std::move(out));
}

std::uint64_t ClusterDataset::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < bytes; ++k) {
      h ^= p[k];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : clusters_) {
    const std::uint64_t n = c.size();
    mix(&n, sizeof n);
    mix(c.y.data(), sizeof(double) * static_cast<std::size_t>(c.y.size()));
    mix(c.x.data(), sizeof(double) * static_cast<std::size_t>(c.x.size()));
  }
  return h;
}

VectorXd mean_vector(const ClusterData& cluster, const GlmFamily& family,
                     const VectorXd& beta) {
  const VectorXd eta = cluster.x * beta;
  if (family.link == Link::identity) return eta;
  VectorXd mu(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) mu(j) = family.linkinv(eta(j));
  return mu;
}

MatrixXd mean_jacobian(const ClusterData& cluster, const GlmFamily& family,
                       const VectorXd& beta) {
  if (family.link == Link::identity) return cluster.x;
  const VectorXd eta = cluster.x * beta;
  MatrixXd d = cluster.x;
  for (Eigen::Index j = 0; j < eta.size(); ++j) d.row(j) *= family.mu_eta(eta(j));
  return d;
}

VectorXd variance_diag(const ClusterData& cluster, const GlmFamily& family,
                       const VectorXd& beta) {
  if (family.variance == VarianceFn::constant)
    return VectorXd::Ones(static_cast<Eigen::Index>(cluster.size()));
  VectorXd v(static_cast<Eigen::Index>(cluster.size()));
  const VectorXd eta = cluster.x * beta;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    double vj;
    if (family.variance == VarianceFn::binomial && family.link == Link::logit)
      vj = expit_derivative(eta(j));
    else
      vj = family.variance_fn(family.linkinv(eta(j)));
    if (!(vj > 1e-300)) {
      std::ostringstream os;
      os << "degenerate mean: variance function is " << vj << " at observation " << j;
      throw NumericalError(os.str());
    }
    v(j) = vj;
  }
  return v;
}

}  // namespace sandreg
