#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace sandreg {

/// Seeded stream for one (root seed, stream index) pair. Streams are derived
/// by hashing, so replication r sees the same numbers whichever worker runs it.
class Rng {
 public:
  explicit Rng(std::uint64_t root, std::uint64_t stream = 0);

  std::uint64_t next() { return engine_(); }
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal by Box-Muller.
  double normal();
  Eigen::VectorXd normals(Eigen::Index n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

double std_normal_cdf(double x);
double std_normal_pdf(double x);

/// Draws from N(mean, cov) with a precomputed factor. Falls back to a
/// pivoted LDL^T factor when cov is only semidefinite; rejects indefinite
/// matrices with NumericalError.
class MvnSampler {
 public:
  MvnSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov);
  Eigen::VectorXd draw(Rng& rng) const;
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd factor_;
};

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng);

}  // namespace sandreg
