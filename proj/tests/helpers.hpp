#pragma once

#include "sandreg/glm.hpp"
#include "sandreg/rng.hpp"

#include <cmath>

namespace sandreg::testing {

// Eight clusters of sizes 2..4 with an intercept and one slope, built from
// trigonometric formulas so that external reference values can be
// reproduced exactly.
inline ClusterDataset trig_dataset() {
  std::vector<ClusterData> out;
  for (int i = 0; i < 8; ++i) {
    const int n = 2 + i % 3;
    VectorXd y(n);
    MatrixXd x(n, 2);
    for (int j = 0; j < n; ++j) {
      const double xj = std::sin(1.3 * i + 0.7 * j);
      x(j, 0) = 1.0;
      x(j, 1) = xj;
      y(j) = 0.5 + xj + std::cos(2.1 * i + 0.4 * j) + 0.3 * std::sin(5.0 * i * j + 1.0);
    }
    out.emplace_back(y, x);
  }
  return ClusterDataset(std::move(out));
}

// Ten clusters of three with a binary response.
inline ClusterDataset trig_binary_dataset() {
  std::vector<ClusterData> out;
  for (int i = 0; i < 10; ++i) {
    VectorXd y(3);
    MatrixXd x(3, 2);
    for (int j = 0; j < 3; ++j) {
      const double xj = std::sin(1.3 * i + 0.7 * j);
      x(j, 0) = 1.0;
      x(j, 1) = xj;
      y(j) = std::sin(3.7 * i + 1.1 * j + 2.0) + xj > 0.2 ? 1.0 : 0.0;
    }
    out.emplace_back(y, x);
  }
  return ClusterDataset(std::move(out));
}

// Same covariates with counts 1 + (7k + 3) mod 5, k the row index.
inline ClusterDataset trig_count_dataset() {
  std::vector<ClusterData> out;
  int k = 0;
  for (int i = 0; i < 10; ++i) {
    VectorXd y(3);
    MatrixXd x(3, 2);
    for (int j = 0; j < 3; ++j, ++k) {
      x(j, 0) = 1.0;
      x(j, 1) = std::sin(1.3 * i + 0.7 * j);
      y(j) = 1.0 + (k * 7 + 3) % 5;
    }
    out.emplace_back(y, x);
  }
  return ClusterDataset(std::move(out));
}

// Random linear-model data: sizes uniform on [n_lo, n_hi], standard normal
// covariates and responses.
inline ClusterDataset random_dataset(Rng& rng, std::size_t clusters, int n_lo, int n_hi,
                                     int p) {
  std::vector<ClusterData> out;
  for (std::size_t i = 0; i < clusters; ++i) {
    const int n = n_lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(n_hi - n_lo + 1));
    MatrixXd x(n, p);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < p; ++k) x(j, k) = rng.normal();
    out.emplace_back(rng.normals(n), x);
  }
  return ClusterDataset(std::move(out));
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(std::fabs(b), 1e-300);
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace sandreg::testing
