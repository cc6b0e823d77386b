#pragma once

#include "sandreg/glm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sandreg {

enum class CovKind { independence, exchangeable, ar1, arma, random_effects, two_piece };
enum class ScaleMode { unit, free };

/// Parametric working covariance family gamma -> Sigma_i(gamma).
///
/// Every structure factors as Sigma_i = scale * A_i^{1/2} P_i(shape) A_i^{1/2}
/// where P_i depends only on the shape coordinates. Shape layouts:
///   independence   : ()
///   exchangeable   : (rho)
///   ar1            : (rho)
///   arma(p, q)     : (phi_1..phi_p, theta_1..theta_q), P = Toeplitz ACF
///   random_effects : vech of lower Cholesky factor L, L L^T = V_u / sigma^2,
///                    P = Z L L^T Z^T + I (relative covariance factor)
///   two_piece      : (ratio), P = diag(1 if x_col >= 0 else ratio)
/// When scale_mode is free, the scale (phi, or sigma^2 for random effects)
/// is appended as the last coordinate of the full gamma vector.
struct CovarianceStructure {
  CovKind kind = CovKind::independence;
  ScaleMode scale_mode = ScaleMode::unit;
  int ar_order = 0;
  int ma_order = 0;
  /// random_effects: covariate columns feeding Z, raised to powers 1..re_degree.
  std::vector<int> re_columns;
  bool re_intercept = true;
  int re_degree = 1;
  /// two_piece: covariate column whose sign selects the variance level.
  int piece_column = 0;
  /// Largest group size the exchangeable bound must accommodate.
  std::size_t max_group_size = 2;

  static CovarianceStructure independence(ScaleMode s = ScaleMode::unit);
  static CovarianceStructure exchangeable(std::size_t n_max, ScaleMode s = ScaleMode::unit);
  static CovarianceStructure ar1(ScaleMode s = ScaleMode::unit);
  static CovarianceStructure arma(int p, int q, ScaleMode s = ScaleMode::unit);
  static CovarianceStructure random_effects(std::vector<int> columns, bool intercept,
                                            int degree, ScaleMode s = ScaleMode::unit);
  static CovarianceStructure two_piece(int column, ScaleMode s = ScaleMode::unit);

  std::size_t shape_dim() const;
  std::size_t dim() const { return shape_dim() + (scale_mode == ScaleMode::free ? 1 : 0); }
  /// Width of Z for random effects.
  std::size_t re_width() const;
  /// Whether P_i depends on covariates (otherwise only on the group size).
  bool covariate_dependent() const {
    return kind == CovKind::random_effects || kind == CovKind::two_piece;
  }

  /// Throws ConfigError when orders or selectors are invalid for `p` covariates.
  void validate(std::size_t p) const;

  std::string label() const;
  /// Names of the full gamma coordinates, in layout order.
  std::vector<std::string> parameter_names() const;
};

/// Parse "independence", "exchangeable", "ar1", "arma(p,q)", "random_effects",
/// "two_piece". Random-effect and two-piece selectors are filled separately.
CovarianceStructure parse_structure(const std::string& text, ScaleMode scale);

/// A point of the constrained dispersion space.
struct DispersionParams {
  VectorXd shape;
  double scale = 1.0;

  /// Full gamma vector (shape followed by the scale when it is free).
  VectorXd full(const CovarianceStructure& s) const;
  static DispersionParams from_full(const CovarianceStructure& s, const VectorXd& gamma);

  /// Shape at which P_i = I (independence working model).
  static DispersionParams identity(const CovarianceStructure& s);
  /// Random effects from the covariance of u and the residual variance.
  static DispersionParams random_effects(const MatrixXd& v_u, double sigma2);
};

/// Checks domain constraints (stationarity, correlation bounds, positivity).
void validate_params(const CovarianceStructure& s, const DispersionParams& gamma);

/// scale * P(shape) for the structures that depend only on the group size.
MatrixXd build_correlation(const CovarianceStructure& s, const DispersionParams& gamma,
                           std::size_t n);

/// Autocovariances gamma_0..gamma_max_lag of X_t = sum phi_j X_{t-j} + e_t +
/// sum theta_j e_{t-j}, Var(e) = sigma2. Throws NumericalError when the AR part
/// is not stationary.
VectorXd arma_autocovariance(const VectorXd& phi, const VectorXd& theta, double sigma2,
                             std::size_t max_lag);

/// True iff every root of 1 - sum phi_j z^j lies outside the unit circle.
bool ar_stationary(const VectorXd& phi);

/// Z_i built from the structure's selector.
MatrixXd random_effects_design(const CovarianceStructure& s, const ClusterData& cluster);

/// Z V_u Z^T + sigma^2 I.
MatrixXd random_effects_cov(const CovarianceStructure& s, const DispersionParams& gamma,
                            const ClusterData& cluster);

/// scale * P_i(shape) for any structure.
MatrixXd pseudo_correlation(const CovarianceStructure& s, const DispersionParams& gamma,
                            const ClusterData& cluster);

/// Sigma_i = A^{1/2} (scale P_i) A^{1/2}.
MatrixXd working_covariance(const ClusterData& cluster, const GlmFamily& family,
                            const VectorXd& beta, const CovarianceStructure& s,
                            const DispersionParams& gamma);

/// W_i = A^{-1/2} (scale P_i)^{-1} A^{-1/2}, from the Cholesky factor of P_i.
MatrixXd weight_matrix(const ClusterData& cluster, const GlmFamily& family,
                       const VectorXd& beta, const CovarianceStructure& s,
                       const DispersionParams& gamma);

/// Map the full gamma to R^dim and back. unpack never fails.
VectorXd pack(const CovarianceStructure& s, const DispersionParams& gamma);
DispersionParams unpack(const CovarianceStructure& s, const VectorXd& theta);

/// Shape-only versions used by the dispersion optimiser.
VectorXd pack_shape(const CovarianceStructure& s, const VectorXd& shape);
VectorXd unpack_shape(const CovarianceStructure& s, const VectorXd& theta);

/// Partial autocorrelations <-> stationary AR coefficients (Durbin-Levinson).
VectorXd pacf_to_ar(const VectorXd& pacf);
VectorXd ar_to_pacf(const VectorXd& phi);

}  // namespace sandreg
