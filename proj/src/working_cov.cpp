#include "sandreg/working_cov.hpp"

#include "sandreg/error.hpp"

#include <cmath>
#include <regex>
#include <sstream>

namespace sandreg {

namespace {

constexpr double kBoundaryEps = 1e-6;

std::string join_values(const VectorXd& v) {
  std::ostringstream os;
  os.precision(10);
  os << "(";
  for (Eigen::Index k = 0; k < v.size(); ++k) os << (k ? ", " : "") << v(k);
  os << ")";
  return os.str();
}

std::pair<double, double> exchangeable_bounds(std::size_t n_max) {
  const double lo = n_max >= 2 ? -1.0 / static_cast<double>(n_max - 1) : -1.0;
  return {lo + kBoundaryEps, 1.0 - kBoundaryEps};
}

std::size_t vech_size(std::size_t r) { return r * (r + 1) / 2; }

MatrixXd vech_to_lower(const VectorXd& v, std::size_t r) {
  MatrixXd l = MatrixXd::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(r); ++c)
    for (Eigen::Index row = c; row < static_cast<Eigen::Index>(r); ++row) l(row, c) = v(k++);
  return l;
}

MatrixXd toeplitz(const VectorXd& acf, std::size_t n) {
  MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          acf(static_cast<Eigen::Index>(j > k ? j - k : k - j));
  return m;
}

}  // namespace

CovarianceStructure CovarianceStructure::independence(ScaleMode s) {
  CovarianceStructure c;
  c.kind = CovKind::independence;
  c.scale_mode = s;
  return c;
}

CovarianceStructure CovarianceStructure::exchangeable(std::size_t n_max, ScaleMode s) {
  CovarianceStructure c;
  c.kind = CovKind::exchangeable;
  c.scale_mode = s;
  c.max_group_size = n_max;
  return c;
}

CovarianceStructure CovarianceStructure::ar1(ScaleMode s) {
  CovarianceStructure c;
  c.kind = CovKind::ar1;
  c.scale_mode = s;
  return c;
}

CovarianceStructure CovarianceStructure::arma(int p, int q, ScaleMode s) {
  CovarianceStructure c;
  c.kind = CovKind::arma;
  c.scale_mode = s;
  c.ar_order = p;
  c.ma_order = q;
  return c;
}

CovarianceStructure CovarianceStructure::random_effects(std::vector<int> columns,
                                                        bool intercept, int degree,
                                                        ScaleMode s) {
  CovarianceStructure c;
  c.kind = CovKind::random_effects;
  c.scale_mode = s;
  c.re_columns = std::move(columns);
  c.re_intercept = intercept;
  c.re_degree = degree;
  return c;
}

CovarianceStructure CovarianceStructure::two_piece(int column, ScaleMode s) {
  CovarianceStructure c;
  c.kind = CovKind::two_piece;
  c.scale_mode = s;
  c.piece_column = column;
  return c;
}

std::size_t CovarianceStructure::re_width() const {
  return (re_intercept ? 1u : 0u) +
         re_columns.size() * static_cast<std::size_t>(std::max(re_degree, 0));
}

std::size_t CovarianceStructure::shape_dim() const {
  switch (kind) {
    case CovKind::independence: return 0;
    case CovKind::exchangeable:
    case CovKind::ar1:
    case CovKind::two_piece: return 1;
    case CovKind::arma: return static_cast<std::size_t>(ar_order + ma_order);
    case CovKind::random_effects: return vech_size(re_width());
  }
  return 0;
}

void CovarianceStructure::validate(std::size_t p) const {
  if (kind == CovKind::arma) {
    if (ar_order < 0 || ma_order < 0 || ar_order + ma_order < 1)
      throw ConfigError("arma orders must satisfy p >= 0, q >= 0, p + q >= 1");
  }
  if (kind == CovKind::random_effects) {
    if (re_degree < 1) throw ConfigError("random effects degree must be >= 1");
    if (re_width() == 0) throw ConfigError("random effects design has no columns");
    for (int c : re_columns)
      if (c < 0 || static_cast<std::size_t>(c) >= p)
        throw ConfigError("random effects column " + std::to_string(c) + " out of range");
  }
  if (kind == CovKind::two_piece &&
      (piece_column < 0 || static_cast<std::size_t>(piece_column) >= p))
    throw ConfigError("two_piece column " + std::to_string(piece_column) + " out of range");
  if (shape_dim() > 10)
    throw ConfigError("structure " + label() + " has more than 10 shape parameters");
}

std::string CovarianceStructure::label() const {
  switch (kind) {
    case CovKind::independence: return "independence";
    case CovKind::exchangeable: return "exchangeable";
    case CovKind::ar1: return "ar1";
    case CovKind::arma:
      return "arma(" + std::to_string(ar_order) + "," + std::to_string(ma_order) + ")";
    case CovKind::random_effects: {
      std::string s = "random_effects[";
      bool first = true;
      if (re_intercept) {
        s += "1";
        first = false;
      }
      for (int c : re_columns)
        for (int d = 1; d <= re_degree; ++d) {
          s += (first ? "" : ",") + std::string("x") + std::to_string(c);
          if (d > 1) s += "^" + std::to_string(d);
          first = false;
        }
      return s + "]";
    }
    case CovKind::two_piece: return "two_piece[x" + std::to_string(piece_column) + "]";
  }
  return "?";
}

std::vector<std::string> CovarianceStructure::parameter_names() const {
  std::vector<std::string> names;
  switch (kind) {
    case CovKind::independence: break;
    case CovKind::exchangeable:
    case CovKind::ar1: names.push_back("rho"); break;
    case CovKind::arma:
      for (int j = 1; j <= ar_order; ++j) names.push_back("ar" + std::to_string(j));
      for (int j = 1; j <= ma_order; ++j) names.push_back("ma" + std::to_string(j));
      break;
    case CovKind::random_effects: {
      const std::size_t r = re_width();
      for (std::size_t c = 0; c < r; ++c)
        for (std::size_t row = c; row < r; ++row)
          names.push_back("L" + std::to_string(row) + std::to_string(c));
      break;
    }
    case CovKind::two_piece: names.push_back("ratio"); break;
  }
  if (scale_mode == ScaleMode::free)
    names.push_back(kind == CovKind::random_effects ? "sigma2" : "scale");
  return names;
}

CovarianceStructure parse_structure(const std::string& text, ScaleMode scale) {
  static const std::regex arma_re(R"(arma\(\s*(\d+)\s*,\s*(\d+)\s*\))");
  std::smatch m;
  if (text == "independence") return CovarianceStructure::independence(scale);
  if (text == "exchangeable") return CovarianceStructure::exchangeable(2, scale);
  if (text == "ar1") return CovarianceStructure::ar1(scale);
  if (std::regex_match(text, m, arma_re)) {
    auto s = CovarianceStructure::arma(std::stoi(m[1]), std::stoi(m[2]), scale);
    s.validate(0);
    return s;
  }
  if (text == "random_effects") return CovarianceStructure::random_effects({}, true, 1, scale);
  if (text == "two_piece") return CovarianceStructure::two_piece(0, scale);
  throw ConfigError("unknown covariance structure '" + text + "'");
}

VectorXd DispersionParams::full(const CovarianceStructure& s) const {
  VectorXd g(static_cast<Eigen::Index>(s.dim()));
  g.head(shape.size()) = shape;
  if (s.scale_mode == ScaleMode::free) g(g.size() - 1) = scale;
  return g;
}

DispersionParams DispersionParams::from_full(const CovarianceStructure& s,
                                             const VectorXd& gamma) {
  if (static_cast<std::size_t>(gamma.size()) != s.dim())
    throw ConfigError("gamma has " + std::to_string(gamma.size()) + " entries, structure " +
                      s.label() + " expects " + std::to_string(s.dim()));
  DispersionParams d;
  d.shape = gamma.head(static_cast<Eigen::Index>(s.shape_dim()));
  d.scale = s.scale_mode == ScaleMode::free ? gamma(gamma.size() - 1) : 1.0;
  return d;
}

DispersionParams DispersionParams::identity(const CovarianceStructure& s) {
  DispersionParams d;
  d.shape = VectorXd::Zero(static_cast<Eigen::Index>(s.shape_dim()));
  if (s.kind == CovKind::two_piece) d.shape(0) = 1.0;
  if (s.kind == CovKind::random_effects) {
    // smallest admissible relative covariance
    MatrixXd l = MatrixXd::Identity(static_cast<Eigen::Index>(s.re_width()),
                                    static_cast<Eigen::Index>(s.re_width())) * 1e-4;
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < l.cols(); ++c)
      for (Eigen::Index r = c; r < l.rows(); ++r) d.shape(k++) = l(r, c);
  }
  return d;
}

DispersionParams DispersionParams::random_effects(const MatrixXd& v_u, double sigma2) {
  const MatrixXd rel = v_u / sigma2;
  Eigen::LLT<MatrixXd> llt(rel);
  if (llt.info() != Eigen::Success)
    throw NumericalError("random effects covariance is not positive definite");
  const MatrixXd l = llt.matrixL();
  DispersionParams d;
  d.shape.resize(static_cast<Eigen::Index>(vech_size(static_cast<std::size_t>(l.rows()))));
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < l.cols(); ++c)
    for (Eigen::Index r = c; r < l.rows(); ++r) d.shape(k++) = l(r, c);
  d.scale = sigma2;
  return d;
}

void validate_params(const CovarianceStructure& s, const DispersionParams& gamma) {
  if (static_cast<std::size_t>(gamma.shape.size()) != s.shape_dim())
    throw ConfigError("structure " + s.label() + " expects " + std::to_string(s.shape_dim()) +
                      " shape parameters, got " + std::to_string(gamma.shape.size()));
  if (!(gamma.scale > 0.0) || !std::isfinite(gamma.scale))
    throw NumericalError("scale must be positive, got " + std::to_string(gamma.scale));
  if (!gamma.shape.allFinite()) throw NumericalError("non-finite dispersion parameters");
  switch (s.kind) {
    case CovKind::independence: break;
    case CovKind::exchangeable: {
      const double rho = gamma.shape(0);
      const double lo =
          s.max_group_size >= 2 ? -1.0 / static_cast<double>(s.max_group_size - 1) : -1.0;
      if (!(rho > lo && rho < 1.0))
        throw NumericalError("exchangeable rho=" + std::to_string(rho) +
                             " outside the positive definite range for group size " +
                             std::to_string(s.max_group_size));
      break;
    }
    case CovKind::ar1:
      if (!(std::fabs(gamma.shape(0)) < 1.0))
        throw NumericalError("ar1 rho=" + std::to_string(gamma.shape(0)) + " not stationary");
      break;
    case CovKind::arma:
      if (!ar_stationary(gamma.shape.head(s.ar_order)))
        throw NumericalError("arma AR coefficients " +
                             join_values(gamma.shape.head(s.ar_order)) + " not stationary");
      break;
    case CovKind::random_effects: {
      const MatrixXd l = vech_to_lower(gamma.shape, s.re_width());
      for (Eigen::Index k = 0; k < l.rows(); ++k)
        if (!(l(k, k) > 0.0))
          throw NumericalError("random effects Cholesky diagonal L" + std::to_string(k) +
                               std::to_string(k) + " must be positive");
      break;
    }
    case CovKind::two_piece:
      if (!(gamma.shape(0) > 0.0))
        throw NumericalError("two_piece ratio must be positive");
      break;
  }
}

bool ar_stationary(const VectorXd& phi) {
  if (phi.size() == 0) return true;
  VectorXd cur = phi;
  for (Eigen::Index k = phi.size(); k >= 1; --k) {
    const double r = cur(k - 1);
    if (!(std::fabs(r) < 1.0)) return false;
    VectorXd prev(k - 1);
    for (Eigen::Index j = 0; j < k - 1; ++j)
      prev(j) = (cur(j) + r * cur(k - 2 - j)) / (1.0 - r * r);
    cur = prev;
  }
  return true;
}

VectorXd pacf_to_ar(const VectorXd& pacf) {
  const Eigen::Index p = pacf.size();
  VectorXd phi = VectorXd::Zero(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    VectorXd next = phi;
    next(k) = pacf(k);
    for (Eigen::Index j = 0; j < k; ++j) next(j) = phi(j) - pacf(k) * phi(k - 1 - j);
    phi = next;
  }
  return phi;
}

VectorXd ar_to_pacf(const VectorXd& phi) {
  const Eigen::Index p = phi.size();
  VectorXd pacf(p);
  VectorXd cur = phi;
  for (Eigen::Index k = p; k >= 1; --k) {
    const double r = cur(k - 1);
    pacf(k - 1) = r;
    VectorXd prev(k - 1);
    for (Eigen::Index j = 0; j < k - 1; ++j)
      prev(j) = (cur(j) + r * cur(k - 2 - j)) / (1.0 - r * r);
    cur = prev;
  }
  return pacf;
}

VectorXd arma_autocovariance(const VectorXd& phi, const VectorXd& theta, double sigma2,
                             std::size_t max_lag) {
  if (!ar_stationary(phi))
    throw NumericalError("AR coefficients " + join_values(phi) + " are not stationary");
  const Eigen::Index p = phi.size();
  const Eigen::Index q = theta.size();
  const Eigen::Index m = std::max(p, q);

  // MA(infinity) weights psi_0..psi_q
  VectorXd psi = VectorXd::Zero(q + 1);
  psi(0) = 1.0;
  for (Eigen::Index j = 1; j <= q; ++j) {
    double v = theta(j - 1);
    for (Eigen::Index k = 1; k <= std::min(j, p); ++k) v += phi(k - 1) * psi(j - k);
    psi(j) = v;
  }
  auto theta_at = [&](Eigen::Index j) { return j == 0 ? 1.0 : theta(j - 1); };

  // gamma_k - sum_j phi_j gamma_|k-j| = sigma2 sum_{j=k}^q theta_j psi_{j-k}
  MatrixXd a = MatrixXd::Zero(m + 1, m + 1);
  VectorXd rhs = VectorXd::Zero(m + 1);
  for (Eigen::Index k = 0; k <= m; ++k) {
    a(k, k) += 1.0;
    for (Eigen::Index j = 1; j <= p; ++j) a(k, std::abs(k - j)) -= phi(j - 1);
    for (Eigen::Index j = k; j <= q; ++j) rhs(k) += sigma2 * theta_at(j) * psi(j - k);
  }
  const VectorXd head = a.fullPivLu().solve(rhs);

  VectorXd acov(static_cast<Eigen::Index>(max_lag) + 1);
  for (Eigen::Index k = 0; k < acov.size(); ++k) {
    if (k <= m) {
      acov(k) = head(k);
    } else {
      double v = 0.0;
      for (Eigen::Index j = 1; j <= p; ++j) v += phi(j - 1) * acov(k - j);
      acov(k) = v;
    }
  }
  if (!(acov(0) > 0.0)) throw NumericalError("ARMA variance is not positive");
  return acov;
}

MatrixXd build_correlation(const CovarianceStructure& s, const DispersionParams& gamma,
                           std::size_t n) {
  validate_params(s, gamma);
  const auto ni = static_cast<Eigen::Index>(n);
  MatrixXd p;
  switch (s.kind) {
    case CovKind::independence: p = MatrixXd::Identity(ni, ni); break;
    case CovKind::exchangeable: {
      const double rho = gamma.shape(0);
      p = MatrixXd::Constant(ni, ni, rho);
      p.diagonal().setOnes();
      break;
    }
    case CovKind::ar1: {
      const double rho = gamma.shape(0);
      VectorXd acf(ni);
      double v = 1.0;
      for (Eigen::Index k = 0; k < ni; ++k) {
        acf(k) = v;
        v *= rho;
      }
      p = toeplitz(acf, n);
      break;
    }
    case CovKind::arma: {
      const VectorXd acov = arma_autocovariance(gamma.shape.head(s.ar_order),
                                                gamma.shape.tail(s.ma_order), 1.0, n - 1);
      p = toeplitz(acov / acov(0), n);
      break;
    }
    case CovKind::random_effects:
    case CovKind::two_piece:
      throw ConfigError("structure " + s.label() + " needs cluster covariates");
  }
  if (s.scale_mode == ScaleMode::free) p *= gamma.scale;
  return p;
}

MatrixXd random_effects_design(const CovarianceStructure& s, const ClusterData& cluster) {
  const Eigen::Index n = cluster.x.rows();
  MatrixXd z(n, static_cast<Eigen::Index>(s.re_width()));
  Eigen::Index col = 0;
  if (s.re_intercept) z.col(col++).setOnes();
  for (int c : s.re_columns) {
    if (c < 0 || c >= cluster.x.cols())
      throw ConfigError("random effects column " + std::to_string(c) + " out of range");
    VectorXd pw = VectorXd::Ones(n);
    for (int d = 1; d <= s.re_degree; ++d) {
      pw = pw.cwiseProduct(cluster.x.col(c));
      z.col(col++) = pw;
    }
  }
  return z;
}

MatrixXd random_effects_cov(const CovarianceStructure& s, const DispersionParams& gamma,
                            const ClusterData& cluster) {
  validate_params(s, gamma);
  const MatrixXd z = random_effects_design(s, cluster);
  const MatrixXd l = vech_to_lower(gamma.shape, s.re_width());
  const MatrixXd zl = z * l;
  MatrixXd sigma = zl * zl.transpose();
  sigma.diagonal().array() += 1.0;
  return sigma * gamma.scale;
}

MatrixXd pseudo_correlation(const CovarianceStructure& s, const DispersionParams& gamma,
                            const ClusterData& cluster) {
  switch (s.kind) {
    case CovKind::random_effects: {
      MatrixXd p = random_effects_cov(s, gamma, cluster);
      if (s.scale_mode == ScaleMode::unit) p /= gamma.scale;
      return p;
    }
    case CovKind::two_piece: {
      validate_params(s, gamma);
      if (s.piece_column >= cluster.x.cols())
        throw ConfigError("two_piece column out of range");
      VectorXd d(cluster.x.rows());
      for (Eigen::Index j = 0; j < d.size(); ++j)
        d(j) = cluster.x(j, s.piece_column) >= 0.0 ? 1.0 : gamma.shape(0);
      if (s.scale_mode == ScaleMode::free) d *= gamma.scale;
      return d.asDiagonal();
    }
    default: return build_correlation(s, gamma, cluster.size());
  }
}

MatrixXd working_covariance(const ClusterData& cluster, const GlmFamily& family,
                            const VectorXd& beta, const CovarianceStructure& s,
                            const DispersionParams& gamma) {
  const VectorXd a_half = variance_diag(cluster, family, beta).cwiseSqrt();
  return a_half.asDiagonal() * pseudo_correlation(s, gamma, cluster) * a_half.asDiagonal();
}

MatrixXd weight_matrix(const ClusterData& cluster, const GlmFamily& family,
                       const VectorXd& beta, const CovarianceStructure& s,
                       const DispersionParams& gamma) {
  const MatrixXd p = pseudo_correlation(s, gamma, cluster);
  Eigen::LLT<MatrixXd> llt(p);
  if (llt.info() != Eigen::Success)
    throw NumericalError("working correlation " + s.label() + " at gamma=" +
                         join_values(gamma.full(s)) + " is not positive definite");
  const VectorXd a_inv_half = variance_diag(cluster, family, beta).cwiseSqrt().cwiseInverse();
  MatrixXd pinv = llt.solve(MatrixXd::Identity(p.rows(), p.cols()));
  return a_inv_half.asDiagonal() * pinv * a_inv_half.asDiagonal();
}

VectorXd pack_shape(const CovarianceStructure& s, const VectorXd& shape) {
  VectorXd theta(shape.size());
  switch (s.kind) {
    case CovKind::independence: break;
    case CovKind::exchangeable: {
      const auto [lo, hi] = exchangeable_bounds(s.max_group_size);
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      theta(0) = std::atanh((shape(0) - mid) / half);
      break;
    }
    case CovKind::ar1: theta(0) = std::atanh(shape(0) / (1.0 - kBoundaryEps)); break;
    case CovKind::arma: {
      const VectorXd ar_pacf = ar_to_pacf(shape.head(s.ar_order));
      const VectorXd ma_pacf = ar_to_pacf(-shape.tail(s.ma_order));
      for (Eigen::Index k = 0; k < ar_pacf.size(); ++k)
        theta(k) = std::atanh(ar_pacf(k) / (1.0 - kBoundaryEps));
      for (Eigen::Index k = 0; k < ma_pacf.size(); ++k)
        theta(s.ar_order + k) = std::atanh(ma_pacf(k) / (1.0 - kBoundaryEps));
      break;
    }
    case CovKind::random_effects: {
      const MatrixXd l = vech_to_lower(shape, s.re_width());
      Eigen::Index k = 0;
      for (Eigen::Index c = 0; c < l.cols(); ++c)
        for (Eigen::Index r = c; r < l.rows(); ++r, ++k)
          theta(k) = r == c ? std::log(l(r, c)) : l(r, c);
      break;
    }
    case CovKind::two_piece: theta(0) = std::log(shape(0)); break;
  }
  return theta;
}

VectorXd unpack_shape(const CovarianceStructure& s, const VectorXd& theta) {
  VectorXd shape(theta.size());
  switch (s.kind) {
    case CovKind::independence: break;
    case CovKind::exchangeable: {
      const auto [lo, hi] = exchangeable_bounds(s.max_group_size);
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      shape(0) = mid + half * std::tanh(theta(0));
      break;
    }
    case CovKind::ar1: shape(0) = (1.0 - kBoundaryEps) * std::tanh(theta(0)); break;
    case CovKind::arma: {
      VectorXd ar_pacf = theta.head(s.ar_order).array().tanh() * (1.0 - kBoundaryEps);
      VectorXd ma_pacf = theta.tail(s.ma_order).array().tanh() * (1.0 - kBoundaryEps);
      shape.head(s.ar_order) = pacf_to_ar(ar_pacf);
      shape.tail(s.ma_order) = -pacf_to_ar(ma_pacf);
      break;
    }
    case CovKind::random_effects: {
      const std::size_t r = s.re_width();
      Eigen::Index k = 0;
      for (std::size_t c = 0; c < r; ++c)
        for (std::size_t row = c; row < r; ++row, ++k)
          shape(k) = row == c ? std::exp(theta(k)) : theta(k);
      break;
    }
    case CovKind::two_piece: shape(0) = std::exp(theta(0)); break;
  }
  return shape;
}

VectorXd pack(const CovarianceStructure& s, const DispersionParams& gamma) {
  VectorXd theta(static_cast<Eigen::Index>(s.dim()));
  theta.head(static_cast<Eigen::Index>(s.shape_dim())) = pack_shape(s, gamma.shape);
  if (s.scale_mode == ScaleMode::free) theta(theta.size() - 1) = std::log(gamma.scale);
  return theta;
}

DispersionParams unpack(const CovarianceStructure& s, const VectorXd& theta) {
  DispersionParams d;
  d.shape = unpack_shape(s, theta.head(static_cast<Eigen::Index>(s.shape_dim())));
  d.scale = s.scale_mode == ScaleMode::free ? std::exp(theta(theta.size() - 1)) : 1.0;
  return d;
}

}  // namespace sandreg
