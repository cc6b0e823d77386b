#include "sandreg/sim.hpp"

#include "sandreg/error.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace sandreg {

namespace {

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

MatrixXd equicorrelation(std::size_t n, double rho) {
  const auto m = static_cast<Eigen::Index>(n);
  MatrixXd c = MatrixXd::Constant(m, m, rho);
  c.diagonal().setOnes();
  return c;
}

}  // namespace

std::string to_string(DgpKind k) {
  switch (k) {
    case DgpKind::linear_multilevel: return "linear_multilevel";
    case DgpKind::binomial_equicorr: return "binomial_equicorr";
    case DgpKind::binomial_arma22: return "binomial_arma22";
    case DgpKind::longitudinal_intro: return "longitudinal_intro";
  }
  return "?";
}

DgpKind parse_dgp(const std::string& s) {
  if (s == "linear_multilevel") return DgpKind::linear_multilevel;
  if (s == "binomial_equicorr") return DgpKind::binomial_equicorr;
  if (s == "binomial_arma22") return DgpKind::binomial_arma22;
  if (s == "longitudinal_intro") return DgpKind::longitudinal_intro;
  throw ConfigError("unknown dgp '" + s + "'");
}

void DgpSpec::validate() const {
  if (clusters < 1) throw ConfigError("dgp needs at least one cluster");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (beta_true.size() != 1) throw ConfigError("simulated designs have a single coefficient");
}

std::string DgpSpec::label() const {
  std::ostringstream os;
  os << to_string(kind);
  if (kind == DgpKind::linear_multilevel) os << "(lambda=" << lambda << ")";
  return os.str();
}

GlmFamily DgpSpec::family() const {
  return kind == DgpKind::binomial_equicorr || kind == DgpKind::binomial_arma22
             ? GlmFamily::binomial()
             : GlmFamily::gaussian();
}

MatrixXd linear_multilevel_cov(double lambda, const VectorXd& x) {
  const VectorXd s = (1.0 + lambda * (-2.0 * x.array().square()).exp()).matrix();
  return s.asDiagonal() * equicorrelation(static_cast<std::size_t>(x.size()), 0.5) *
         s.asDiagonal();
}

ClusterDataset gen_linear_multilevel(double lambda, std::size_t clusters, Rng& rng,
                                     double beta) {
  constexpr Eigen::Index n = 4;
  static const MatrixXd chol = equicorrelation(n, 0.5).llt().matrixL();
  std::vector<ClusterData> out;
  out.reserve(clusters);
  for (std::size_t i = 0; i < clusters; ++i) {
    const VectorXd x = rng.normals(n);
    const VectorXd s = (1.0 + lambda * (-2.0 * x.array().square()).exp()).matrix();
    const VectorXd z = rng.normals(n);
    VectorXd y = beta * x + s.cwiseProduct(chol * z);
    out.emplace_back(std::move(y), MatrixXd(x));
  }
  return ClusterDataset(std::move(out));
}

MatrixXd copula_latent_correlation(LatentKind latent, std::size_t n) {
  if (latent == LatentKind::equicorr) return equicorrelation(n, 0.6);
  VectorXd phi(2), theta(2);
  phi << 0.4, 0.5;
  theta << -0.9, 0.4;
  const VectorXd acov = arma_autocovariance(phi, theta, 1.0, n - 1);
  const auto m = static_cast<Eigen::Index>(n);
  MatrixXd c(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index k = 0; k < m; ++k) c(j, k) = acov(std::abs(j - k)) / acov(0);
  return c;
}

ClusterDataset gen_binomial_copula(LatentKind latent, std::size_t clusters, Rng& rng,
                                   double beta) {
  constexpr std::size_t n = 20;
  const MvnSampler x_draw(VectorXd::Zero(n), equicorrelation(n, 0.5));
  const MvnSampler z_draw(VectorXd::Zero(n), copula_latent_correlation(latent, n));
  std::vector<ClusterData> out;
  out.reserve(clusters);
  for (std::size_t i = 0; i < clusters; ++i) {
    const VectorXd x = x_draw.draw(rng);
    const VectorXd z = z_draw.draw(rng);
    VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < y.size(); ++j)
      y(j) = std_normal_cdf(z(j)) >= 1.0 - expit(x(j) * beta) ? 1.0 : 0.0;
    out.emplace_back(std::move(y), MatrixXd(x));
  }
  return ClusterDataset(std::move(out));
}

MatrixXd longitudinal_omega(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  MatrixXd o(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index k = 0; k < m; ++k) {
      if (j == k) {
        o(j, k) = 1.0;
        continue;
      }
      const double d = static_cast<double>(std::abs(j - k));
      o(j, k) = std::exp(-0.5 * std::pow(d, 0.25)) + 0.25 * std::cos(d) * std::exp(-d / 20.0);
    }
  return o;
}

ClusterDataset gen_longitudinal_intro(std::size_t clusters, Rng& rng, double beta) {
  constexpr std::size_t n = 50;
  static const MatrixXd omega = [] {
    MatrixXd o = longitudinal_omega(n);
    if (o.llt().info() != Eigen::Success)
      throw NumericalError("longitudinal error covariance is not positive definite");
    return o;
  }();
  MatrixXd x_cov = MatrixXd::Constant(n, n, 0.9);
  x_cov.diagonal().setOnes();
  const MvnSampler x_draw(VectorXd::Zero(n), x_cov);
  const MvnSampler e_draw(VectorXd::Zero(n), omega);
  std::vector<ClusterData> out;
  out.reserve(clusters);
  for (std::size_t i = 0; i < clusters; ++i) {
    const VectorXd x = x_draw.draw(rng);
    VectorXd y = beta * x + e_draw.draw(rng);
    out.emplace_back(std::move(y), MatrixXd(x));
  }
  return ClusterDataset(std::move(out));
}

ClusterDataset generate(const DgpSpec& dgp, Rng& rng) {
  dgp.validate();
  const double b = dgp.beta_true(0);
  switch (dgp.kind) {
    case DgpKind::linear_multilevel:
      return gen_linear_multilevel(dgp.lambda, dgp.clusters, rng, b);
    case DgpKind::binomial_equicorr:
      return gen_binomial_copula(LatentKind::equicorr, dgp.clusters, rng, b);
    case DgpKind::binomial_arma22:
      return gen_binomial_copula(LatentKind::arma22, dgp.clusters, rng, b);
    case DgpKind::longitudinal_intro: return gen_longitudinal_intro(dgp.clusters, rng, b);
  }
  throw ConfigError("unknown dgp");
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::pair<double, double> MseReport::paired_difference(std::size_t dgp, std::size_t a,
                                                       std::size_t b) const {
  const auto& ea = sq_errors.at(dgp).at(a);
  const auto& eb = sq_errors.at(dgp).at(b);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < ea.size(); ++r) {
    if (std::isnan(ea[r]) || std::isnan(eb[r])) continue;
    const double d = ea[r] - eb[r];
    sum += d;
    sum2 += d * d;
    ++n;
  }
  if (n < 2) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = sum / static_cast<double>(n);
  const double var = (sum2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
  return {mean, std::sqrt(std::max(var, 0.0) / static_cast<double>(n))};
}

std::size_t MseReport::method_index(const std::string& name) const {
  for (std::size_t m = 0; m < methods.size(); ++m)
    if (methods[m] == name) return m;
  throw ConfigError("no method named '" + name + "' in the report");
}

std::string MseReport::to_tsv() const {
  std::ostringstream os;
  os << "dgp\tmethod\tI\treps\tmse_ratio\tmc_se\tmse\tfailures\n";
  for (const auto& r : rows)
    os << r.dgp << '\t' << r.method << '\t' << r.clusters << '\t' << r.reps << '\t'
       << format_number(r.mse_ratio) << '\t' << format_number(r.mc_se) << '\t'
       << format_number(r.mse) << '\t' << r.failures << '\n';
  return os.str();
}

MseReport run_mse_experiment(const std::vector<DgpSpec>& dgps, std::vector<MethodSpec> methods,
                             const ExperimentSettings& settings) {
  if (settings.replications < 2) throw ConfigError("replications must be >= 2");
  if (dgps.empty()) throw ConfigError("experiment needs at least one dgp");
  std::size_t base = methods.size();
  for (std::size_t m = 0; m < methods.size(); ++m)
    if (methods[m].objective.kind == ObjectiveKind::none) {
      base = m;
      break;
    }
  if (base == methods.size()) {
    methods.insert(methods.begin(), MethodSpec{"unweighted", DispersionObjective::none(),
                                               CovarianceStructure::independence()});
    base = 0;
  }

  MseReport report;
  report.dgps = dgps;
  for (const auto& m : methods) report.methods.push_back(m.name);
  const std::size_t reps = settings.replications;

  for (std::size_t d = 0; d < dgps.size(); ++d) {
    const DgpSpec& dgp = dgps[d];
    dgp.validate();
    const GlmFamily family = dgp.family();
    const VectorXd c = settings.contrast.size() ? settings.contrast
                                                : VectorXd::Unit(dgp.beta_true.size(), 0);
    std::vector<std::vector<double>> errs(methods.size(),
                                          std::vector<double>(reps, std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::uint64_t> digests(reps, 0);

    for_each_index(settings.exec, reps, [&](std::size_t r) {
      Rng rng(splitmix64(settings.root_seed ^ (0x9e37ULL * (d + 1))), r);
      const ClusterDataset data = generate(dgp, rng);
      digests[r] = data.digest();
      OptimizerSettings opt = settings.optimizer;
      opt.exec = Exec::serial;
      opt.seed = splitmix64(settings.root_seed + r);
      for (std::size_t m = 0; m < methods.size(); ++m) {
        try {
          DispersionObjective obj = methods[m].objective;
          if (obj.is_sandwich() && obj.target.size() == 0) obj.target = c;
          const SandregFit fit =
              minimize_dispersion(data, family, methods[m].structure, obj, opt);
          const double e = c.dot(fit.beta_hat - dgp.beta_true);
          errs[m][r] = e * e;
        } catch (const Error&) {
          // counted below
        }
      }
      if (data.digest() != digests[r]) throw NumericalError("dataset changed during fitting");
    });

    for (std::size_t m = 0; m < methods.size(); ++m) {
      MseRow row;
      row.dgp = dgp.label();
      row.method = methods[m].name;
      row.clusters = dgp.clusters;
      double sa = 0.0, sb = 0.0;
      std::size_t n = 0;
      for (std::size_t r = 0; r < reps; ++r) {
        if (std::isnan(errs[m][r])) ++row.failures;
        if (std::isnan(errs[m][r]) || std::isnan(errs[base][r])) continue;
        sa += errs[m][r];
        sb += errs[base][r];
        ++n;
      }
      report.attempts += reps;
      report.failures += row.failures;
      row.reps = n;
      if (n >= 2 && sb > 0.0) {
        row.mse = sa / static_cast<double>(n);
        const double mb = sb / static_cast<double>(n);
        row.mse_ratio = row.mse / mb;
        double ss = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
          if (std::isnan(errs[m][r]) || std::isnan(errs[base][r])) continue;
          const double v = errs[m][r] - row.mse_ratio * errs[base][r];
          ss += v * v;
        }
        row.mc_se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) / mb;
      } else {
        row.mse = std::numeric_limits<double>::quiet_NaN();
        row.mse_ratio = std::numeric_limits<double>::quiet_NaN();
        row.mc_se = std::numeric_limits<double>::quiet_NaN();
      }
      report.rows.push_back(row);
    }
    report.sq_errors.push_back(std::move(errs));
    report.digests.push_back(std::move(digests));
  }
  report.aborted = report.failure_rate() > settings.max_failure_rate;
  return report;
}

}  // namespace sandreg
