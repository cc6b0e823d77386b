#include "sandreg/config.hpp"

#include "sandreg/error.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace sandreg {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("key '" + key + "' in " + where + " has the wrong type: " + e.what());
  }
}

template <class T>
void maybe(const json& obj, const std::string& key, T& out, const std::string& where) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

VectorXd vector_of(const json& obj, const std::string& key, const std::string& where) {
  const auto v = get<std::vector<double>>(obj, key, where);
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

GlmFamily family_of(const std::string& name) {
  if (name == "gaussian") return GlmFamily::gaussian();
  if (name == "binomial") return GlmFamily::binomial();
  if (name == "poisson") return GlmFamily::poisson();
  throw ConfigError("unknown family '" + name + "'");
}

ScaleMode scale_of(const std::string& s) {
  if (s == "unit") return ScaleMode::unit;
  if (s == "free") return ScaleMode::free;
  throw ConfigError("scale must be 'unit' or 'free', got '" + s + "'");
}

CovarianceStructure structure_of(const json& obj, const std::string& key, ScaleMode default_scale,
                                 const std::string& where) {
  ScaleMode scale = default_scale;
  if (obj.contains("scale")) scale = scale_of(get<std::string>(obj, "scale", where));
  CovarianceStructure s = parse_structure(get<std::string>(obj, key, where), scale);
  maybe(obj, "re_columns", s.re_columns, where);
  maybe(obj, "re_intercept", s.re_intercept, where);
  maybe(obj, "re_degree", s.re_degree, where);
  maybe(obj, "piece_column", s.piece_column, where);
  return s;
}

}  // namespace

std::string hex_digest(std::uint64_t d) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << d;
  return os.str();
}

VectorXd RunConfig::resolve_contrast(const std::vector<std::string>& covariates) const {
  if (!contrast_column.empty()) {
    for (std::size_t k = 0; k < covariates.size(); ++k)
      if (covariates[k] == contrast_column)
        return VectorXd::Unit(static_cast<Eigen::Index>(covariates.size()),
                              static_cast<Eigen::Index>(k));
    throw ConfigError("contrast_column '" + contrast_column + "' is not a covariate");
  }
  if (contrast.size() == 0) {
    if (covariates.empty()) throw ConfigError("no covariates to build a contrast from");
    return VectorXd::Unit(static_cast<Eigen::Index>(covariates.size()), 0);
  }
  if (static_cast<std::size_t>(contrast.size()) != covariates.size())
    throw ConfigError("contrast has " + std::to_string(contrast.size()) + " entries for " +
                      std::to_string(covariates.size()) + " covariates");
  return contrast;
}

RunConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const std::string top = "config";
  reject_unknown(doc,
                 {"family", "link", "variance", "structure", "scale", "re_columns",
                  "re_intercept", "re_degree", "piece_column", "candidates", "objective",
                  "compare", "contrast", "contrast_column", "predict_at", "restarts",
                  "init_scale", "tol", "xtol", "max_evals", "seed", "outer_rounds", "outer_tol",
                  "jackknife_steps", "threads", "cluster_column", "response_column",
                  "covariate_columns", "dgps", "methods", "replications", "max_failure_rate",
                  "tau", "sigma2", "c_tilde", "deltas", "eta"},
                 top);
  RunConfig cfg;
  if (doc.contains("family")) cfg.family = family_of(get<std::string>(doc, "family", top));
  if (doc.contains("link")) cfg.family.link = parse_link(get<std::string>(doc, "link", top));
  if (doc.contains("variance"))
    cfg.family.variance = parse_variance(get<std::string>(doc, "variance", top));
  const ScaleMode default_scale =
      cfg.family.variance == VarianceFn::constant ? ScaleMode::free : ScaleMode::unit;

  json structure_obj = json::object();
  for (const char* k : {"structure", "scale", "re_columns", "re_intercept", "re_degree",
                        "piece_column"})
    if (doc.contains(k)) structure_obj[k] = doc[k];
  if (!structure_obj.contains("structure")) structure_obj["structure"] = "exchangeable";
  cfg.structure = structure_of(structure_obj, "structure", default_scale, top);

  if (doc.contains("candidates")) {
    const json& list = doc["candidates"];
    if (!list.is_array()) throw ConfigError("candidates must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string where = "candidates[" + std::to_string(k) + "]";
      reject_unknown(list[k], {"label", "structure", "scale", "re_columns", "re_intercept",
                               "re_degree", "piece_column", "warm_start"},
                     where);
      ModelCandidate m;
      m.structure = structure_of(list[k], "structure", default_scale, where);
      m.label = list[k].contains("label") ? get<std::string>(list[k], "label", where)
                                          : m.structure.label();
      if (list[k].contains("warm_start")) m.warm_start = vector_of(list[k], "warm_start", where);
      cfg.candidates.push_back(std::move(m));
    }
  }

  if (doc.contains("objective"))
    cfg.objective = parse_objective(get<std::string>(doc, "objective", top));
  if (doc.contains("compare"))
    for (const auto& name : get<std::vector<std::string>>(doc, "compare", top))
      cfg.compare.push_back(parse_objective(name));
  if (doc.contains("contrast")) cfg.contrast = vector_of(doc, "contrast", top);
  maybe(doc, "contrast_column", cfg.contrast_column, top);
  if (cfg.contrast.size() && !cfg.contrast_column.empty())
    throw ConfigError("give either contrast or contrast_column, not both");
  if (cfg.contrast.size() && cfg.contrast.isZero(0.0)) throw ConfigError("contrast must be nonzero");
  if (doc.contains("predict_at")) cfg.predict_at = vector_of(doc, "predict_at", top);

  auto& opt = cfg.optimizer;
  maybe(doc, "restarts", opt.restarts, top);
  maybe(doc, "init_scale", opt.init_scale, top);
  maybe(doc, "tol", opt.tol, top);
  maybe(doc, "xtol", opt.xtol, top);
  maybe(doc, "max_evals", opt.max_evals, top);
  maybe(doc, "seed", opt.seed, top);
  maybe(doc, "outer_rounds", opt.outer_rounds, top);
  maybe(doc, "outer_tol", opt.outer_tol, top);
  opt.validate();
  maybe(doc, "jackknife_steps", cfg.jackknife_steps, top);
  if (cfg.jackknife_steps < 0) throw ConfigError("jackknife_steps must be >= 0");
  maybe(doc, "threads", cfg.threads, top);
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");

  maybe(doc, "cluster_column", cfg.layout.cluster, top);
  maybe(doc, "response_column", cfg.layout.response, top);
  maybe(doc, "covariate_columns", cfg.layout.covariates, top);
  if (!cfg.layout.covariates.empty()) {
    const std::size_t p = cfg.layout.covariates.size();
    if (cfg.contrast.size() && static_cast<std::size_t>(cfg.contrast.size()) != p)
      throw ConfigError("contrast length does not match covariate_columns");
    if (cfg.predict_at.size() && static_cast<std::size_t>(cfg.predict_at.size()) != p)
      throw ConfigError("predict_at length does not match covariate_columns");
    cfg.structure.validate(p);
    for (const auto& m : cfg.candidates) m.structure.validate(p);
  }

  if (doc.contains("dgps")) {
    const json& list = doc["dgps"];
    if (!list.is_array()) throw ConfigError("dgps must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string where = "dgps[" + std::to_string(k) + "]";
      reject_unknown(list[k], {"kind", "lambda", "clusters", "beta"}, where);
      DgpSpec d;
      d.kind = parse_dgp(get<std::string>(list[k], "kind", where));
      maybe(list[k], "lambda", d.lambda, where);
      maybe(list[k], "clusters", d.clusters, where);
      if (list[k].contains("beta")) d.beta_true = VectorXd::Constant(1, get<double>(list[k], "beta", where));
      d.validate();
      cfg.dgps.push_back(d);
    }
  }
  if (doc.contains("methods")) {
    const json& list = doc["methods"];
    if (!list.is_array()) throw ConfigError("methods must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string where = "methods[" + std::to_string(k) + "]";
      reject_unknown(list[k], {"name", "objective", "structure", "scale", "re_columns",
                               "re_intercept", "re_degree", "piece_column"},
                     where);
      MethodSpec m;
      m.objective.kind = parse_objective(get<std::string>(list[k], "objective", where));
      m.structure = list[k].contains("structure")
                        ? structure_of(list[k], "structure", ScaleMode::free, where)
                        : CovarianceStructure::independence();
      m.name = list[k].contains("name") ? get<std::string>(list[k], "name", where)
                                        : to_string(m.objective.kind) + ":" + m.structure.label();
      cfg.methods.push_back(std::move(m));
    }
  }
  maybe(doc, "replications", cfg.replications, top);
  maybe(doc, "max_failure_rate", cfg.max_failure_rate, top);

  maybe(doc, "tau", cfg.counterexample.tau, top);
  maybe(doc, "sigma2", cfg.counterexample.sigma2, top);
  maybe(doc, "c_tilde", cfg.counterexample.c_tilde, top);
  maybe(doc, "deltas", cfg.deltas, top);
  if (doc.contains("eta")) cfg.eta = get<double>(doc, "eta", top);
  cfg.counterexample.validate();
  for (double d : cfg.deltas)
    if (!(d > 0.0)) throw ConfigError("deltas must be positive");

  const std::string canonical = doc.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  cfg.digest = h;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace sandreg
