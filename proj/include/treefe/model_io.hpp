#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treefe/baselines.hpp"
#include "treefe/trees.hpp"

namespace treefe {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

// Floating-point values are stored as shortest round-trip decimal strings so
// documents reproduce coefficients bit-exactly.
inline json num(double v) { return json(format_double(v)); }

inline json num_array(const Eigen::VectorXd& v) {
  json a = json::array();
  for (long i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw LoadError("model document: missing field at " + path + "/" + key);
  return *it;
}

inline double get_num(const json& j, const std::string& path) {
  if (j.is_string()) return parse_double(j.get<std::string>(), path);
  if (j.is_number()) return j.get<double>();
  throw LoadError("model document: expected number at " + path);
}

inline Eigen::VectorXd get_num_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw LoadError("model document: expected array at " + path);
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    v[static_cast<long>(i)] = get_num(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline long get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw LoadError("model document: expected integer at " + path);
  return j.get<long>();
}

inline std::vector<std::string> get_strings(const json& j, const std::string& path) {
  if (!j.is_array()) throw LoadError("model document: expected array at " + path);
  std::vector<std::string> out;
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string())
      throw LoadError("model document: expected string at " + path + "[" + std::to_string(i) + "]");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

inline json config_to_json(const FitConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["max_splits"] = c.max_splits;
  j["min_bucket"] = c.min_bucket;
  j["max_depth"] = c.max_depth;
  j["folds"] = c.folds;
  j["one_se"] = c.one_se;
  j["seed"] = c.seed;
  return j;
}

inline FitConfig config_from_json(const json& j, const std::string& path) {
  FitConfig c;
  c.kind = model_kind_from_string(field(j, "kind", path).get<std::string>());
  c.max_splits = static_cast<int>(get_int(field(j, "max_splits", path), path + "/max_splits"));
  c.min_bucket = static_cast<int>(get_int(field(j, "min_bucket", path), path + "/min_bucket"));
  c.max_depth = static_cast<int>(get_int(field(j, "max_depth", path), path + "/max_depth"));
  c.folds = static_cast<int>(get_int(field(j, "folds", path), path + "/folds"));
  c.one_se = field(j, "one_se", path).get<bool>();
  c.seed = field(j, "seed", path).get<std::uint64_t>();
  return c;
}

}  // namespace detail

inline nlohmann::json model_to_json(const TreeModel& m) {
  using detail::num;
  using detail::num_array;
  if (!m.adjusted()) throw Error("model must carry adjusted coefficients before serialization");
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["model_kind"] = to_string(m.kind);
  j["family"] = "gaussian_identity";
  j["outcome"] = m.outcome_name;
  j["unit_column"] = m.unit_column;
  j["covariates"] = m.covariate_names;
  j["unit_labels"] = m.unit_labels;

  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : m.cov_tree.nodes()) {
    nlohmann::json n;
    n["depth"] = nd.depth;
    if (nd.is_leaf()) {
      n["leaf"] = true;
    } else {
      n["var"] = nd.var;
      n["threshold"] = num(nd.threshold);
      n["left"] = nd.left;
      n["right"] = nd.right;
    }
    nodes.push_back(n);
  }
  j["cov_tree"] = nodes;
  j["unit_tree"] = {{"ordering", m.unit_tree.ordering}, {"cuts", m.unit_tree.cuts}};

  nlohmann::json co;
  co["beta0"] = num_array(m.beta0);
  co["gamma"] = num_array(m.gamma);
  co["beta0_adj"] = num_array(m.beta0_adj);
  co["gamma_adj"] = num_array(m.gamma_adj);
  co["gamma_bar"] = num(m.gamma_bar);
  co["sigma2"] = num(m.sigma2);
  if (m.beta_linear.size() > 0) {
    co["beta_linear"] = num_array(m.beta_linear);
    co["linear_active"] = m.linear_active;
  }
  j["coefficients"] = co;
  j["n_train"] = m.n_train;
  if (m.config) j["config"] = detail::config_to_json(*m.config);
  if (m.cv) {
    nlohmann::json cv;
    cv["mean_loglik"] = detail::num_array(
        Eigen::Map<const Eigen::VectorXd>(m.cv->mean_loglik.data(), m.cv->mean_loglik.size()));
    cv["se"] = detail::num_array(
        Eigen::Map<const Eigen::VectorXd>(m.cv->se.data(), m.cv->se.size()));
    cv["s_max_ll"] = m.cv->s_max_ll;
    cv["s_1se"] = m.cv->s_1se;
    cv["skipped_rows"] = m.cv->skipped_rows;
    j["cv_curve"] = cv;
  }
  return j;
}

inline nlohmann::json model_to_json(const LmmFit& m) {
  using detail::num;
  using detail::num_array;
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["model_kind"] = "lmm";
  j["family"] = "gaussian_identity";
  j["outcome"] = m.outcome_name;
  j["unit_column"] = m.unit_column;
  j["covariates"] = m.covariate_names;
  j["unit_labels"] = m.unit_labels;
  nlohmann::json co;
  co["beta0"] = num(m.beta0);
  co["beta"] = num_array(m.beta);
  co["sigma2_b"] = num(m.sigma2_b);
  co["sigma2_eps"] = num(m.sigma2_eps);
  co["blup"] = num_array(m.blup);
  co["loglik"] = num(m.loglik);
  j["coefficients"] = co;
  j["boundary_flag"] = m.boundary_flag;
  return j;
}

inline nlohmann::json model_to_json(const AnyModel& m) {
  return m.lmm ? model_to_json(*m.lmm) : model_to_json(*m.tree);
}

inline AnyModel model_from_json(const nlohmann::json& j) {
  using detail::field;
  using detail::get_int;
  using detail::get_num;
  using detail::get_num_array;
  using detail::get_strings;
  const std::string root = "$";
  const long version = get_int(field(j, "format_version", root), root + "/format_version");
  if (version != kModelFormatVersion)
    throw LoadError("model document: unsupported format_version " + std::to_string(version));
  const ModelKind kind =
      model_kind_from_string(field(j, "model_kind", root).get<std::string>());

  AnyModel out;
  out.kind = kind;
  if (kind == ModelKind::lmm) {
    LmmFit m;
    m.outcome_name = field(j, "outcome", root).get<std::string>();
    m.unit_column = field(j, "unit_column", root).get<std::string>();
    m.covariate_names = get_strings(field(j, "covariates", root), root + "/covariates");
    m.unit_labels = get_strings(field(j, "unit_labels", root), root + "/unit_labels");
    const auto& co = field(j, "coefficients", root);
    const std::string cp = root + "/coefficients";
    m.beta0 = get_num(field(co, "beta0", cp), cp + "/beta0");
    m.beta = get_num_array(field(co, "beta", cp), cp + "/beta");
    m.sigma2_b = get_num(field(co, "sigma2_b", cp), cp + "/sigma2_b");
    m.sigma2_eps = get_num(field(co, "sigma2_eps", cp), cp + "/sigma2_eps");
    m.blup = get_num_array(field(co, "blup", cp), cp + "/blup");
    m.loglik = get_num(field(co, "loglik", cp), cp + "/loglik");
    m.boundary_flag = field(j, "boundary_flag", root).get<bool>();
    if (m.beta.size() != static_cast<long>(m.covariate_names.size()))
      throw LoadError("model document: beta length disagrees with covariates at " + cp);
    if (m.blup.size() != static_cast<long>(m.unit_labels.size()))
      throw LoadError("model document: blup length disagrees with unit_labels at " + cp);
    out.lmm = std::move(m);
    return out;
  }

  TreeModel m;
  m.kind = kind;
  m.outcome_name = field(j, "outcome", root).get<std::string>();
  m.unit_column = field(j, "unit_column", root).get<std::string>();
  m.covariate_names = get_strings(field(j, "covariates", root), root + "/covariates");
  m.unit_labels = get_strings(field(j, "unit_labels", root), root + "/unit_labels");

  const auto& nodes = field(j, "cov_tree", root);
  if (!nodes.is_array() || nodes.empty())
    throw LoadError("model document: expected non-empty array at $/cov_tree");
  std::vector<CovNode> nv;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const std::string np = root + "/cov_tree[" + std::to_string(i) + "]";
    const auto& nj = nodes[i];
    CovNode nd;
    nd.depth = static_cast<int>(get_int(field(nj, "depth", np), np + "/depth"));
    if (!nj.contains("leaf")) {
      nd.var = static_cast<int>(get_int(field(nj, "var", np), np + "/var"));
      nd.threshold = get_num(field(nj, "threshold", np), np + "/threshold");
      nd.left = static_cast<int>(get_int(field(nj, "left", np), np + "/left"));
      nd.right = static_cast<int>(get_int(field(nj, "right", np), np + "/right"));
    }
    nv.push_back(nd);
  }
  try {
    m.cov_tree = CovTree::from_nodes(std::move(nv));
  } catch (const LoadError& e) {
    throw LoadError("model document: " + std::string(e.what()) + " at $/cov_tree");
  }

  const auto& ut = field(j, "unit_tree", root);
  m.unit_tree.ordering = field(ut, "ordering", "$/unit_tree").get<std::vector<int>>();
  m.unit_tree.cuts = field(ut, "cuts", "$/unit_tree").get<std::vector<int>>();
  try {
    m.unit_tree.validate();
  } catch (const LoadError& e) {
    throw LoadError("model document: " + std::string(e.what()) + " at $/unit_tree");
  }
  if (m.unit_tree.n_units() != static_cast<int>(m.unit_labels.size()))
    throw LoadError("model document: unit_tree ordering length disagrees with unit_labels at $/unit_tree");

  const auto& co = field(j, "coefficients", root);
  const std::string cp = root + "/coefficients";
  m.beta0 = get_num_array(field(co, "beta0", cp), cp + "/beta0");
  m.gamma = get_num_array(field(co, "gamma", cp), cp + "/gamma");
  m.beta0_adj = get_num_array(field(co, "beta0_adj", cp), cp + "/beta0_adj");
  m.gamma_adj = get_num_array(field(co, "gamma_adj", cp), cp + "/gamma_adj");
  m.gamma_bar = get_num(field(co, "gamma_bar", cp), cp + "/gamma_bar");
  m.sigma2 = get_num(field(co, "sigma2", cp), cp + "/sigma2");
  if (co.contains("beta_linear")) {
    m.beta_linear = get_num_array(co["beta_linear"], cp + "/beta_linear");
    m.linear_active = co.contains("linear_active")
                          ? field(co, "linear_active", cp).get<std::vector<std::uint8_t>>()
                          : std::vector<std::uint8_t>(m.beta_linear.size(), 1);
  }
  if (m.beta0.size() != m.unit_tree.n_clusters())
    throw LoadError("model document: beta0 length disagrees with unit tree at " + cp + "/beta0");
  if (m.gamma.size() != m.cov_tree.n_leaves())
    throw LoadError("model document: gamma length disagrees with covariate tree at " + cp + "/gamma");
  m.n_train = get_int(field(j, "n_train", root), root + "/n_train");
  if (j.contains("config")) m.config = detail::config_from_json(j["config"], "$/config");
  if (j.contains("cv_curve")) {
    const auto& cvj = j["cv_curve"];
    const std::string vp = "$/cv_curve";
    CvCurve cv;
    const Eigen::VectorXd mean = get_num_array(field(cvj, "mean_loglik", vp), vp + "/mean_loglik");
    const Eigen::VectorXd se = get_num_array(field(cvj, "se", vp), vp + "/se");
    cv.mean_loglik.assign(mean.data(), mean.data() + mean.size());
    cv.se.assign(se.data(), se.data() + se.size());
    cv.s_max_ll = static_cast<int>(get_int(field(cvj, "s_max_ll", vp), vp + "/s_max_ll"));
    cv.s_1se = static_cast<int>(get_int(field(cvj, "s_1se", vp), vp + "/s_1se"));
    cv.skipped_rows = get_int(field(cvj, "skipped_rows", vp), vp + "/skipped_rows");
    m.cv = cv;
  }
  out.tree = std::move(m);
  return out;
}

inline void write_model(const AnyModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << model_to_json(m).dump(2) << '\n';
}

inline AnyModel read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("model document: invalid JSON in " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace treefe
