#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "treefe/dataset.hpp"
#include "treefe/linfit.hpp"

namespace treefe {

enum class ModelKind { ttsc, ltsc, ltscb, nullmodel, lmm };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ttsc: return "ttsc";
    case ModelKind::ltsc: return "ltsc";
    case ModelKind::ltscb: return "ltscb";
    case ModelKind::nullmodel: return "null";
    case ModelKind::lmm: return "lmm";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ttsc") return ModelKind::ttsc;
  if (s == "ltsc") return ModelKind::ltsc;
  if (s == "ltscb") return ModelKind::ltscb;
  if (s == "null") return ModelKind::nullmodel;
  if (s == "lmm") return ModelKind::lmm;
  throw ConfigError("unknown model kind '" + s + "' (allowed: ttsc, ltsc, ltscb, null, lmm)");
}

struct FitConfig {
  int max_splits = 20;   // S_max, joint over both trees
  int min_bucket = 1;    // n_mb, observations per terminal node of either tree
  int max_depth = 0;     // d_max per tree; 0 = unlimited
  int folds = 10;        // k for cross-validation
  bool one_se = true;
  std::uint64_t seed = 1;
  ModelKind kind = ModelKind::ttsc;

  void validate() const {
    if (max_splits < 0) throw ConfigError("max-splits must be >= 0");
    if (min_bucket < 1) throw ConfigError("min-bucket must be >= 1");
    if (max_depth < 0) throw ConfigError("max-depth must be >= 0");
    if (folds < 2) throw ConfigError("folds must be >= 2");
  }
};

// Binary covariate tree. Node 0 is the root; leaves carry no payload, their
// identity is the position in left-to-right order. Left child holds
// {x_var <= threshold}.
struct CovNode {
  int var = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;

  bool is_leaf() const { return left < 0; }
};

class CovTree {
 public:
  CovTree() : nodes_(1) {}

  int size() const { return static_cast<int>(nodes_.size()); }
  const CovNode& node(int id) const { return nodes_[id]; }
  bool has_splits() const { return nodes_.size() > 1; }
  int n_splits() const { return (size() - 1) / 2; }
  int n_leaves() const { return n_splits() + 1; }

  // Leaf node ids in left-to-right order; a leaf's ordinal is its position
  // here. The right-most leaf (last ordinal) is the reference leaf.
  std::vector<int> leaf_nodes() const {
    std::vector<int> out;
    dfs_leaves(0, out);
    return out;
  }

  int max_depth() const {
    int m = 0;
    for (const auto& nd : nodes_) m = std::max(m, nd.depth);
    return m;
  }

  void split_leaf(int node_id, int var, double threshold) {
    if (!nodes_[node_id].is_leaf()) throw Error("split target is not a leaf");
    CovNode l, r;
    l.depth = r.depth = nodes_[node_id].depth + 1;
    nodes_[node_id].var = var;
    nodes_[node_id].threshold = threshold;
    nodes_[node_id].left = static_cast<int>(nodes_.size());
    nodes_.push_back(l);
    nodes_[node_id].right = static_cast<int>(nodes_.size());
    nodes_.push_back(r);
  }

  template <typename XRow>
  int leaf_node_for(const XRow& x) const {
    int id = 0;
    while (!nodes_[id].is_leaf())
      id = x[nodes_[id].var] <= nodes_[id].threshold ? nodes_[id].left : nodes_[id].right;
    return id;
  }

  // Per-row leaf ordinals for a whole covariate matrix.
  std::vector<int> assign_leaves(const Eigen::MatrixXd& X) const {
    std::vector<int> ord = leaf_ordinals();
    std::vector<int> out(X.rows());
    for (long i = 0; i < X.rows(); ++i) out[i] = ord[leaf_node_for(X.row(i))];
    return out;
  }

  std::vector<int> leaf_ordinals() const {
    std::vector<int> ord(nodes_.size(), -1);
    auto leaves = leaf_nodes();
    for (size_t m = 0; m < leaves.size(); ++m) ord[leaves[m]] = static_cast<int>(m);
    return ord;
  }

  // Conjunction of split conditions leading to each leaf, for summaries.
  std::vector<std::string> leaf_rules(const std::vector<std::string>& names) const {
    std::vector<std::string> out;
    std::string path;
    describe(0, path, names, out);
    return out;
  }

  // Raw node access for (de)serialization.
  const std::vector<CovNode>& nodes() const { return nodes_; }
  static CovTree from_nodes(std::vector<CovNode> nodes) {
    if (nodes.empty()) throw LoadError("covariate tree has no nodes");
    CovTree t;
    t.nodes_ = std::move(nodes);
    t.check();
    return t;
  }

 private:
  void dfs_leaves(int id, std::vector<int>& out) const {
    if (nodes_[id].is_leaf()) {
      out.push_back(id);
      return;
    }
    dfs_leaves(nodes_[id].left, out);
    dfs_leaves(nodes_[id].right, out);
  }

  void describe(int id, const std::string& path, const std::vector<std::string>& names,
                std::vector<std::string>& out) const {
    if (nodes_[id].is_leaf()) {
      out.push_back(path.empty() ? "(all)" : path);
      return;
    }
    const std::string var = names.empty() ? "x" + std::to_string(nodes_[id].var + 1)
                                          : names[nodes_[id].var];
    const std::string thr = format_double(nodes_[id].threshold);
    const std::string sep = path.empty() ? "" : " & ";
    describe(nodes_[id].left, path + sep + var + " <= " + thr, names, out);
    describe(nodes_[id].right, path + sep + var + " > " + thr, names, out);
  }

  void check() const {
    std::vector<int> seen(nodes_.size(), 0);
    check_node(0, 0, seen);
    for (int s : seen)
      if (s != 1) throw LoadError("covariate tree nodes are not a single rooted tree");
  }

  void check_node(int id, int depth, std::vector<int>& seen) const {
    if (id < 0 || id >= size()) throw LoadError("covariate tree child index out of range");
    if (++seen[id] > 1) throw LoadError("covariate tree has a node cycle");
    const auto& nd = nodes_[id];
    if (nd.depth != depth) throw LoadError("covariate tree depth field inconsistent");
    if (nd.is_leaf()) {
      if (nd.right >= 0) throw LoadError("covariate tree leaf with one child");
      return;
    }
    if (nd.var < 0) throw LoadError("covariate tree internal node without variable");
    check_node(nd.left, depth + 1, seen);
    check_node(nd.right, depth + 1, seen);
  }

  std::vector<CovNode> nodes_;
};

// Unit tree stored in its reduced form: a fixed ordering of the units
// (ascending outcome means) plus cut positions carving the ordering into
// contiguous clusters. Cluster c covers ordering positions
// [cuts[c-1], cuts[c]).
struct UnitTree {
  std::vector<int> ordering;  // position -> unit index
  std::vector<int> cuts;      // ascending, each in 1..n-1

  int n_units() const { return static_cast<int>(ordering.size()); }
  int n_clusters() const { return static_cast<int>(cuts.size()) + 1; }

  int cluster_of_pos(int pos) const {
    return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), pos) - cuts.begin());
  }

  // [start, end) span of cluster c in ordering positions.
  std::pair<int, int> cluster_span(int c) const {
    const int start = c == 0 ? 0 : cuts[c - 1];
    const int end = c == n_clusters() - 1 ? n_units() : cuts[c];
    return {start, end};
  }

  std::vector<int> positions() const {
    std::vector<int> pos(ordering.size());
    for (size_t t = 0; t < ordering.size(); ++t) pos[ordering[t]] = static_cast<int>(t);
    return pos;
  }

  void add_cut(int pos) {
    cuts.insert(std::upper_bound(cuts.begin(), cuts.end(), pos), pos);
  }

  void validate() const {
    const int n = n_units();
    if (n == 0) throw LoadError("unit tree has no units");
    std::vector<int> seen(n, 0);
    for (int u : ordering) {
      if (u < 0 || u >= n) throw LoadError("unit tree ordering entry out of range");
      ++seen[u];
    }
    for (int s : seen)
      if (s != 1) throw LoadError("unit tree ordering is not a permutation");
    int prev = 0;
    for (int c : cuts) {
      if (c < 1 || c >= n)
        throw LoadError("unit tree cut index " + std::to_string(c) + " out of range 1.." +
                        std::to_string(n - 1));
      if (c <= prev) throw LoadError("unit tree cuts not strictly increasing");
      prev = c;
    }
  }
};

// Cross-validation curve over the nested path; index = number of splits.
struct CvCurve {
  std::vector<double> mean_loglik;  // per-observation scale
  std::vector<double> se;
  int s_max_ll = 0;
  int s_1se = 0;
  long skipped_rows = 0;  // test rows whose unit was absent from training

  int size() const { return static_cast<int>(mean_loglik.size()); }
};

// Fitted model: covariate tree + unit tree (+ linear part for LTSC kinds)
// with raw and adjusted coefficients. Immutable once fitted.
struct TreeModel {
  ModelKind kind = ModelKind::ttsc;
  CovTree cov_tree;
  UnitTree unit_tree;
  Eigen::VectorXd beta0;        // C cluster intercepts
  Eigen::VectorXd gamma;        // M leaf effects, reference leaf fixed at 0
  Eigen::VectorXd beta_linear;  // p linear effects (ltsc/ltscb), else empty
  std::vector<std::uint8_t> linear_active;  // ltscb retain mask
  Eigen::VectorXd beta0_adj;    // β~ = β0 + γ̄
  Eigen::VectorXd gamma_adj;    // γ~ = γ - γ̄
  double gamma_bar = 0.0;
  double sigma2 = 0.0;
  long n_train = 0;
  std::vector<std::string> unit_labels;
  std::vector<std::string> covariate_names;
  std::string outcome_name = "y";
  std::string unit_column = "unit";
  std::optional<FitConfig> config;
  std::optional<CvCurve> cv;

  bool adjusted() const { return beta0_adj.size() == beta0.size(); }

  int unit_index_of(const std::string& label) const {
    for (size_t u = 0; u < unit_labels.size(); ++u)
      if (unit_labels[u] == label) return static_cast<int>(u);
    return -1;
  }

  int n_cov_splits() const { return cov_tree.n_splits(); }
  int n_clusters() const { return unit_tree.n_clusters(); }

  // Covariates used by the model: split variables, or retained linear terms.
  std::set<int> selected_covariates() const {
    std::set<int> out;
    if (kind == ModelKind::ttsc || kind == ModelKind::nullmodel) {
      for (const auto& nd : cov_tree.nodes())
        if (!nd.is_leaf()) out.insert(nd.var);
    } else {
      for (size_t k = 0; k < linear_active.size(); ++k)
        if (linear_active[k]) out.insert(static_cast<int>(k));
    }
    return out;
  }
};

struct Prediction {
  double value = 0.0;
  int leaf = 0;      // leaf ordinal, 0-based
  int cluster = 0;   // cluster id, 0-based
  bool fallback = false;
};

// tr0(i) + tr(x) (+ x'β for linear kinds). Unknown units (index -1) require
// allow_unseen; the fallback intercept is the cluster-share weighted mean of
// the cluster intercepts.
inline Prediction predict_row(const TreeModel& m, const Eigen::VectorXd& x,
                              int unit_index, bool allow_unseen = false) {
  Prediction p;
  const auto ord = m.cov_tree.leaf_ordinals();
  p.leaf = ord[m.cov_tree.leaf_node_for(x)];
  double intercept = 0.0;
  if (unit_index >= 0) {
    const auto pos = m.unit_tree.positions();
    p.cluster = m.unit_tree.cluster_of_pos(pos[unit_index]);
    intercept = m.beta0[p.cluster];
  } else {
    if (!allow_unseen)
      throw PredictError("unit not seen during fitting (enable the unseen-unit fallback to predict)");
    p.fallback = true;
    p.cluster = -1;
    const double n = static_cast<double>(m.unit_tree.n_units());
    for (int c = 0; c < m.unit_tree.n_clusters(); ++c) {
      auto [a, b] = m.unit_tree.cluster_span(c);
      intercept += (static_cast<double>(b - a) / n) * m.beta0[c];
    }
  }
  p.value = intercept + m.gamma[p.leaf];
  if (m.beta_linear.size() > 0) p.value += x.dot(m.beta_linear);
  return p;
}

// Builds design rows for an explicit row set against given trees. unit_map
// translates dataset unit indices into the trees' unit indices (identity if
// null); all mapped indices must be valid.
inline DesignMatrix encode_rows(const ClusteredDataset& d, const std::vector<int>& rows,
                                const CovTree& cov, const UnitTree& ut,
                                const std::vector<int>* unit_map = nullptr,
                                int ref_leaf = -1, bool with_linear = false) {
  const int C = ut.n_clusters();
  const int M = cov.n_leaves();
  if (ref_leaf < 0) ref_leaf = M - 1;
  const int p = with_linear ? d.n_covariates() : 0;
  const int q = C + (M - 1) + p;
  DesignMatrix Xd;
  Xd.X = Eigen::MatrixXd::Zero(static_cast<long>(rows.size()), q);
  Xd.cols.reserve(q);
  for (int c = 0; c < C; ++c)
    Xd.cols.push_back({C == 1 ? ColumnRole::intercept : ColumnRole::cluster, c});
  for (int m = 0; m < M; ++m)
    if (m != ref_leaf) Xd.cols.push_back({ColumnRole::leaf, m});
  for (int k = 0; k < p; ++k) Xd.cols.push_back({ColumnRole::linear, k});

  const auto pos = ut.positions();
  const auto ord = cov.leaf_ordinals();
  for (size_t r = 0; r < rows.size(); ++r) {
    const long row = rows[r];
    int u = d.unit[row];
    if (unit_map) u = (*unit_map)[u];
    if (u < 0 || u >= ut.n_units())
      throw EncodingError("row " + std::to_string(row + 1) + " has a unit unknown to the unit tree");
    const int c = ut.cluster_of_pos(pos[u]);
    Xd.X(static_cast<long>(r), c) = 1.0;
    const int m = ord[cov.leaf_node_for(d.X.row(row))];
    if (m != ref_leaf) {
      const int col = C + (m < ref_leaf ? m : m - 1);
      Xd.X(static_cast<long>(r), col) = 1.0;
    }
    for (int k = 0; k < p; ++k) Xd.X(static_cast<long>(r), C + M - 1 + k) = d.X(row, k);
  }
  return Xd;
}

// Full training design: C cluster indicators (a single global intercept when
// C == 1) followed by M-1 leaf indicators, omitting the reference leaf.
// Every leaf must contain at least one observation.
inline DesignMatrix encode_design(const ClusteredDataset& d, const CovTree& cov,
                                  const UnitTree& ut, int ref_leaf = -1,
                                  bool with_linear = false) {
  if (ut.n_units() != d.n_units())
    throw EncodingError("unit tree covers " + std::to_string(ut.n_units()) +
                        " units, dataset has " + std::to_string(d.n_units()));
  const auto leaf_of = cov.assign_leaves(d.X);
  std::vector<long> leaf_count(cov.n_leaves(), 0);
  for (int m : leaf_of) ++leaf_count[m];
  for (int m = 0; m < cov.n_leaves(); ++m)
    if (leaf_count[m] == 0)
      throw EncodingError("covariate-tree leaf " + std::to_string(m + 1) +
                          " contains no observations");
  std::vector<int> rows(d.n_rows());
  for (long i = 0; i < d.n_rows(); ++i) rows[i] = static_cast<int>(i);
  return encode_rows(d, rows, cov, ut, nullptr, ref_leaf, with_linear);
}

// Assembles a TreeModel from an OLS fit of an encode_design(...) matrix with
// the given reference leaf.
inline TreeModel model_from_fit(ModelKind kind, const CovTree& cov, const UnitTree& ut,
                                const FitResult& fit, const ClusteredDataset& d,
                                int ref_leaf = -1, bool with_linear = false) {
  const int C = ut.n_clusters();
  const int M = cov.n_leaves();
  if (ref_leaf < 0) ref_leaf = M - 1;
  TreeModel m;
  m.kind = kind;
  m.cov_tree = cov;
  m.unit_tree = ut;
  m.beta0 = fit.beta.head(C);
  m.gamma = Eigen::VectorXd::Zero(M);
  for (int j = 0; j < M - 1; ++j) {
    const int leaf = j < ref_leaf ? j : j + 1;
    m.gamma[leaf] = fit.beta[C + j];
  }
  if (with_linear) {
    m.beta_linear = fit.beta.tail(d.n_covariates());
    m.linear_active.assign(d.n_covariates(), 1);
  }
  m.sigma2 = fit.sigma2;
  m.n_train = fit.n_obs;
  m.unit_labels = d.unit_labels;
  for (const auto& meta : d.meta) m.covariate_names.push_back(meta.name);
  return m;
}

// Reconstructs the coefficient vector in encode_design column order (with the
// canonical reference leaf), for predictive log-likelihood evaluation.
inline FitResult to_fit_result(const TreeModel& m) {
  const int C = m.unit_tree.n_clusters();
  const int M = m.cov_tree.n_leaves();
  const int p = static_cast<int>(m.beta_linear.size());
  FitResult f;
  f.beta.resize(C + M - 1 + p);
  f.beta.head(C) = m.beta0;
  for (int j = 0; j < M - 1; ++j) f.beta[C + j] = m.gamma[j];
  if (p > 0) f.beta.tail(p) = m.beta_linear;
  f.q = C + M - 1 + p;
  f.n_obs = m.n_train;
  f.sigma2 = m.sigma2;
  f.rss = m.sigma2 * static_cast<double>(m.n_train);
  f.loglik = gaussian_loglik(f.rss, m.n_train, &f.sigma2_floored);
  return f;
}

// Unit-weighted grand mean: (1/n) Σ_i (1/n_i) Σ_j v_ij.
inline double unit_weighted_mean(const ClusteredDataset& d, const Eigen::VectorXd& per_row) {
  double total = 0.0;
  for (int u = 0; u < d.n_units(); ++u) {
    double s = 0.0;
    for (int r : d.unit_rows[u]) s += per_row[r];
    total += s / d.unit_size[u];
  }
  return total / d.n_units();
}

// Covariate-tree effect per observation, tr(x_ij), using raw coefficients.
inline Eigen::VectorXd tree_effect_rows(const TreeModel& m, const ClusteredDataset& d) {
  const auto leaf_of = m.cov_tree.assign_leaves(d.X);
  Eigen::VectorXd out(d.n_rows());
  for (long i = 0; i < d.n_rows(); ++i) out[i] = m.gamma[leaf_of[i]];
  return out;
}

// Reparametrization moving the unit-weighted mean tree effect γ̄ into the
// cluster intercepts: β~ = β0 + γ̄, γ~ = γ - γ̄. Leaves raw coefficients and
// all fitted values unchanged; idempotent.
inline TreeModel adjust_coefficients(TreeModel m, const ClusteredDataset& d) {
  m.gamma_bar = m.cov_tree.has_splits() ? unit_weighted_mean(d, tree_effect_rows(m, d)) : 0.0;
  m.beta0_adj = m.beta0.array() + m.gamma_bar;
  m.gamma_adj = m.gamma.array() - m.gamma_bar;
  return m;
}

}  // namespace treefe
