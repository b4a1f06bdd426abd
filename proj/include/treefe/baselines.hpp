#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

#include "treefe/dataset.hpp"
#include "treefe/linfit.hpp"
#include "treefe/pruning.hpp"
#include "treefe/stepwise.hpp"
#include "treefe/trees.hpp"

namespace treefe {

// Gaussian random-intercept model fitted by ML with the variance ratio
// ψ = σ²_b/σ²_ε profiled out; for fixed ψ the GLS solution has closed form.
struct LmmFit {
  double beta0 = 0.0;
  Eigen::VectorXd beta;      // covariate effects
  double sigma2_b = 0.0;
  double sigma2_eps = 0.0;
  Eigen::VectorXd blup;      // predicted random intercepts, per unit
  double loglik = 0.0;
  bool boundary_flag = false;  // optimizer hit the widened ψ upper bound
  std::vector<std::string> unit_labels;
  std::vector<std::string> covariate_names;
  std::string outcome_name = "y";
  std::string unit_column = "unit";
};

namespace detail {

// Profiled likelihood machinery over ψ. Weighted cross products are formed
// once; each ψ evaluation is O(n q² + q³).
class LmmProfile {
 public:
  explicit LmmProfile(const ClusteredDataset& d) : d_(d) {
    const long N = d.n_rows();
    const int p = d.n_covariates();
    q_ = p + 1;
    F_.resize(N, q_);
    F_.col(0).setOnes();
    if (p > 0) F_.rightCols(p) = d.X;
    A_ = F_.transpose() * F_;
    c_ = F_.transpose() * d.y;
    yy_ = d.y.squaredNorm();
    const int n = d.n_units();
    unit_sums_.resize(q_, n);
    ysums_.resize(n);
    for (int u = 0; u < n; ++u) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(q_);
      double ty = 0.0;
      for (int r : d.unit_rows[u]) {
        s += F_.row(r);
        ty += d.y[r];
      }
      unit_sums_.col(u) = s;
      ysums_[u] = ty;
    }
  }

  // Profiled log-likelihood at ψ; also returns the GLS coefficients and SSE.
  double eval(double psi, Eigen::VectorXd* beta_out = nullptr,
              double* sse_out = nullptr) const {
    const long N = d_.n_rows();
    Eigen::MatrixXd M = A_;
    Eigen::VectorXd b = c_;
    double ywy = yy_;
    double logdet = 0.0;
    for (int u = 0; u < d_.n_units(); ++u) {
      const double ni = static_cast<double>(d_.unit_size[u]);
      const double lam = psi / (1.0 + psi * ni);
      M.noalias() -= lam * unit_sums_.col(u) * unit_sums_.col(u).transpose();
      b -= lam * ysums_[u] * unit_sums_.col(u);
      ywy -= lam * ysums_[u] * ysums_[u];
      logdet += std::log1p(psi * ni);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success)
      throw Error("LMM weighted normal equations are singular");
    const Eigen::VectorXd beta = ldlt.solve(b);
    const double sse = ywy - beta.dot(b);
    if (beta_out) *beta_out = beta;
    if (sse_out) *sse_out = sse;
    const double s2 = std::max(sse / static_cast<double>(N), kSigma2Floor);
    return -0.5 * (static_cast<double>(N) * (std::log(2.0 * std::numbers::pi * s2) + 1.0) +
                   logdet);
  }

  int q() const { return q_; }
  const Eigen::MatrixXd& F() const { return F_; }

 private:
  const ClusteredDataset& d_;
  int q_ = 0;
  Eigen::MatrixXd F_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd c_;
  double yy_ = 0.0;
  Eigen::MatrixXd unit_sums_;
  Eigen::VectorXd ysums_;
};

inline double golden_max(const std::function<double(double)>& f, double lo, double hi,
                         double rel_tol) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > rel_tol * std::max(1.0, std::abs(a) + std::abs(b))) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    }
  }
  return f1 > f2 ? x1 : x2;
}

}  // namespace detail

inline LmmFit fit_lmm(const ClusteredDataset& d) {
  if (d.n_units() < 2) throw Error("LMM requires at least 2 units");
  detail::LmmProfile prof(d);
  auto ll = [&](double psi) { return prof.eval(psi); };

  double psi_hi = 1e4;
  bool boundary = false;
  double psi_hat = 0.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> grid{0.0};
    const int G = 40;
    for (int g = 0; g <= G; ++g)
      grid.push_back(1e-4 * std::pow(psi_hi / 1e-4, static_cast<double>(g) / G));
    size_t best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (size_t g = 0; g < grid.size(); ++g) {
      const double v = ll(grid[g]);
      if (v > best_ll) {
        best_ll = v;
        best = g;
      }
    }
    const double lo = best == 0 ? 0.0 : grid[best - 1];
    const double hi = best + 1 < grid.size() ? grid[best + 1] : grid[best];
    psi_hat = detail::golden_max(ll, lo, hi, 1e-8);
    if (ll(0.0) >= ll(psi_hat)) psi_hat = 0.0;
    if (best + 1 == grid.size()) {
      if (attempt == 0) {
        psi_hi = 1e8;  // widen once
        continue;
      }
      boundary = true;
    }
    break;
  }

  LmmFit fit;
  Eigen::VectorXd beta;
  double sse = 0.0;
  fit.loglik = prof.eval(psi_hat, &beta, &sse);
  fit.sigma2_eps = sse / static_cast<double>(d.n_rows());
  fit.sigma2_b = psi_hat * fit.sigma2_eps;
  fit.beta0 = beta[0];
  fit.beta = beta.tail(d.n_covariates());
  fit.boundary_flag = boundary;

  const Eigen::VectorXd resid = d.y - prof.F() * beta;
  fit.blup.resize(d.n_units());
  for (int u = 0; u < d.n_units(); ++u) {
    double rbar = 0.0;
    for (int r : d.unit_rows[u]) rbar += resid[r];
    const double ni = static_cast<double>(d.unit_size[u]);
    rbar /= ni;
    fit.blup[u] = fit.sigma2_b * ni / (fit.sigma2_eps + fit.sigma2_b * ni) * rbar;
  }
  fit.unit_labels = d.unit_labels;
  for (const auto& m : d.meta) fit.covariate_names.push_back(m.name);
  return fit;
}

// Global-intercept model; deviance equals the total sum of squares.
inline TreeModel fit_null(const ClusteredDataset& d) {
  UnitTree ut;
  ut.ordering = order_units(d);
  CovTree cov;
  const DesignMatrix Xd = encode_design(d, cov, ut);
  const FitResult fit = ols_fit(Xd, d.y);
  TreeModel m = model_from_fit(ModelKind::nullmodel, cov, ut, fit, d);
  return adjust_coefficients(m, d);
}

namespace detail {

inline DesignMatrix cluster_plus_linear(const ClusteredDataset& d, const UnitTree& ut,
                                        const std::vector<int>& active) {
  CovTree empty_cov;
  std::vector<int> rows(d.n_rows());
  for (long i = 0; i < d.n_rows(); ++i) rows[i] = static_cast<int>(i);
  DesignMatrix base = encode_rows(d, rows, empty_cov, ut);
  DesignMatrix Xd;
  Xd.X.resize(d.n_rows(), base.q() + static_cast<int>(active.size()));
  Xd.X.leftCols(base.q()) = base.X;
  Xd.cols = base.cols;
  for (size_t j = 0; j < active.size(); ++j) {
    Xd.X.col(base.q() + static_cast<long>(j)) = d.X.col(active[j]);
    Xd.cols.push_back({ColumnRole::linear, active[j]});
  }
  return Xd;
}

}  // namespace detail

// LTSC fit followed by backward elimination of linear covariates by BIC; the
// unit tree and split count stay fixed. Each round screens removals via the
// exact one-column-deletion identity and refits the committed removal.
inline TreeModel fit_ltscb(const ClusteredDataset& d, const FitConfig& cfg) {
  FitConfig base_cfg = cfg;
  base_cfg.kind = ModelKind::ltsc;
  TreeModel ltsc = fit_pruned(d, base_cfg);

  const int p = d.n_covariates();
  std::vector<int> active(p);
  std::iota(active.begin(), active.end(), 0);

  DesignMatrix Xd = detail::cluster_plus_linear(d, ltsc.unit_tree, active);
  FitResult fit = ols_fit(Xd, d.y);
  const long N = d.n_rows();
  const int C = ltsc.unit_tree.n_clusters();

  while (!active.empty()) {
    // RSS after deleting column j: rss + beta_j^2 / [(X'X)^-1]_jj
    const Eigen::MatrixXd XtX = Xd.X.transpose() * Xd.X;
    const Eigen::MatrixXd XtX_inv = XtX.ldlt().solve(
        Eigen::MatrixXd::Identity(Xd.q(), Xd.q()));
    const double cur_bic = bic(fit);
    int best_k = -1;
    double best_bic = cur_bic;
    for (size_t j = 0; j < active.size(); ++j) {
      const int col = C + static_cast<int>(j);
      const double drop = fit.beta[col] * fit.beta[col] / XtX_inv(col, col);
      const double rss_wo = fit.rss + drop;
      const double ll_wo = gaussian_loglik(rss_wo, N);
      const double bic_wo = -2.0 * ll_wo + (fit.q - 1) * std::log(static_cast<double>(N));
      if (bic_wo < best_bic) {
        best_bic = bic_wo;
        best_k = static_cast<int>(j);
      }
    }
    if (best_k < 0) break;
    active.erase(active.begin() + best_k);
    Xd = detail::cluster_plus_linear(d, ltsc.unit_tree, active);
    fit = ols_fit(Xd, d.y);
  }

  TreeModel m;
  m.kind = ModelKind::ltscb;
  m.cov_tree = CovTree();
  m.unit_tree = ltsc.unit_tree;
  m.beta0 = fit.beta.head(C);
  m.gamma = Eigen::VectorXd::Zero(1);
  m.beta_linear = Eigen::VectorXd::Zero(p);
  m.linear_active.assign(p, 0);
  for (size_t j = 0; j < active.size(); ++j) {
    m.beta_linear[active[j]] = fit.beta[C + static_cast<long>(j)];
    m.linear_active[active[j]] = 1;
  }
  m.sigma2 = fit.sigma2;
  m.n_train = N;
  m.unit_labels = d.unit_labels;
  for (const auto& meta : d.meta) m.covariate_names.push_back(meta.name);
  m.cv = ltsc.cv;
  m.config = cfg;
  return adjust_coefficients(m, d);
}

// True generating structure as a refit recipe: cluster membership per unit
// plus either a region partition (tree-structured covariate effects) or a
// set of linear covariate columns.
struct OracleSpec {
  int n_clusters = 0;
  std::vector<int> cluster_of_unit;  // size n
  int n_regions = 0;
  std::vector<int> region_of_row;    // size N; empty when covariates are linear
  std::vector<int> linear_idx;
};

struct OracleFit {
  Eigen::VectorXd eta_x;  // per row
  Eigen::VectorXd eta_i;  // per unit
  double deviance = 0.0;
};

// OLS refit of coefficients on the true design; structure fixed. Clusters or
// regions that happen to be empty in the sample are dropped from the design.
inline OracleFit fit_perfect(const ClusteredDataset& d, const OracleSpec& spec) {
  const long N = d.n_rows();
  const int n = d.n_units();
  std::vector<int> cl_count(spec.n_clusters, 0);
  for (int u = 0; u < n; ++u) ++cl_count[spec.cluster_of_unit[u]];
  std::vector<int> cl_col(spec.n_clusters, -1);
  int C = 0;
  for (int c = 0; c < spec.n_clusters; ++c)
    if (cl_count[c] > 0) cl_col[c] = C++;

  const bool tree_cov = !spec.region_of_row.empty();
  std::vector<int> rg_col;
  int R = 0;
  int ref_region = -1;
  if (tree_cov) {
    std::vector<long> rg_count(spec.n_regions, 0);
    for (long i = 0; i < N; ++i) ++rg_count[spec.region_of_row[i]];
    for (int g = spec.n_regions - 1; g >= 0; --g)
      if (rg_count[g] > 0) {
        ref_region = g;
        break;
      }
    rg_col.assign(spec.n_regions, -1);
    for (int g = 0; g < spec.n_regions; ++g)
      if (rg_count[g] > 0 && g != ref_region) rg_col[g] = R++;
  }
  const int q = C + (tree_cov ? R : static_cast<int>(spec.linear_idx.size()));

  DesignMatrix Xd;
  Xd.X = Eigen::MatrixXd::Zero(N, q);
  for (long i = 0; i < N; ++i) {
    Xd.X(i, cl_col[spec.cluster_of_unit[d.unit[i]]]) = 1.0;
    if (tree_cov) {
      const int col = rg_col[spec.region_of_row[i]];
      if (col >= 0) Xd.X(i, C + col) = 1.0;
    } else {
      for (size_t j = 0; j < spec.linear_idx.size(); ++j)
        Xd.X(i, C + static_cast<long>(j)) = d.X(i, spec.linear_idx[j]);
    }
  }
  for (int c = 0; c < C; ++c) Xd.cols.push_back({ColumnRole::cluster, c});
  for (int j = C; j < q; ++j) Xd.cols.push_back({ColumnRole::linear, j - C});

  const FitResult fit = ols_fit(Xd, d.y);
  OracleFit out;
  out.deviance = fit.rss;
  out.eta_x.resize(N);
  for (long i = 0; i < N; ++i) {
    double v = 0.0;
    if (tree_cov) {
      const int col = rg_col[spec.region_of_row[i]];
      if (col >= 0) v = fit.beta[C + col];
    } else {
      for (size_t j = 0; j < spec.linear_idx.size(); ++j)
        v += fit.beta[C + static_cast<long>(j)] * d.X(i, spec.linear_idx[j]);
    }
    out.eta_x[i] = v;
  }
  out.eta_i.resize(n);
  for (int u = 0; u < n; ++u) out.eta_i[u] = fit.beta[cl_col[spec.cluster_of_unit[u]]];
  return out;
}

// One fitted model of any kind, for the CLI and the simulation runner.
struct AnyModel {
  ModelKind kind = ModelKind::ttsc;
  std::optional<TreeModel> tree;
  std::optional<LmmFit> lmm;
};

inline AnyModel fit_any(const ClusteredDataset& d, const FitConfig& cfg) {
  AnyModel out;
  out.kind = cfg.kind;
  switch (cfg.kind) {
    case ModelKind::ttsc:
    case ModelKind::ltsc:
      out.tree = fit_pruned(d, cfg);
      break;
    case ModelKind::ltscb:
      out.tree = fit_ltscb(d, cfg);
      break;
    case ModelKind::nullmodel:
      out.tree = fit_null(d);
      break;
    case ModelKind::lmm:
      out.lmm = fit_lmm(d);
      break;
  }
  if (out.tree) {
    out.tree->config = cfg;
    out.tree->kind = cfg.kind;
  }
  return out;
}

}  // namespace treefe
