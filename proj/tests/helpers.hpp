#pragma once

#include <Eigen/Dense>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "treefe/dataset.hpp"
#include "treefe/linfit.hpp"
#include "treefe/stepwise.hpp"
#include "treefe/trees.hpp"

namespace testutil {

// Random clustered dataset: unit effects + optional linear signal + noise.
inline treefe::ClusteredDataset random_dataset(std::mt19937_64& rng, int n_units,
                                               int rows_per_unit, int p,
                                               double unit_sd = 1.0,
                                               double noise_sd = 1.0,
                                               double beta1 = 0.0) {
  std::normal_distribution<double> norm(0.0, 1.0);
  const long N = static_cast<long>(n_units) * rows_per_unit;
  Eigen::VectorXd y(N);
  Eigen::MatrixXd X(N, p);
  std::vector<std::string> labels(N);
  std::vector<double> b(n_units);
  for (int u = 0; u < n_units; ++u) b[u] = unit_sd * norm(rng);
  for (long i = 0; i < N; ++i) {
    const int u = static_cast<int>(i / rows_per_unit);
    labels[i] = "u" + std::to_string(u + 1);
    for (int k = 0; k < p; ++k) X(i, k) = norm(rng);
    y[i] = b[u] + (p > 0 ? beta1 * X(i, 0) : 0.0) + noise_sd * norm(rng);
  }
  std::vector<std::string> names;
  for (int k = 0; k < p; ++k) names.push_back("x" + std::to_string(k + 1));
  return treefe::make_dataset(std::move(y), labels, std::move(X), names);
}

// OLS through explicit normal equations with a hand-rolled Gauss-Jordan
// inverse; independent of the production QR path. Only for small q.
inline Eigen::VectorXd normal_equations_ols(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& y) {
  const int q = static_cast<int>(X.cols());
  std::vector<std::vector<double>> a(q, std::vector<double>(2 * q, 0.0));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) a[i][j] = X.col(i).dot(X.col(j));
    a[i][q + i] = 1.0;
  }
  for (int col = 0; col < q; ++col) {
    int piv = col;
    for (int r = col + 1; r < q; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    const double d = a[col][col];
    for (int j = 0; j < 2 * q; ++j) a[col][j] /= d;
    for (int r = 0; r < q; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int j = 0; j < 2 * q; ++j) a[r][j] -= f * a[col][j];
    }
  }
  Eigen::VectorXd xty(q), beta(q);
  for (int i = 0; i < q; ++i) xty[i] = X.col(i).dot(y);
  for (int i = 0; i < q; ++i) {
    beta[i] = 0.0;
    for (int j = 0; j < q; ++j) beta[i] += a[i][q + j] * xty[j];
  }
  return beta;
}

// Exhaustive first-split oracle: enumerate every admissible covariate
// threshold and unit cut by hand, refit each candidate in full, return the
// minimal deviance and its candidate. Enumeration order matches the
// documented canonical order.
struct OracleBest {
  double deviance = 0.0;
  treefe::SplitCandidate candidate;
  bool found = false;
};

inline OracleBest brute_force_first_split(const treefe::ClusteredDataset& d,
                                          const treefe::FitConfig& cfg) {
  using namespace treefe;
  OracleBest best;
  CovTree cov;
  UnitTree ut;
  ut.ordering = order_units(d);
  const int n_mb = cfg.min_bucket;
  const long N = d.n_rows();

  auto consider = [&](const SplitCandidate& c, const CovTree& cov2, const UnitTree& ut2) {
    DesignMatrix Xd;
    try {
      Xd = encode_design(d, cov2, ut2);
    } catch (const EncodingError&) {
      return;
    }
    FitResult f;
    try {
      f = ols_fit(Xd, d.y);
    } catch (const RankError&) {
      return;
    } catch (const Error&) {
      return;
    }
    if (!best.found || f.rss < best.deviance) {
      best.found = true;
      best.deviance = f.rss;
      best.candidate = c;
    }
  };

  for (int k = 0; k < d.n_covariates(); ++k) {
    std::vector<double> vals(d.X.col(k).data(), d.X.col(k).data() + N);
    std::sort(vals.begin(), vals.end());
    for (long t = 1; t < N; ++t) {
      if (vals[t - 1] == vals[t]) continue;
      if (t < n_mb || N - t < n_mb) continue;
      const double thr = vals[t - 1] + (vals[t] - vals[t - 1]) / 2.0;
      CovTree cov2;
      cov2.split_leaf(0, k, thr);
      SplitCandidate c;
      c.target = SplitCandidate::Target::covariate;
      c.leaf = 0;
      c.var = k;
      c.threshold = thr;
      consider(c, cov2, ut);
    }
  }
  for (int cut = 1; cut < d.n_units(); ++cut) {
    long left = 0;
    for (int pos = 0; pos < cut; ++pos) left += d.unit_size[ut.ordering[pos]];
    if (left < n_mb || N - left < n_mb) continue;
    UnitTree ut2 = ut;
    ut2.add_cut(cut);
    SplitCandidate c;
    c.target = SplitCandidate::Target::unit_cut;
    c.cluster = 0;
    c.cut = cut;
    consider(c, cov, ut2);
  }
  return best;
}

}  // namespace testutil
