#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "treefe/common.hpp"

namespace treefe {

enum class ColumnRole { intercept, cluster, leaf, linear };

struct ColumnDesc {
  ColumnRole role = ColumnRole::intercept;
  int index = 0;  // cluster id, leaf id, or covariate index

  std::string describe() const {
    switch (role) {
      case ColumnRole::intercept: return "intercept";
      case ColumnRole::cluster: return "cluster[" + std::to_string(index + 1) + "]";
      case ColumnRole::leaf: return "leaf[" + std::to_string(index + 1) + "]";
      case ColumnRole::linear: return "x[" + std::to_string(index + 1) + "]";
    }
    return "?";
  }
};

struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<ColumnDesc> cols;

  long rows() const { return X.rows(); }
  int q() const { return static_cast<int>(X.cols()); }
};

struct FitResult {
  Eigen::VectorXd beta;
  double rss = 0.0;
  double sigma2 = 0.0;  // ML estimate rss/N (not floored)
  double loglik = 0.0;
  int q = 0;
  long n_obs = 0;
  bool sigma2_floored = false;  // loglik used the 1e-12 variance floor
};

// Variance floor used whenever a fit is saturated (rss == 0); keeps
// log-likelihoods finite so CV comparisons stay defined.
inline constexpr double kSigma2Floor = 1e-12;

inline double gaussian_loglik(double rss, long n, bool* floored = nullptr) {
  double s2 = rss / static_cast<double>(n);
  bool fl = s2 < kSigma2Floor;
  if (fl) s2 = kSigma2Floor;
  if (floored) *floored = fl;
  return -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * s2) + 1.0);
}

// Relative pivot tolerance for the rank check: |pivot| <= tol * |max pivot|
// marks a dependent column.
inline constexpr double kRankTolerance = 1e-10;

inline FitResult ols_fit(const DesignMatrix& Xd, const Eigen::VectorXd& y) {
  const long N = Xd.rows();
  const int q = Xd.q();
  if (q < 1) throw Error("design matrix has no columns");
  if (N < q)
    throw Error("fewer observations (" + std::to_string(N) + ") than parameters (" +
                std::to_string(q) + ")");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xd.X);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < q) {
    std::string dep;
    const auto& perm = qr.colsPermutation().indices();
    for (int j = qr.rank(); j < q; ++j) {
      if (!dep.empty()) dep += ", ";
      const int col = perm[j];
      dep += Xd.cols.empty() ? ("col " + std::to_string(col)) : Xd.cols[col].describe();
    }
    throw RankError("rank-deficient design (rank " + std::to_string(qr.rank()) +
                    " < " + std::to_string(q) + "): dependent columns " + dep);
  }
  FitResult f;
  f.beta = qr.solve(y);
  f.rss = (y - Xd.X * f.beta).squaredNorm();
  f.q = q;
  f.n_obs = N;
  f.sigma2 = f.rss / static_cast<double>(N);
  f.loglik = gaussian_loglik(f.rss, N, &f.sigma2_floored);
  return f;
}

// Gaussian deviance; for a fixed Gaussian family this is the residual sum of
// squares, which orders candidate models identically to the likelihood.
inline double deviance(const FitResult& f) { return f.rss; }

inline double predictive_loglik(const FitResult& f, const DesignMatrix& Xd_test,
                                const Eigen::VectorXd& y_test) {
  if (Xd_test.q() != f.q)
    throw Error("test design has " + std::to_string(Xd_test.q()) +
                " columns, fit has " + std::to_string(f.q));
  double s2 = f.sigma2 < kSigma2Floor ? kSigma2Floor : f.sigma2;
  const Eigen::VectorXd resid = y_test - Xd_test.X * f.beta;
  const double c = std::log(2.0 * std::numbers::pi * s2);
  return -0.5 * (static_cast<double>(y_test.size()) * c + resid.squaredNorm() / s2);
}

inline double bic(const FitResult& f) {
  return -2.0 * f.loglik + static_cast<double>(f.q) * std::log(static_cast<double>(f.n_obs));
}

}  // namespace treefe
