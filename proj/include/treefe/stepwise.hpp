#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "treefe/dataset.hpp"
#include "treefe/linfit.hpp"
#include "treefe/trees.hpp"

namespace treefe {

// Proposed split in either tree. Covariate splits carry (leaf, var,
// threshold); unit splits carry (cluster, cut position in the ordering).
struct SplitCandidate {
  enum class Target { covariate, unit_cut };
  Target target = Target::covariate;
  int leaf = -1;        // covariate-tree leaf ordinal
  int var = -1;         // covariate index
  double threshold = 0.0;
  int cluster = -1;     // unit-tree cluster id
  int cut = -1;         // global position in the unit ordering

  bool operator==(const SplitCandidate&) const = default;
};

// Nested model sequence; models[s] has s splits.
struct FitPath {
  std::vector<TreeModel> models;
  std::vector<double> deviances;
  std::vector<SplitCandidate> chosen;  // chosen[s] produced models[s+1]

  int n_splits() const { return static_cast<int>(models.size()) - 1; }
};

// Units in ascending order of their outcome means, ties by unit index.
inline std::vector<int> order_units(const ClusteredDataset& d) {
  const Eigen::VectorXd means = unit_means(d);
  std::vector<int> order(d.n_units());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return means[a] < means[b]; });
  return order;
}

namespace detail {

// Candidate thresholds for one (leaf, variable) pair: rows sorted by the
// variable, admissible boundaries (prefix counts) and midpoint thresholds.
struct CovRun {
  int leaf = 0;
  int var = 0;
  std::vector<int> rows_sorted;
  std::vector<int> boundary;
  std::vector<double> threshold;
};

struct UnitRun {
  int cluster = 0;
  std::vector<int> cuts;  // admissible global cut positions, ascending
};

struct CandidateRuns {
  std::vector<CovRun> cov_runs;
  std::vector<UnitRun> unit_runs;
  long total = 0;
};

inline std::vector<std::vector<int>> rows_by_leaf(const std::vector<int>& leaf_of,
                                                  int n_leaves) {
  std::vector<std::vector<int>> out(n_leaves);
  for (size_t i = 0; i < leaf_of.size(); ++i) out[leaf_of[i]].push_back(static_cast<int>(i));
  return out;
}

inline CandidateRuns collect_runs(const ClusteredDataset& d, const CovTree& cov,
                                  const UnitTree& ut, const FitConfig& cfg,
                                  const std::vector<int>& leaf_of,
                                  bool include_covariate, bool include_unit,
                                  const std::vector<int>* cluster_depth) {
  CandidateRuns runs;
  const int n_mb = cfg.min_bucket;

  if (include_covariate) {
    const auto leaves = cov.leaf_nodes();
    const auto in_leaf = rows_by_leaf(leaf_of, cov.n_leaves());
    for (int m = 0; m < cov.n_leaves(); ++m) {
      if (cfg.max_depth > 0 && cov.node(leaves[m]).depth + 1 > cfg.max_depth) continue;
      const auto& rows = in_leaf[m];
      const long nl = static_cast<long>(rows.size());
      if (nl < 2L * n_mb) continue;
      for (int k = 0; k < d.n_covariates(); ++k) {
        CovRun run;
        run.leaf = m;
        run.var = k;
        run.rows_sorted = rows;
        std::sort(run.rows_sorted.begin(), run.rows_sorted.end(),
                  [&](int a, int b) { return d.X(a, k) < d.X(b, k); });
        for (long t = 1; t < nl; ++t) {
          const double lo = d.X(run.rows_sorted[t - 1], k);
          const double hi = d.X(run.rows_sorted[t], k);
          if (lo == hi) continue;
          if (t < n_mb || nl - t < n_mb) continue;
          run.boundary.push_back(static_cast<int>(t));
          run.threshold.push_back(lo + (hi - lo) / 2.0);
        }
        if (!run.boundary.empty()) {
          runs.total += static_cast<long>(run.boundary.size());
          runs.cov_runs.push_back(std::move(run));
        }
      }
    }
  }

  if (include_unit) {
    for (int c = 0; c < ut.n_clusters(); ++c) {
      if (cfg.max_depth > 0 && cluster_depth &&
          (*cluster_depth)[c] + 1 > cfg.max_depth)
        continue;
      auto [a, b] = ut.cluster_span(c);
      if (b - a < 2) continue;
      long total_obs = 0;
      std::vector<long> prefix_obs(b - a);
      for (int pos = a; pos < b; ++pos) {
        total_obs += d.unit_size[ut.ordering[pos]];
        prefix_obs[pos - a] = total_obs;
      }
      UnitRun run;
      run.cluster = c;
      for (int pos = a + 1; pos < b; ++pos) {
        const long left = prefix_obs[pos - 1 - a];
        if (left >= n_mb && total_obs - left >= n_mb) run.cuts.push_back(pos);
      }
      if (!run.cuts.empty()) {
        runs.total += static_cast<long>(run.cuts.size());
        runs.unit_runs.push_back(std::move(run));
      }
    }
  }
  return runs;
}

inline std::vector<SplitCandidate> flatten(const CandidateRuns& runs) {
  std::vector<SplitCandidate> out;
  out.reserve(runs.total);
  for (const auto& run : runs.cov_runs)
    for (size_t t = 0; t < run.boundary.size(); ++t) {
      SplitCandidate c;
      c.target = SplitCandidate::Target::covariate;
      c.leaf = run.leaf;
      c.var = run.var;
      c.threshold = run.threshold[t];
      out.push_back(c);
    }
  for (const auto& run : runs.unit_runs)
    for (int cut : run.cuts) {
      SplitCandidate c;
      c.target = SplitCandidate::Target::unit_cut;
      c.cluster = run.cluster;
      c.cut = cut;
      out.push_back(c);
    }
  return out;
}

}  // namespace detail

// All admissible one-step extensions of (cov, ut) in canonical order:
// covariate candidates by (leaf, variable, ascending threshold), then unit
// candidates by (cluster, ascending cut).
inline std::vector<SplitCandidate> enumerate_candidates(
    const ClusteredDataset& d, const CovTree& cov, const UnitTree& ut,
    const FitConfig& cfg, bool include_covariate = true, bool include_unit = true,
    const std::vector<int>* cluster_depth = nullptr) {
  const auto leaf_of = cov.assign_leaves(d.X);
  return detail::flatten(detail::collect_runs(d, cov, ut, cfg, leaf_of,
                                              include_covariate, include_unit,
                                              cluster_depth));
}

namespace detail {

// Stepwise two-tree builder. Every candidate split extends the current
// design's column span by exactly one indicator column (a child of the split
// node), so candidate deviances follow from projecting that column off the
// current fit: rss_new = rss - (z'r)^2 / ||(I-P)z||^2. The committed model is
// always re-fit in full; a property test pins the two routes to 1e-8.
class StepwiseEngine {
 public:
  StepwiseEngine(const ClusteredDataset& d, const FitConfig& cfg, bool unit_only)
      : d_(d), cfg_(cfg), unit_only_(unit_only) {
    cfg_.validate();
    ut_.ordering = order_units(d);
    cluster_depth_.assign(1, 0);
  }

  FitPath run() {
    FitPath path;
    refit();
    record(path);
    const double zero_rss = 1e-16 * std::max(1.0, d_.y.squaredNorm());
    while (path.n_splits() < cfg_.max_splits && rss_ > zero_rss) {
      const auto runs = collect_runs(d_, cov_, ut_, cfg_, leaf_of_, !unit_only_,
                                     true, &cluster_depth_);
      if (runs.total == 0) break;
      auto cands = flatten(runs);
      std::vector<double> dev(cands.size(), std::numeric_limits<double>::infinity());
      sweep(runs, dev);
      std::vector<int> idx(cands.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return dev[a] != dev[b] ? dev[a] < dev[b] : a < b;
      });
      bool committed = false;
      for (int j : idx) {
        if (!std::isfinite(dev[j])) break;  // only dependent candidates remain
        if (try_commit(cands[j])) {
          path.chosen.push_back(cands[j]);
          record(path);
          committed = true;
          break;
        }
      }
      if (!committed) break;
    }
    return path;
  }

 private:
  void refit() {
    DesignMatrix Xd = encode_design(d_, cov_, ut_, -1, unit_only_);
    fit_ = ols_fit(Xd, d_.y);
    resid_ = d_.y - Xd.X * fit_.beta;
    rss_ = fit_.rss;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Xd.X);
    Q1_ = qr.householderQ() * Eigen::MatrixXd::Identity(d_.n_rows(), Xd.q());
    leaf_of_ = cov_.assign_leaves(d_.X);
  }

  void record(FitPath& path) {
    const ModelKind kind = unit_only_ ? ModelKind::ltsc : ModelKind::ttsc;
    path.models.push_back(model_from_fit(kind, cov_, ut_, fit_, d_, -1, unit_only_));
    path.deviances.push_back(rss_);
  }

  // Projected deviance for every admissible candidate, in enumeration order.
  void sweep(const CandidateRuns& runs, std::vector<double>& dev) const {
    const int q = static_cast<int>(Q1_.cols());
    Eigen::VectorXd cq(q);
    size_t at = 0;
    for (const auto& run : runs.cov_runs) {
      cq.setZero();
      double cr = 0.0;
      size_t next = 0;
      for (size_t t = 0; t < run.rows_sorted.size() && next < run.boundary.size(); ++t) {
        const int row = run.rows_sorted[t];
        cr += resid_[row];
        cq += Q1_.row(row);
        if (static_cast<int>(t) + 1 == run.boundary[next]) {
          dev[at + next] = projected_rss(cr, cq, run.boundary[next]);
          ++next;
        }
      }
      at += run.boundary.size();
    }
    for (const auto& run : runs.unit_runs) {
      auto [a, b] = ut_.cluster_span(run.cluster);
      cq.setZero();
      double cr = 0.0;
      long cnt = 0;
      size_t next = 0;
      for (int pos = a; pos < b && next < run.cuts.size(); ++pos) {
        for (int row : d_.unit_rows[ut_.ordering[pos]]) {
          cr += resid_[row];
          cq += Q1_.row(row);
        }
        cnt += d_.unit_size[ut_.ordering[pos]];
        if (pos + 1 == run.cuts[next]) {
          dev[at + next] = projected_rss(cr, cq, cnt);
          ++next;
        }
      }
      at += run.cuts.size();
    }
  }

  double projected_rss(double zr, const Eigen::VectorXd& zq, long zsq) const {
    const double ztilde2 = static_cast<double>(zsq) - zq.squaredNorm();
    if (ztilde2 <= 1e-10 * static_cast<double>(zsq))
      return std::numeric_limits<double>::infinity();  // dependent column
    return rss_ - zr * zr / ztilde2;
  }

  bool try_commit(const SplitCandidate& c) {
    CovTree cov_saved = cov_;
    UnitTree ut_saved = ut_;
    std::vector<int> depth_saved = cluster_depth_;
    if (c.target == SplitCandidate::Target::covariate) {
      cov_.split_leaf(cov_.leaf_nodes()[c.leaf], c.var, c.threshold);
    } else {
      const int dch = cluster_depth_[c.cluster] + 1;
      cluster_depth_[c.cluster] = dch;
      cluster_depth_.insert(cluster_depth_.begin() + c.cluster, dch);
      ut_.add_cut(c.cut);
    }
    try {
      refit();
      return true;
    } catch (const RankError&) {
      cov_ = std::move(cov_saved);
      ut_ = std::move(ut_saved);
      cluster_depth_ = std::move(depth_saved);
      return false;
    }
  }

  const ClusteredDataset& d_;
  FitConfig cfg_;
  bool unit_only_;
  CovTree cov_;
  UnitTree ut_;
  std::vector<int> cluster_depth_;
  std::vector<int> leaf_of_;
  FitResult fit_;
  Eigen::VectorXd resid_;
  Eigen::MatrixXd Q1_;
  double rss_ = 0.0;
};

}  // namespace detail

// Two-tree path: model 0 is the global intercept, each step commits the
// deviance-minimizing admissible split over both trees (full refit of all
// parameters, ties by enumeration order).
inline FitPath grow_path(const ClusteredDataset& d, const FitConfig& cfg) {
  return detail::StepwiseEngine(d, cfg, false).run();
}

// As grow_path, but candidates restricted to the unit tree; all covariates
// enter as linear columns refitted at each step.
inline FitPath grow_path_ltsc(const ClusteredDataset& d, const FitConfig& cfg) {
  return detail::StepwiseEngine(d, cfg, true).run();
}

}  // namespace treefe
