#pragma once

#include <cmath>
#include <vector>

#include "treefe/dataset.hpp"
#include "treefe/stepwise.hpp"
#include "treefe/trees.hpp"

namespace treefe {

namespace detail {

inline FitPath grow_for_kind(const ClusteredDataset& d, const FitConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::ttsc: return grow_path(d, cfg);
    case ModelKind::ltsc:
    case ModelKind::ltscb: return grow_path_ltsc(d, cfg);
    default: throw ConfigError("stepwise path undefined for model kind " + to_string(cfg.kind));
  }
}

}  // namespace detail

// Fills s_max_ll (argmax of the mean, smallest s on ties) and s_1se (smallest
// s whose mean is within one standard error of the maximum).
inline void select_split_counts(CvCurve& curve) {
  curve.s_max_ll = 0;
  for (int s = 1; s < curve.size(); ++s)
    if (curve.mean_loglik[s] > curve.mean_loglik[curve.s_max_ll]) curve.s_max_ll = s;
  const double bar = curve.mean_loglik[curve.s_max_ll] - curve.se[curve.s_max_ll];
  curve.s_1se = curve.s_max_ll;
  for (int s = 0; s < curve.size(); ++s) {
    if (curve.mean_loglik[s] >= bar) {
      curve.s_1se = s;
      break;
    }
  }
}

// k-fold cross-validated predictive log-likelihood over the nested path.
// Fold values are per-observation averages; the curve is truncated to the
// shortest fold path. Test rows whose unit is absent from a fold's training
// data are excluded from that fold and counted in skipped_rows.
inline CvCurve cv_curve(const ClusteredDataset& d, const FitConfig& cfg) {
  cfg.validate();
  const FoldAssignment fa = assign_folds(d, cfg.folds, cfg.seed);
  const bool with_linear = cfg.kind != ModelKind::ttsc;

  std::vector<std::vector<double>> fold_ll;  // per used fold, per s
  long skipped = 0;
  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<char> keep(d.n_rows());
    for (long i = 0; i < d.n_rows(); ++i) keep[i] = fa.fold[i] != f;
    const SubsetResult train = subset_rows(d, keep);
    const FitPath path = detail::grow_for_kind(train.data, cfg);

    std::vector<int> test_rows;
    for (long i = 0; i < d.n_rows(); ++i) {
      if (fa.fold[i] != f) continue;
      if (train.unit_map[d.unit[i]] < 0) {
        ++skipped;
        continue;
      }
      test_rows.push_back(static_cast<int>(i));
    }
    if (test_rows.empty()) continue;
    Eigen::VectorXd y_test(test_rows.size());
    for (size_t t = 0; t < test_rows.size(); ++t) y_test[t] = d.y[test_rows[t]];

    std::vector<double> vals;
    vals.reserve(path.models.size());
    for (const TreeModel& m : path.models) {
      const DesignMatrix Xd = encode_rows(d, test_rows, m.cov_tree, m.unit_tree,
                                          &train.unit_map, -1, with_linear);
      vals.push_back(predictive_loglik(to_fit_result(m), Xd, y_test) /
                     static_cast<double>(test_rows.size()));
    }
    fold_ll.push_back(std::move(vals));
  }
  if (fold_ll.empty()) throw Error("cross-validation produced no usable folds");

  size_t len = fold_ll.front().size();
  for (const auto& v : fold_ll) len = std::min(len, v.size());
  const double kf = static_cast<double>(fold_ll.size());

  CvCurve curve;
  curve.skipped_rows = skipped;
  curve.mean_loglik.resize(len);
  curve.se.resize(len);
  for (size_t s = 0; s < len; ++s) {
    double mean = 0.0;
    for (const auto& v : fold_ll) mean += v[s];
    mean /= kf;
    double var = 0.0;
    for (const auto& v : fold_ll) var += (v[s] - mean) * (v[s] - mean);
    var = fold_ll.size() > 1 ? var / (kf - 1.0) : 0.0;
    curve.mean_loglik[s] = mean;
    curve.se[s] = std::sqrt(var / kf);
  }

  select_split_counts(curve);
  return curve;
}

// Full procedure: CV selection of the split count (1SE rule by default),
// refit on the complete data, coefficient adjustment.
inline TreeModel fit_pruned(const ClusteredDataset& d, const FitConfig& cfg) {
  const CvCurve curve = cv_curve(d, cfg);
  FitConfig final_cfg = cfg;
  final_cfg.max_splits = cfg.one_se ? curve.s_1se : curve.s_max_ll;
  const FitPath path = detail::grow_for_kind(d, final_cfg);
  TreeModel m = adjust_coefficients(path.models.back(), d);
  m.cv = curve;
  m.config = cfg;
  return m;
}

}  // namespace treefe
