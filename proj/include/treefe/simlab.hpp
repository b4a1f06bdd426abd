#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "treefe/baselines.hpp"
#include "treefe/dataset.hpp"
#include "treefe/trees.hpp"

namespace treefe {

// One simulation cell. Settings modify the base setting (n=20, n_i=50, p=10,
// sigma2_eps=1) one parameter at a time; setting 6 means correlated
// covariates (scenarios 1-2) or C=6 unit clusters (scenarios 3-4).
struct SimSpec {
  int scenario = 1;
  int setting = 1;
  int n = 20;
  int n_i = 50;
  int p = 10;
  double sigma2_eps = 1.0;
  double rho = 0.0;
  int n_clusters = 0;  // 0 in scenarios 1-2 (per-unit random intercepts)
  int reps = 100;
  std::uint64_t seed = 1;

  long n_rows() const { return static_cast<long>(n) * n_i; }

  static SimSpec make(int scenario, int setting, int reps = 100, std::uint64_t seed = 1) {
    if (scenario < 1 || scenario > 4)
      throw ConfigError("scenario must be in 1..4, got " + std::to_string(scenario));
    if (setting < 1 || setting > 6)
      throw ConfigError("setting must be in 1..6, got " + std::to_string(setting));
    SimSpec s;
    s.scenario = scenario;
    s.setting = setting;
    s.reps = reps;
    s.seed = seed;
    if (scenario >= 3) s.n_clusters = 3;
    switch (setting) {
      case 1: break;
      case 2: s.n = 40; s.n_i = 25; break;
      case 3: s.n = 100; s.n_i = 10; break;
      case 4: s.p = 100; break;
      case 5: s.sigma2_eps = 2.0; break;
      case 6:
        if (scenario <= 2) s.rho = 0.9;
        else s.n_clusters = 6;
        break;
    }
    return s;
  }
};

struct SimTruth {
  Eigen::VectorXd eta_x;          // per row
  Eigen::VectorXd eta_i;          // per unit
  std::vector<int> informative;   // covariate indices, 0-based
  OracleSpec oracle;
};

namespace detail {

inline constexpr std::uint64_t kStreamUnits = 1;
inline constexpr std::uint64_t kStreamCovariates = 2;
inline constexpr std::uint64_t kStreamErrors = 3;
inline constexpr std::uint64_t kStreamFit = 4;

inline std::mt19937_64 sim_rng(const SimSpec& s, int rep, std::uint64_t purpose) {
  return std::mt19937_64(seed_stream({s.seed, static_cast<std::uint64_t>(s.scenario),
                                      static_cast<std::uint64_t>(s.setting),
                                      static_cast<std::uint64_t>(rep), purpose}));
}

// Interaction regions of the tree-structured DGP (scenarios 2 and 4).
inline int dgp_region(double x1, double x2, double x7) {
  if (x1 <= 0.0) return x2 <= 0.0 ? 0 : 1;
  return x7 == 0.0 ? 2 : 3;
}

inline constexpr double kRegionEffects[4] = {-1.35, -0.45, 0.45, 1.35};
inline constexpr double kLinearBeta1 = 0.8;
inline constexpr double kLinearBeta2 = 0.4;
inline constexpr double kLinearBeta7 = 0.8;

}  // namespace detail

// Draws one replication. Continuous covariates are N(0,1), binary ones
// Bin(1,0.5); under setting 6 (scenarios 1-2) X1 and X2 are built as
// rho*b_i + sqrt(1-rho^2)*z to give corr(X, b_i) = rho with N(0,1) margins.
inline std::pair<ClusteredDataset, SimTruth> generate(const SimSpec& spec, int rep) {
  if (spec.p < 7)
    throw ConfigError("DGP needs p >= 7 covariates (x1, x2 and x7 are informative)");
  if (spec.n < 1 || spec.n_i < 1) throw ConfigError("n and n_i must be positive");
  if (spec.sigma2_eps < 0) throw ConfigError("error variance must be non-negative");
  const int n = spec.n;
  const long N = spec.n_rows();
  const int p = spec.p;
  const bool tree_scen = spec.scenario == 2 || spec.scenario == 4;
  const bool clustered = spec.scenario >= 3;

  SimTruth truth;
  truth.informative = {0, 1, 6};
  truth.eta_i.resize(n);
  truth.oracle.n_clusters = clustered ? spec.n_clusters : n;
  truth.oracle.cluster_of_unit.resize(n);

  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform01(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  Eigen::VectorXd b(n);
  {
    auto rng = detail::sim_rng(spec, rep, detail::kStreamUnits);
    if (clustered) {
      const int C = spec.n_clusters;
      std::vector<double> effects;
      if (C == 3) effects = {-1.25, 0.0, 1.25};
      else effects = {-1.5, -0.9, -0.3, 0.3, 0.9, 1.5};
      for (int u = 0; u < n; ++u) {
        const double ui = uniform01(rng);
        int c = std::min(C - 1, static_cast<int>(ui * C));
        truth.oracle.cluster_of_unit[u] = c;
        b[u] = effects[c];
      }
    } else {
      for (int u = 0; u < n; ++u) {
        b[u] = std_normal(rng);
        truth.oracle.cluster_of_unit[u] = u;
      }
    }
  }
  truth.eta_i = b;

  Eigen::MatrixXd X(N, p);
  {
    auto rng = detail::sim_rng(spec, rep, detail::kStreamCovariates);
    const double rho = spec.rho;
    const double mix = std::sqrt(1.0 - rho * rho);
    for (int k = 0; k < p; ++k) {
      const bool continuous = k < 6 || (k >= 10 && k < 15);
      for (long i = 0; i < N; ++i) {
        if (continuous) {
          const double z = std_normal(rng);
          if (rho != 0.0 && k <= 1) {
            const int u = static_cast<int>(i / spec.n_i);
            X(i, k) = rho * b[u] + mix * z;
          } else {
            X(i, k) = z;
          }
        } else {
          X(i, k) = coin(rng) ? 1.0 : 0.0;
        }
      }
    }
  }

  truth.eta_x.resize(N);
  if (tree_scen) {
    truth.oracle.n_regions = 4;
    truth.oracle.region_of_row.resize(N);
    for (long i = 0; i < N; ++i) {
      const int g = detail::dgp_region(X(i, 0), X(i, 1), X(i, 6));
      truth.oracle.region_of_row[i] = g;
      truth.eta_x[i] = detail::kRegionEffects[g];
    }
  } else {
    truth.oracle.linear_idx = truth.informative;
    for (long i = 0; i < N; ++i)
      truth.eta_x[i] = detail::kLinearBeta1 * X(i, 0) + detail::kLinearBeta2 * X(i, 1) +
                       detail::kLinearBeta7 * X(i, 6);
  }

  Eigen::VectorXd y(N);
  {
    auto rng = detail::sim_rng(spec, rep, detail::kStreamErrors);
    const double sd = std::sqrt(spec.sigma2_eps);
    for (long i = 0; i < N; ++i) {
      const int u = static_cast<int>(i / spec.n_i);
      y[i] = truth.eta_i[u] + truth.eta_x[i] + sd * std_normal(rng);
    }
  }

  std::vector<std::string> labels(N);
  for (long i = 0; i < N; ++i) labels[i] = std::to_string(i / spec.n_i + 1);
  std::vector<std::string> names(p);
  for (int k = 0; k < p; ++k) names[k] = "x" + std::to_string(k + 1);
  return {make_dataset(std::move(y), labels, std::move(X), names), std::move(truth)};
}

// RMSE of covariate effects: both sides centered by their unit-weighted grand
// mean, then the unit-weighted root mean square of the differences.
inline double rmse_x(const ClusteredDataset& d, const Eigen::VectorXd& eta_x_true,
                     const Eigen::VectorXd& eta_x_hat) {
  const double gm_t = unit_weighted_mean(d, eta_x_true);
  const double gm_e = unit_weighted_mean(d, eta_x_hat);
  double total = 0.0;
  for (int u = 0; u < d.n_units(); ++u) {
    double s = 0.0;
    for (int r : d.unit_rows[u]) {
      const double diff = (eta_x_true[r] - gm_t) - (eta_x_hat[r] - gm_e);
      s += diff * diff;
    }
    total += s / d.unit_size[u];
  }
  return std::sqrt(total / d.n_units());
}

// RMSE of unit effects: each side shifted by its unit-weighted grand mean of
// the covariate part, so the compared quantities are per-unit expected
// outcomes.
inline double rmse_i(const ClusteredDataset& d, const Eigen::VectorXd& eta_i_true,
                     const Eigen::VectorXd& eta_x_true, const Eigen::VectorXd& eta_i_hat,
                     const Eigen::VectorXd& eta_x_hat) {
  const double gm_t = unit_weighted_mean(d, eta_x_true);
  const double gm_e = unit_weighted_mean(d, eta_x_hat);
  double total = 0.0;
  for (int u = 0; u < d.n_units(); ++u) {
    const double diff = (eta_i_true[u] + gm_t) - (eta_i_hat[u] + gm_e);
    total += diff * diff;
  }
  return std::sqrt(total / d.n_units());
}

inline std::pair<double, double> tpr_fpr(const std::vector<int>& informative,
                                         const std::set<int>& selected, int p) {
  const std::set<int> info(informative.begin(), informative.end());
  int tp = 0, fp = 0;
  for (int k : selected) {
    if (info.count(k)) ++tp;
    else ++fp;
  }
  const int noise = p - static_cast<int>(info.size());
  const double tpr = info.empty() ? 0.0 : static_cast<double>(tp) / info.size();
  const double fpr = noise == 0 ? 0.0 : static_cast<double>(fp) / noise;
  return {tpr, fpr};
}

// Predictor decomposition used by the evaluation criteria.
struct Decomposed {
  Eigen::VectorXd eta_x;  // per row, covariate part only
  Eigen::VectorXd eta_i;  // per unit
  std::optional<std::set<int>> selected;  // absent for models without selection
};

inline Decomposed decompose(const AnyModel& m, const ClusteredDataset& d) {
  Decomposed out;
  if (m.lmm) {
    const LmmFit& f = *m.lmm;
    out.eta_x = d.n_covariates() > 0 ? Eigen::VectorXd(d.X * f.beta)
                                     : Eigen::VectorXd::Zero(d.n_rows());
    out.eta_i = f.blup.array() + f.beta0;
    return out;
  }
  const TreeModel& t = *m.tree;
  out.eta_x = tree_effect_rows(t, d);
  if (t.beta_linear.size() > 0) out.eta_x += d.X * t.beta_linear;
  out.eta_i.resize(d.n_units());
  const auto pos = t.unit_tree.positions();
  for (int u = 0; u < d.n_units(); ++u)
    out.eta_i[u] = t.beta0[t.unit_tree.cluster_of_pos(pos[u])];
  if (t.kind == ModelKind::ttsc || t.kind == ModelKind::ltscb ||
      t.kind == ModelKind::nullmodel)
    out.selected = t.selected_covariates();
  return out;
}

struct StudyRow {
  int scenario = 0;
  int setting = 0;
  int rep = 0;
  std::string model;
  double rmse_x = 0.0;
  double rmse_i = 0.0;
  double tpr = std::numeric_limits<double>::quiet_NaN();
  double fpr = std::numeric_limits<double>::quiet_NaN();
  int n_splits_cov = 0;
  int n_clusters = 0;
  std::uint64_t seed = 0;
};

struct StudyFailure {
  int scenario = 0;
  int setting = 0;
  int rep = 0;
  std::string model;
  std::string message;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<StudyFailure> failures;
};

inline const std::vector<std::string>& study_model_names() {
  static const std::vector<std::string> names{"lmm", "ltsc", "ltscb", "ttsc", "null", "perfect"};
  return names;
}

namespace detail {

inline StudyRow study_one_model(const SimSpec& spec, int rep, const std::string& model,
                                const ClusteredDataset& d, const SimTruth& truth,
                                const FitConfig& base_cfg, std::uint64_t rep_seed) {
  StudyRow row;
  row.scenario = spec.scenario;
  row.setting = spec.setting;
  row.rep = rep;
  row.model = model;
  row.seed = rep_seed;

  Decomposed dec;
  if (model == "perfect") {
    const OracleFit fit = fit_perfect(d, truth.oracle);
    dec.eta_x = fit.eta_x;
    dec.eta_i = fit.eta_i;
    row.n_splits_cov = truth.oracle.n_regions > 0 ? truth.oracle.n_regions - 1 : 0;
    row.n_clusters = truth.oracle.n_clusters;
  } else {
    FitConfig cfg = base_cfg;
    cfg.kind = model_kind_from_string(model);
    const AnyModel fit = fit_any(d, cfg);
    dec = decompose(fit, d);
    if (fit.tree) {
      row.n_splits_cov = fit.tree->n_cov_splits();
      row.n_clusters = fit.tree->n_clusters();
    } else {
      row.n_clusters = d.n_units();
    }
  }
  row.rmse_x = rmse_x(d, truth.eta_x, dec.eta_x);
  row.rmse_i = rmse_i(d, truth.eta_i, truth.eta_x, dec.eta_i, dec.eta_x);
  if (dec.selected) {
    auto [tpr, fpr] = tpr_fpr(truth.informative, *dec.selected, d.n_covariates());
    row.tpr = tpr;
    row.fpr = fpr;
  }
  return row;
}

}  // namespace detail

// Runs every (spec, replication, model) cell. All models within a
// replication share the same generated dataset; tree models use
// n_mb = floor(0.1 * N), 10-fold CV and the 1SE rule. Replications run in
// parallel; output order and content are independent of the worker count.
inline StudyResult run_study(const std::vector<SimSpec>& specs,
                             const std::vector<std::string>& models, int workers = 1) {
  for (const auto& m : models) {
    if (m != "perfect") model_kind_from_string(m);  // validates
  }
  struct Task {
    const SimSpec* spec;
    int rep;
  };
  std::vector<Task> tasks;
  for (const auto& spec : specs)
    for (int rep = 0; rep < spec.reps; ++rep) tasks.push_back({&spec, rep});

  std::vector<std::vector<StudyRow>> slot_rows(tasks.size());
  std::vector<std::vector<StudyFailure>> slot_fail(tasks.size());

  auto run_task = [&](size_t t) {
    const SimSpec& spec = *tasks[t].spec;
    const int rep = tasks[t].rep;
    const std::uint64_t rep_seed =
        seed_stream({spec.seed, static_cast<std::uint64_t>(spec.scenario),
                     static_cast<std::uint64_t>(spec.setting),
                     static_cast<std::uint64_t>(rep), detail::kStreamFit});
    try {
      auto [d, truth] = generate(spec, rep);
      FitConfig base;
      base.max_splits = 20;
      base.min_bucket = static_cast<int>(0.1 * static_cast<double>(d.n_rows()));
      base.folds = 10;
      base.one_se = true;
      base.seed = rep_seed;
      for (const auto& model : models) {
        try {
          slot_rows[t].push_back(
              detail::study_one_model(spec, rep, model, d, truth, base, rep_seed));
        } catch (const std::exception& e) {
          slot_fail[t].push_back({spec.scenario, spec.setting, rep, model, e.what()});
        }
      }
    } catch (const std::exception& e) {
      slot_fail[t].push_back({spec.scenario, spec.setting, rep, "(generate)", e.what()});
    }
  };

  if (workers <= 1) {
    for (size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const int W = std::min<int>(workers, static_cast<int>(tasks.size()));
    for (int w = 0; w < W; ++w)
      pool.emplace_back([&] {
        for (size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1))
          run_task(t);
      });
    for (auto& th : pool) th.join();
  }

  StudyResult out;
  for (size_t t = 0; t < tasks.size(); ++t) {
    out.rows.insert(out.rows.end(), slot_rows[t].begin(), slot_rows[t].end());
    out.failures.insert(out.failures.end(), slot_fail[t].begin(), slot_fail[t].end());
  }
  return out;
}

inline void write_results_csv(const StudyResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << "scenario,setting,rep,model,rmse_x,rmse_i,tpr,fpr,n_splits_cov,n_clusters,seed\n";
  for (const auto& r : res.rows) {
    out << r.scenario << ',' << r.setting << ',' << r.rep << ',' << r.model << ','
        << format_double(r.rmse_x) << ',' << format_double(r.rmse_i) << ',';
    if (!std::isnan(r.tpr)) out << format_double(r.tpr);
    out << ',';
    if (!std::isnan(r.fpr)) out << format_double(r.fpr);
    out << ',' << r.n_splits_cov << ',' << r.n_clusters << ',' << r.seed << '\n';
  }
}

inline std::vector<StudyRow> read_results_csv(const std::string& path) {
  const CsvTable t = read_csv_table(path);
  if (t.rows.empty()) throw LoadError(path + ": no data rows");
  const int c_sc = t.column("scenario"), c_set = t.column("setting"), c_rep = t.column("rep");
  const int c_model = t.column("model"), c_rx = t.column("rmse_x"), c_ri = t.column("rmse_i");
  const int c_tpr = t.column("tpr"), c_fpr = t.column("fpr");
  const int c_ns = t.column("n_splits_cov"), c_nc = t.column("n_clusters");
  const int c_seed = t.column("seed");
  std::vector<StudyRow> rows;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = path + ": row " + std::to_string(i + 2);
    StudyRow row;
    row.scenario = static_cast<int>(parse_double(r[c_sc], where));
    row.setting = static_cast<int>(parse_double(r[c_set], where));
    row.rep = static_cast<int>(parse_double(r[c_rep], where));
    row.model = r[c_model];
    row.rmse_x = parse_double(r[c_rx], where);
    row.rmse_i = parse_double(r[c_ri], where);
    row.tpr = r[c_tpr].empty() ? std::numeric_limits<double>::quiet_NaN()
                               : parse_double(r[c_tpr], where);
    row.fpr = r[c_fpr].empty() ? std::numeric_limits<double>::quiet_NaN()
                               : parse_double(r[c_fpr], where);
    row.n_splits_cov = static_cast<int>(parse_double(r[c_ns], where));
    row.n_clusters = static_cast<int>(parse_double(r[c_nc], where));
    row.seed = static_cast<std::uint64_t>(std::stoull(r[c_seed]));
    rows.push_back(row);
  }
  return rows;
}

// Sample quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SummaryEntry {
  int scenario = 0;
  int setting = 0;
  std::string model;
  int n_reps = 0;
  double tpr_mean = std::numeric_limits<double>::quiet_NaN();
  double fpr_mean = std::numeric_limits<double>::quiet_NaN();
  double rx_q25 = 0.0, rx_med = 0.0, rx_q75 = 0.0;
  double ri_q25 = 0.0, ri_med = 0.0, ri_q75 = 0.0;
};

inline std::vector<SummaryEntry> summarize(const std::vector<StudyRow>& rows) {
  std::map<std::tuple<int, int, std::string>, std::vector<const StudyRow*>> groups;
  for (const auto& r : rows) groups[{r.scenario, r.setting, r.model}].push_back(&r);
  std::vector<SummaryEntry> out;
  for (const auto& [key, rs] : groups) {
    SummaryEntry e;
    e.scenario = std::get<0>(key);
    e.setting = std::get<1>(key);
    e.model = std::get<2>(key);
    e.n_reps = static_cast<int>(rs.size());
    std::vector<double> rx, ri, tpr, fpr;
    for (const auto* r : rs) {
      rx.push_back(r->rmse_x);
      ri.push_back(r->rmse_i);
      if (!std::isnan(r->tpr)) tpr.push_back(r->tpr);
      if (!std::isnan(r->fpr)) fpr.push_back(r->fpr);
    }
    if (!tpr.empty()) {
      e.tpr_mean = 0.0;
      for (double v : tpr) e.tpr_mean += v;
      e.tpr_mean /= static_cast<double>(tpr.size());
    }
    if (!fpr.empty()) {
      e.fpr_mean = 0.0;
      for (double v : fpr) e.fpr_mean += v;
      e.fpr_mean /= static_cast<double>(fpr.size());
    }
    e.rx_q25 = quantile(rx, 0.25);
    e.rx_med = quantile(rx, 0.5);
    e.rx_q75 = quantile(rx, 0.75);
    e.ri_q25 = quantile(ri, 0.25);
    e.ri_med = quantile(ri, 0.5);
    e.ri_q75 = quantile(ri, 0.75);
    out.push_back(e);
  }
  return out;
}

namespace detail {

inline std::string fixed3(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace detail

// Markdown report: per scenario, mean TPR/FPR tables for models that select
// variables (rows = models, columns = settings) and RMSE quartile tables.
inline void write_report_markdown(const std::vector<SummaryEntry>& entries,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  std::set<int> scenarios;
  for (const auto& e : entries) scenarios.insert(e.scenario);
  out << "# Simulation study summary\n";
  for (int sc : scenarios) {
    std::set<int> settings;
    std::vector<std::string> sel_models, all_models;
    for (const auto& e : entries)
      if (e.scenario == sc) {
        settings.insert(e.setting);
        if (std::find(all_models.begin(), all_models.end(), e.model) == all_models.end())
          all_models.push_back(e.model);
        if (!std::isnan(e.tpr_mean) &&
            std::find(sel_models.begin(), sel_models.end(), e.model) == sel_models.end())
          sel_models.push_back(e.model);
      }
    auto find = [&](int setting, const std::string& model) -> const SummaryEntry* {
      for (const auto& e : entries)
        if (e.scenario == sc && e.setting == setting && e.model == model) return &e;
      return nullptr;
    };
    out << "\n## Scenario " << sc << "\n";
    if (!sel_models.empty()) {
      out << "\n### Variable selection: mean TPR\n\n| Model |";
      for (int s : settings) out << " Setting " << s << " |";
      out << "\n|---|";
      for (size_t i = 0; i < settings.size(); ++i) out << "---|";
      out << "\n";
      for (const auto& m : sel_models) {
        out << "| " << m << " |";
        for (int s : settings) {
          const auto* e = find(s, m);
          out << ' ' << (e ? detail::fixed3(e->tpr_mean) : "-") << " |";
        }
        out << "\n";
      }
      out << "\n### Variable selection: mean FPR\n\n| Model |";
      for (int s : settings) out << " Setting " << s << " |";
      out << "\n|---|";
      for (size_t i = 0; i < settings.size(); ++i) out << "---|";
      out << "\n";
      for (const auto& m : sel_models) {
        out << "| " << m << " |";
        for (int s : settings) {
          const auto* e = find(s, m);
          out << ' ' << (e ? detail::fixed3(e->fpr_mean) : "-") << " |";
        }
        out << "\n";
      }
    }
    for (const char* metric : {"RMSE_X", "RMSE_I"}) {
      out << "\n### " << metric << " quartiles (q25 / median / q75)\n\n| Model |";
      for (int s : settings) out << " Setting " << s << " |";
      out << "\n|---|";
      for (size_t i = 0; i < settings.size(); ++i) out << "---|";
      out << "\n";
      const bool x = std::string(metric) == "RMSE_X";
      for (const auto& m : all_models) {
        out << "| " << m << " |";
        for (int s : settings) {
          const auto* e = find(s, m);
          if (!e) {
            out << " - |";
            continue;
          }
          out << ' ' << detail::fixed3(x ? e->rx_q25 : e->ri_q25) << " / "
              << detail::fixed3(x ? e->rx_med : e->ri_med) << " / "
              << detail::fixed3(x ? e->rx_q75 : e->ri_q75) << " |";
        }
        out << "\n";
      }
    }
  }
}

inline void write_quartiles_csv(const std::vector<SummaryEntry>& entries,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << "scenario,setting,model,n_reps,metric,q25,median,q75\n";
  for (const auto& e : entries) {
    out << e.scenario << ',' << e.setting << ',' << e.model << ',' << e.n_reps
        << ",rmse_x," << format_double(e.rx_q25) << ',' << format_double(e.rx_med) << ','
        << format_double(e.rx_q75) << '\n';
    out << e.scenario << ',' << e.setting << ',' << e.model << ',' << e.n_reps
        << ",rmse_i," << format_double(e.ri_q25) << ',' << format_double(e.ri_med) << ','
        << format_double(e.ri_q75) << '\n';
  }
}

}  // namespace treefe
