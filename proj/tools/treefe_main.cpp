// treefe command line: fit / predict / simulate / report.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "treefe/treefe.hpp"

namespace {

using namespace treefe;

struct FitArgs {
  std::string data, outcome = "y", unit = "unit";
  std::vector<std::string> covariates;
  std::string model = "ttsc";
  int max_splits = 20;
  int min_bucket = 1;
  int max_depth = 0;
  int folds = 10;
  bool one_se = true;
  std::uint64_t seed = 1;
  std::string out;
  std::string cv_out;
};

std::string default_sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension("");
  return p.string() + suffix;
}

void write_cv_csv(const CvCurve& cv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << "s,mean_loglik,se,is_max_ll,is_1se\n";
  for (int s = 0; s < cv.size(); ++s)
    out << s << ',' << format_double(cv.mean_loglik[s]) << ','
        << format_double(cv.se[s]) << ',' << (s == cv.s_max_ll ? 1 : 0) << ','
        << (s == cv.s_1se ? 1 : 0) << '\n';
}

void print_tree_summary(const TreeModel& m, const ClusteredDataset& d,
                        const FitConfig& cfg) {
  std::cout << "model: " << to_string(m.kind) << "\n"
            << "data: " << d.n_rows() << " observations, " << d.n_units() << " units, "
            << d.n_covariates() << " covariates\n"
            << "config: max-splits=" << cfg.max_splits << " min-bucket=" << cfg.min_bucket
            << " max-depth=" << (cfg.max_depth > 0 ? std::to_string(cfg.max_depth) : "unlimited")
            << " folds=" << cfg.folds << " one-se=" << (cfg.one_se ? "on" : "off")
            << " seed=" << cfg.seed << "\n";
  if (m.cv)
    std::cout << "cv: best split count " << m.cv->s_max_ll << ", selected "
              << (cfg.one_se ? m.cv->s_1se : m.cv->s_max_ll) << " (1SE "
              << (cfg.one_se ? "on" : "off") << "), skipped test rows "
              << m.cv->skipped_rows << "\n";
  std::cout << "sigma2: " << format_double(m.sigma2) << "\n";

  std::cout << "\nclusters (" << m.unit_tree.n_clusters() << "):\n";
  std::cout << "  id  intercept_adj  units\n";
  for (int c = 0; c < m.unit_tree.n_clusters(); ++c) {
    auto [a, b] = m.unit_tree.cluster_span(c);
    std::cout << "  " << (c + 1) << "   " << format_double(m.beta0_adj[c]) << "  ";
    for (int pos = a; pos < b; ++pos)
      std::cout << (pos == a ? "" : ", ") << m.unit_labels[m.unit_tree.ordering[pos]];
    std::cout << "\n";
  }

  if (m.kind == ModelKind::ttsc || m.kind == ModelKind::nullmodel) {
    const auto rules = m.cov_tree.leaf_rules(m.covariate_names);
    std::cout << "\nleaves (" << m.cov_tree.n_leaves() << "):\n";
    std::cout << "  id  effect_adj  rule\n";
    for (int l = 0; l < m.cov_tree.n_leaves(); ++l)
      std::cout << "  " << (l + 1) << "   " << format_double(m.gamma_adj[l]) << "  "
                << rules[l] << "\n";
  } else {
    std::cout << "\nlinear effects:\n";
    for (size_t k = 0; k < m.covariate_names.size(); ++k) {
      if (!m.linear_active.empty() && !m.linear_active[k]) continue;
      std::cout << "  " << m.covariate_names[k] << " = "
                << format_double(m.beta_linear[static_cast<long>(k)]) << "\n";
    }
    if (m.kind == ModelKind::ltscb) {
      int dropped = 0;
      for (auto a : m.linear_active) dropped += a ? 0 : 1;
      std::cout << "  (" << dropped << " covariates removed by backward selection)\n";
    }
  }
}

void print_lmm_summary(const LmmFit& m, const ClusteredDataset& d) {
  std::cout << "model: lmm\n"
            << "data: " << d.n_rows() << " observations, " << d.n_units() << " units, "
            << d.n_covariates() << " covariates\n"
            << "intercept: " << format_double(m.beta0) << "\n"
            << "sigma2_b: " << format_double(m.sigma2_b)
            << "  sigma2_eps: " << format_double(m.sigma2_eps)
            << "  loglik: " << format_double(m.loglik) << "\n";
  if (m.boundary_flag) std::cout << "warning: variance-ratio search hit its upper bound\n";
  std::cout << "\nfixed effects:\n";
  for (size_t k = 0; k < m.covariate_names.size(); ++k)
    std::cout << "  " << m.covariate_names[k] << " = "
              << format_double(m.beta[static_cast<long>(k)]) << "\n";
}

int cmd_fit(const FitArgs& a) {
  const ModelKind kind = model_kind_from_string(a.model);
  const ClusteredDataset d = load_csv(a.data, a.outcome, a.unit, a.covariates);
  FitConfig cfg;
  cfg.max_splits = a.max_splits;
  cfg.min_bucket = a.min_bucket;
  cfg.max_depth = a.max_depth;
  cfg.folds = a.folds;
  cfg.one_se = a.one_se;
  cfg.seed = a.seed;
  cfg.kind = kind;
  cfg.validate();

  AnyModel fit = fit_any(d, cfg);
  if (fit.tree) {
    fit.tree->outcome_name = a.outcome;
    fit.tree->unit_column = a.unit;
  } else {
    fit.lmm->outcome_name = a.outcome;
    fit.lmm->unit_column = a.unit;
  }
  write_model(fit, a.out);
  if (fit.tree && fit.tree->cv) {
    const std::string cvp = a.cv_out.empty() ? default_sibling(a.out, ".cv.csv") : a.cv_out;
    write_cv_csv(*fit.tree->cv, cvp);
    std::cout << "cv curve: " << cvp << "\n";
  }
  std::cout << "model document: " << a.out << "\n\n";
  if (fit.tree) print_tree_summary(*fit.tree, d, cfg);
  else print_lmm_summary(*fit.lmm, d);
  return 0;
}

struct PredictArgs {
  std::string model, data, out;
  bool allow_unseen = false;
};

int cmd_predict(const PredictArgs& a) {
  const AnyModel m = read_model(a.model);
  const std::vector<std::string>& covs =
      m.tree ? m.tree->covariate_names : m.lmm->covariate_names;
  const std::string unit_col = m.tree ? m.tree->unit_column : m.lmm->unit_column;

  const CsvTable t = read_csv_table(a.data);
  if (t.rows.empty()) throw LoadError(a.data + ": no data rows");
  const int ucol = t.column(unit_col);
  std::vector<int> xcols;
  for (const auto& c : covs) xcols.push_back(t.column(c));

  // first pass: find units unknown to the model
  std::set<std::string> unseen;
  for (const auto& row : t.rows) {
    const std::string& label = row[ucol];
    const int idx = m.tree ? m.tree->unit_index_of(label) : -1;
    if (m.tree) {
      if (idx < 0) unseen.insert(label);
    } else {
      bool known = false;
      for (const auto& ul : m.lmm->unit_labels) known = known || ul == label;
      if (!known) unseen.insert(label);
    }
  }
  if (!unseen.empty() && !a.allow_unseen) {
    std::string names;
    for (const auto& u : unseen) names += (names.empty() ? "" : ", ") + u;
    throw PredictError("units not seen during fitting: " + names +
                       " (pass --allow-unseen-units to use the fallback)");
  }

  std::ofstream out(a.out);
  if (!out) throw Error("cannot write file: " + a.out);
  out << "row," << unit_col << ",leaf,cluster,prediction";
  if (a.allow_unseen) out << ",fallback";
  out << '\n';

  Eigen::VectorXd x(covs.size());
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where =
        a.data + ": row " + std::to_string(i + 2) + ", column '";
    for (size_t k = 0; k < xcols.size(); ++k)
      x[static_cast<long>(k)] = parse_double(row[xcols[k]], where + covs[k] + "'");
    int leaf = 0, cluster = 0;
    double value = 0.0;
    bool fallback = false;
    if (m.tree) {
      const int idx = m.tree->unit_index_of(row[ucol]);
      const Prediction p = predict_row(*m.tree, x, idx, a.allow_unseen);
      leaf = p.leaf + 1;
      cluster = p.cluster + 1;
      value = p.value;
      fallback = p.fallback;
    } else {
      const LmmFit& f = *m.lmm;
      int idx = -1;
      for (size_t u = 0; u < f.unit_labels.size(); ++u)
        if (f.unit_labels[u] == row[ucol]) idx = static_cast<int>(u);
      value = f.beta0 + (covs.empty() ? 0.0 : x.dot(f.beta));
      if (idx >= 0) value += f.blup[idx];
      else fallback = true;
    }
    out << (i + 1) << ',' << row[ucol] << ',' << leaf << ',' << cluster << ','
        << format_double(value);
    if (a.allow_unseen) out << ',' << (fallback ? 1 : 0);
    out << '\n';
  }
  std::cout << "predictions: " << a.out << " (" << t.rows.size() << " rows)\n";
  return 0;
}

struct SimArgs {
  int scenario = 1;
  int setting = 1;
  int reps = 100;
  std::vector<std::string> models;
  std::uint64_t seed = 1;
  std::string out;
  int workers = 1;
};

int cmd_simulate(const SimArgs& a) {
  if (a.reps < 1) throw ConfigError("reps must be >= 1");
  if (a.workers < 1) throw ConfigError("workers must be >= 1");
  std::vector<std::string> models = a.models;
  if (models.empty()) models = study_model_names();
  const SimSpec spec = SimSpec::make(a.scenario, a.setting, a.reps, a.seed);
  const StudyResult res = run_study({spec}, models, a.workers);
  write_results_csv(res, a.out);
  for (const auto& f : res.failures)
    std::cerr << "warning: scenario " << f.scenario << " setting " << f.setting << " rep "
              << f.rep << " model " << f.model << " failed: " << f.message << "\n";
  std::cout << "results: " << a.out << " (" << res.rows.size() << " rows";
  if (!res.failures.empty()) std::cout << ", " << res.failures.size() << " failures";
  std::cout << ")\n";
  return 0;
}

struct ReportArgs {
  std::string in, out, quartiles_out;
};

int cmd_report(const ReportArgs& a) {
  const auto rows = read_results_csv(a.in);
  const auto entries = summarize(rows);
  write_report_markdown(entries, a.out);
  const std::string qp =
      a.quartiles_out.empty() ? default_sibling(a.out, ".quartiles.csv") : a.quartiles_out;
  write_quartiles_csv(entries, qp);
  std::cout << "summary: " << a.out << "\nquartiles: " << qp << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tree-structured fixed-effects regression for clustered data"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "TOML-style config file with [fit]/[simulate] sections; "
                 "flags override file values");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a model to a CSV file");
  fit->add_option("--data", fa.data, "Input CSV file")->required();
  fit->add_option("--outcome", fa.outcome, "Outcome column name")->capture_default_str();
  fit->add_option("--unit", fa.unit, "Unit (cluster) column name")->capture_default_str();
  fit->add_option("--covariates", fa.covariates, "Comma-separated covariate column names")
      ->delimiter(',')
      ->required();
  fit->add_option("--model", fa.model, "Model kind: ttsc|ltsc|ltscb|null|lmm")
      ->capture_default_str();
  fit->add_option("--max-splits", fa.max_splits, "Maximum number of splits S_max")
      ->capture_default_str();
  fit->add_option("--min-bucket", fa.min_bucket,
                  "Minimal observations per terminal node of either tree")
      ->capture_default_str();
  fit->add_option("--max-depth", fa.max_depth, "Maximum tree depth (0 = unlimited)")
      ->capture_default_str();
  fit->add_option("--folds", fa.folds, "Cross-validation folds")->capture_default_str();
  fit->add_flag("--one-se,!--no-one-se", fa.one_se,
                "Apply the one-standard-error rule (default on)");
  fit->add_option("--seed", fa.seed, "RNG seed (fixed default keeps runs reproducible)")
      ->capture_default_str();
  fit->add_option("--out", fa.out, "Output model document (JSON)")->required();
  fit->add_option("--cv-out", fa.cv_out, "CV curve CSV (default: <out>.cv.csv)");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Predict with a fitted model document");
  predict->add_option("--model", pa.model, "Model document (JSON)")->required();
  predict->add_option("--data", pa.data, "Input CSV file")->required();
  predict->add_option("--out", pa.out, "Output predictions CSV")->required();
  predict->add_flag("--allow-unseen-units", pa.allow_unseen,
                    "Use the cluster-share fallback for unknown units");

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run Monte-Carlo replications");
  sim->set_config("--config", "", "TOML-style config file (flags override file values)");
  sim->add_option("--scenario", sa.scenario, "Scenario 1..4")->required();
  sim->add_option("--setting", sa.setting, "Setting 1..6")->capture_default_str();
  sim->add_option("--reps", sa.reps, "Replications")->capture_default_str();
  sim->add_option("--models", sa.models,
                  "Comma-separated models: lmm,ltsc,ltscb,ttsc,null,perfect (default all)")
      ->delimiter(',');
  sim->add_option("--seed", sa.seed, "Base RNG seed")->capture_default_str();
  sim->add_option("--out", sa.out, "Raw results CSV")->required();
  sim->add_option("--workers", sa.workers, "Parallel workers (output is identical for any value)")
      ->capture_default_str();

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Summarize raw simulation results");
  rep->add_option("--in", ra.in, "Raw results CSV from simulate")->required();
  rep->add_option("--out", ra.out, "Markdown summary file")->required();
  rep->add_option("--quartiles-out", ra.quartiles_out,
                  "RMSE quartiles CSV (default: <out>.quartiles.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(fit)) return cmd_fit(fa);
    if (app.got_subcommand(predict)) return cmd_predict(pa);
    if (app.got_subcommand(sim)) return cmd_simulate(sa);
    if (app.got_subcommand(rep)) return cmd_report(ra);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
