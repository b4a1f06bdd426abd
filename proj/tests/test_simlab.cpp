#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "treefe/simlab.hpp"

using namespace treefe;

TEST_CASE("SimSpec::make derives the setting parameters") {
  const auto base = SimSpec::make(1, 1);
  CHECK(base.n == 20);
  CHECK(base.n_i == 50);
  CHECK(base.p == 10);
  CHECK(base.sigma2_eps == 1.0);
  CHECK(SimSpec::make(1, 2).n == 40);
  CHECK(SimSpec::make(1, 2).n_i == 25);
  CHECK(SimSpec::make(1, 3).n == 100);
  CHECK(SimSpec::make(2, 4).p == 100);
  CHECK(SimSpec::make(3, 5).sigma2_eps == 2.0);
  CHECK(SimSpec::make(2, 6).rho == 0.9);
  CHECK(SimSpec::make(3, 6).n_clusters == 6);
  CHECK(SimSpec::make(4, 1).n_clusters == 3);
  CHECK_THROWS_AS(SimSpec::make(5, 1), ConfigError);
  CHECK_THROWS_AS(SimSpec::make(1, 7), ConfigError);
}

TEST_CASE("generate: covariate moments and kinds") {
  const auto spec = SimSpec::make(1, 1, 1, 7);
  auto [d, truth] = generate(spec, 0);
  REQUIRE(d.n_rows() == 1000);
  REQUIRE(d.n_covariates() == 10);
  for (int k = 0; k < 6; ++k) {
    const double mean = d.X.col(k).mean();
    const double var = (d.X.col(k).array() - mean).square().sum() / (d.n_rows() - 1);
    CHECK(std::abs(mean) < 0.1);
    CHECK(std::abs(var - 1.0) < 0.15);
    CHECK(d.meta[k].kind == CovKind::continuous);
  }
  for (int k = 6; k < 10; ++k) {
    CHECK(d.meta[k].kind == CovKind::binary);
    const double mean = d.X.col(k).mean();
    CHECK(std::abs(mean - 0.5) < 0.1);
  }
  CHECK(truth.informative == std::vector<int>{0, 1, 6});
}

TEST_CASE("generate: scenario predictors") {
  SECTION("scenario 1 is linear with the stated coefficients") {
    auto [d, truth] = generate(SimSpec::make(1, 1, 1, 11), 0);
    for (long i = 0; i < 20; ++i) {
      const double expect = 0.8 * d.X(i, 0) + 0.4 * d.X(i, 1) + 0.8 * d.X(i, 6);
      CHECK(truth.eta_x[i] == Catch::Approx(expect).margin(1e-12));
    }
    CHECK(truth.oracle.linear_idx == std::vector<int>{0, 1, 6});
    CHECK(truth.oracle.n_clusters == 20);  // every unit its own effect
  }

  SECTION("scenario 2 assigns the stated region effects") {
    auto [d, truth] = generate(SimSpec::make(2, 1, 1, 11), 0);
    for (long i = 0; i < 200; ++i) {
      double expect;
      if (d.X(i, 0) <= 0.0)
        expect = d.X(i, 1) <= 0.0 ? -1.35 : -0.45;
      else
        expect = d.X(i, 6) == 0.0 ? 0.45 : 1.35;
      CHECK(truth.eta_x[i] == Catch::Approx(expect).margin(1e-12));
    }
  }

  SECTION("scenario 3 builds three clusters with the stated intercepts") {
    auto [d, truth] = generate(SimSpec::make(3, 1, 1, 11), 0);
    CHECK(truth.oracle.n_clusters == 3);
    for (int u = 0; u < 20; ++u) {
      const int c = truth.oracle.cluster_of_unit[u];
      const double expect = c == 0 ? -1.25 : (c == 1 ? 0.0 : 1.25);
      CHECK(truth.eta_i[u] == expect);
    }
  }

  SECTION("scenario 3 setting 6 uses six clusters") {
    auto [d, truth] = generate(SimSpec::make(3, 6, 1, 11), 0);
    CHECK(truth.oracle.n_clusters == 6);
    std::set<double> values(truth.eta_i.data(), truth.eta_i.data() + 20);
    for (double v : values)
      CHECK((v == -1.5 || v == -0.9 || v == -0.3 || v == 0.3 || v == 0.9 || v == 1.5));
  }

  SECTION("setting 6 induces the stated correlation with the unit effects") {
    auto [d, truth] = generate(SimSpec::make(1, 6, 1, 13), 0);
    Eigen::VectorXd b_row(d.n_rows());
    for (long i = 0; i < d.n_rows(); ++i) b_row[i] = truth.eta_i[d.unit[i]];
    for (int k : {0, 1}) {
      const Eigen::VectorXd x = d.X.col(k);
      const double mx = x.mean(), mb = b_row.mean();
      const double cov = ((x.array() - mx) * (b_row.array() - mb)).sum();
      const double corr = cov / std::sqrt((x.array() - mx).square().sum() *
                                          (b_row.array() - mb).square().sum());
      CHECK(std::abs(corr - 0.9) < 0.05);
    }
    // a non-correlated covariate stays near zero correlation
    const Eigen::VectorXd x3 = d.X.col(2);
    const double cov3 = ((x3.array() - x3.mean()) * (b_row.array() - b_row.mean())).sum();
    const double corr3 = cov3 / std::sqrt((x3.array() - x3.mean()).square().sum() *
                                          (b_row.array() - b_row.mean()).square().sum());
    CHECK(std::abs(corr3) < 0.15);
  }

  SECTION("zero error variance reproduces the predictor exactly") {
    SimSpec spec = SimSpec::make(4, 1, 1, 19);
    spec.sigma2_eps = 0.0;
    auto [d, truth] = generate(spec, 0);
    for (long i = 0; i < d.n_rows(); ++i)
      CHECK(d.y[i] == truth.eta_i[d.unit[i]] + truth.eta_x[i]);
  }

  SECTION("identical spec and rep give identical data") {
    auto [d1, t1] = generate(SimSpec::make(2, 3, 1, 42), 5);
    auto [d2, t2] = generate(SimSpec::make(2, 3, 1, 42), 5);
    CHECK(d1.y == d2.y);
    CHECK(d1.X == d2.X);
    auto [d3, t3] = generate(SimSpec::make(2, 3, 1, 42), 6);
    CHECK(d1.y != d3.y);
  }
}

TEST_CASE("rmse_x") {
  std::mt19937_64 rng(91);
  const auto d = testutil::random_dataset(rng, 4, 5, 1);
  Eigen::VectorXd eta = Eigen::VectorXd::NullaryExpr(d.n_rows(), [&] {
    static std::normal_distribution<double> nd;
    return nd(rng);
  });
  SECTION("exact match gives zero") { CHECK(rmse_x(d, eta, eta) == 0.0); }
  SECTION("constant offsets vanish") {
    const Eigen::VectorXd shifted = eta.array() + 3.7;
    CHECK(rmse_x(d, eta, shifted) <= 1e-12);
  }
  SECTION("hand-evaluated two-unit case") {
    Eigen::VectorXd y(4);
    y << 0, 0, 0, 0;
    Eigen::MatrixXd X(4, 0);
    const auto dd = make_dataset(y, {"a", "a", "b", "b"}, X, {});
    Eigen::VectorXd t(4), e(4);
    t << 1, 1, 0, 0;
    e << 1, 0, 0, 0;
    // centered true: (.5,.5,-.5,-.5); centered est: (.75,-.25,-.25,-.25)
    // diff: (-.25,.75,-.25,-.25); weighted mean square = 0.1875
    CHECK(rmse_x(dd, t, e) == Catch::Approx(std::sqrt(0.1875)).margin(1e-12));
  }
}

TEST_CASE("rmse_i") {
  Eigen::VectorXd y(4);
  y << 0, 0, 0, 0;
  Eigen::MatrixXd X(4, 0);
  const auto d = make_dataset(y, {"a", "a", "b", "b"}, X, {});
  Eigen::VectorXd eta_i(2), eta_x(4);
  eta_i << 1.0, -1.0;
  eta_x << 0.5, -0.5, 0.25, -0.25;

  SECTION("matching decomposition gives zero") {
    CHECK(rmse_i(d, eta_i, eta_x, eta_i, eta_x) <= 1e-15);
  }
  SECTION("moving a constant between parts changes neither RMSE") {
    const double c = 0.9;
    const Eigen::VectorXd ei = eta_i.array() - c;
    const Eigen::VectorXd ex = eta_x.array() + c;
    CHECK(rmse_i(d, eta_i, eta_x, ei, ex) <= 1e-12);
    CHECK(rmse_x(d, eta_x, ex) <= 1e-12);
  }
  SECTION("null model against clustered truth matches the direct formula") {
    const auto spec = SimSpec::make(3, 1, 1, 77);
    auto [dd, truth] = generate(spec, 0);
    AnyModel null;
    null.kind = ModelKind::nullmodel;
    null.tree = fit_null(dd);
    const auto dec = decompose(null, dd);
    const double got = rmse_i(dd, truth.eta_i, truth.eta_x, dec.eta_i, dec.eta_x);
    // direct evaluation: estimated per-unit expectation is the grand mean
    const double gm_t = unit_weighted_mean(dd, truth.eta_x);
    const double grand = dd.y.mean();
    double acc = 0.0;
    for (int u = 0; u < dd.n_units(); ++u) {
      const double diff = truth.eta_i[u] + gm_t - grand;
      acc += diff * diff;
    }
    CHECK(got == Catch::Approx(std::sqrt(acc / dd.n_units())).margin(1e-12));
  }
}

TEST_CASE("tpr_fpr") {
  const std::vector<int> informative{0, 1, 6};
  SECTION("partial selection") {
    auto [tpr, fpr] = tpr_fpr(informative, {0, 6}, 10);
    CHECK(tpr == Catch::Approx(2.0 / 3.0));
    CHECK(fpr == 0.0);
  }
  SECTION("select everything") {
    std::set<int> all;
    for (int k = 0; k < 10; ++k) all.insert(k);
    auto [tpr, fpr] = tpr_fpr(informative, all, 10);
    CHECK(tpr == 1.0);
    CHECK(fpr == 1.0);
  }
  SECTION("select nothing") {
    auto [tpr, fpr] = tpr_fpr(informative, {}, 10);
    CHECK(tpr == 0.0);
    CHECK(fpr == 0.0);
  }
  SECTION("invariant to listing order") {
    const std::vector<int> reversed{6, 1, 0};
    auto a = tpr_fpr(informative, {1, 3}, 10);
    auto b = tpr_fpr(reversed, {3, 1}, 10);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SimSpec small_spec(int scenario, int reps, std::uint64_t seed) {
  SimSpec s = SimSpec::make(scenario, 1, reps, seed);
  s.n = 6;
  s.n_i = 10;
  s.p = 7;
  return s;
}

}  // namespace

TEST_CASE("run_study") {
  SECTION("single null replication reports zero rates and closed-form RMSE") {
    const auto spec = SimSpec::make(3, 1, 1, 55);
    const auto res = run_study({spec}, {"null"});
    REQUIRE(res.rows.size() == 1);
    REQUIRE(res.failures.empty());
    const auto& r = res.rows[0];
    CHECK(r.model == "null");
    CHECK(r.tpr == 0.0);
    CHECK(r.fpr == 0.0);
    auto [d, truth] = generate(spec, 0);
    AnyModel null;
    null.kind = ModelKind::nullmodel;
    null.tree = fit_null(d);
    const auto dec = decompose(null, d);
    CHECK(r.rmse_x == Catch::Approx(rmse_x(d, truth.eta_x, dec.eta_x)).margin(1e-12));
    CHECK(r.rmse_i ==
          Catch::Approx(rmse_i(d, truth.eta_i, truth.eta_x, dec.eta_i, dec.eta_x))
              .margin(1e-12));
  }

  SECTION("identical seeds give byte-identical result files") {
    const auto spec = small_spec(4, 3, 123);
    const auto res1 = run_study({spec}, {"null", "ttsc"});
    const auto res2 = run_study({spec}, {"null", "ttsc"});
    const auto p1 = (std::filesystem::temp_directory_path() / "treefe_r1.csv").string();
    const auto p2 = (std::filesystem::temp_directory_path() / "treefe_r2.csv").string();
    write_results_csv(res1, p1);
    write_results_csv(res2, p2);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
  }

  SECTION("output is independent of the worker count") {
    const auto spec = small_spec(1, 4, 321);
    const auto seq = run_study({spec}, {"ttsc", "lmm"}, 1);
    const auto par = run_study({spec}, {"ttsc", "lmm"}, 4);
    REQUIRE(seq.rows.size() == par.rows.size());
    for (size_t i = 0; i < seq.rows.size(); ++i) {
      CHECK(seq.rows[i].model == par.rows[i].model);
      CHECK(seq.rows[i].rep == par.rows[i].rep);
      CHECK(seq.rows[i].rmse_x == par.rows[i].rmse_x);
      CHECK(seq.rows[i].rmse_i == par.rows[i].rmse_i);
    }
  }

  SECTION("results CSV round-trips") {
    const auto spec = small_spec(2, 2, 9);
    const auto res = run_study({spec}, {"null", "perfect", "lmm"});
    const auto path = (std::filesystem::temp_directory_path() / "treefe_rt.csv").string();
    write_results_csv(res, path);
    const auto rows = read_results_csv(path);
    REQUIRE(rows.size() == res.rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].model == res.rows[i].model);
      CHECK(rows[i].rmse_x == res.rows[i].rmse_x);
      CHECK(std::isnan(rows[i].tpr) == std::isnan(res.rows[i].tpr));
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("perfect-model RMSE shrinks with the error variance") {
  std::vector<double> med;
  for (double s2 : {1.0, 0.1, 0.01}) {
    std::vector<double> vals;
    for (int rep = 0; rep < 20; ++rep) {
      SimSpec spec = small_spec(4, 20, 1234);
      spec.sigma2_eps = s2;
      auto [d, truth] = generate(spec, rep);
      const auto fit = fit_perfect(d, truth.oracle);
      vals.push_back(rmse_x(d, truth.eta_x, fit.eta_x) +
                     rmse_i(d, truth.eta_i, truth.eta_x, fit.eta_i, fit.eta_x));
    }
    med.push_back(quantile(vals, 0.5));
  }
  CHECK(med[1] < med[0]);
  CHECK(med[2] < med[1]);
}

TEST_CASE("quantile interpolates order statistics") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == Catch::Approx(2.5));
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.25) == Catch::Approx(1.75));
  CHECK(quantile({5.0}, 0.75) == 5.0);
}

TEST_CASE("summarize aggregates by scenario, setting and model") {
  std::vector<StudyRow> rows;
  for (int rep = 0; rep < 4; ++rep) {
    StudyRow r;
    r.scenario = 1;
    r.setting = 1;
    r.rep = rep;
    r.model = "ttsc";
    r.rmse_x = 1.0 + rep;  // 1,2,3,4
    r.rmse_i = 2.0;
    r.tpr = rep < 2 ? 1.0 : 0.5;
    r.fpr = 0.0;
    rows.push_back(r);
  }
  const auto entries = summarize(rows);
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].n_reps == 4);
  CHECK(entries[0].tpr_mean == Catch::Approx(0.75));
  CHECK(entries[0].rx_med == Catch::Approx(2.5));
  CHECK(entries[0].rx_q25 == Catch::Approx(1.75));
}
