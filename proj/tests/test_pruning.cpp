#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "treefe/pruning.hpp"

using namespace treefe;

TEST_CASE("select_split_counts") {
  SECTION("flat curve picks zero splits") {
    CvCurve c;
    c.mean_loglik = {-1.0, -1.0, -1.0};
    c.se = {0.1, 0.1, 0.1};
    select_split_counts(c);
    CHECK(c.s_max_ll == 0);
    CHECK(c.s_1se == 0);
  }
  SECTION("1SE walks back from the maximum") {
    CvCurve c;
    c.mean_loglik = {-2.0, -1.05, -1.0, -1.2};
    c.se = {0.1, 0.1, 0.1, 0.1};
    select_split_counts(c);
    CHECK(c.s_max_ll == 2);
    CHECK(c.s_1se == 1);  // -1.05 >= -1.0 - 0.1
  }
  SECTION("ties resolve to the smallest split count") {
    CvCurve c;
    c.mean_loglik = {-1.0, -0.5, -0.5};
    c.se = {0.0, 0.0, 0.0};
    select_split_counts(c);
    CHECK(c.s_max_ll == 1);
    CHECK(c.s_1se == 1);
  }
}

TEST_CASE("cv_curve on constant outcomes collapses to a single entry") {
  Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 2.0);
  Eigen::MatrixXd X(8, 1);
  X << 1, 2, 3, 4, 5, 6, 7, 8;
  std::vector<std::string> labels{"a", "a", "a", "a", "b", "b", "b", "b"};
  const auto d = make_dataset(y, labels, X, {"x1"});
  FitConfig cfg;
  cfg.folds = 2;
  cfg.max_splits = 4;
  const auto curve = cv_curve(d, cfg);
  REQUIRE(curve.size() == 1);
  CHECK(curve.s_1se == 0);
  CHECK(curve.s_max_ll == 0);
}

TEST_CASE("cv_curve drops and counts test rows with training-absent units") {
  // unit "solo" has a single row; in one fold that row is the test set while
  // the training data lacks the unit entirely
  std::mt19937_64 rng(71);
  std::normal_distribution<double> norm;
  const long N = 11;
  Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(N, [&] { return norm(rng); });
  Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(N, 1, [&] { return norm(rng); });
  std::vector<std::string> labels;
  for (int i = 0; i < 5; ++i) labels.push_back("a");
  for (int i = 0; i < 5; ++i) labels.push_back("b");
  labels.push_back("solo");
  const auto d = make_dataset(y, labels, X, {"x1"});
  FitConfig cfg;
  cfg.folds = 2;
  cfg.max_splits = 2;
  const auto curve = cv_curve(d, cfg);
  CHECK(curve.skipped_rows == 1);
}

TEST_CASE("cv_curve is reproducible for a fixed seed") {
  std::mt19937_64 rng(72);
  const auto d = testutil::random_dataset(rng, 5, 8, 2, 1.0, 1.0, 1.0);
  FitConfig cfg;
  cfg.folds = 4;
  cfg.max_splits = 4;
  cfg.min_bucket = 2;
  cfg.seed = 7;
  const auto a = cv_curve(d, cfg);
  const auto b = cv_curve(d, cfg);
  CHECK(a.mean_loglik == b.mean_loglik);
  CHECK(a.se == b.se);
  CHECK(a.s_1se == b.s_1se);
  cfg.seed = 8;
  const auto c = cv_curve(d, cfg);
  CHECK(a.mean_loglik != c.mean_loglik);
}

TEST_CASE("fit_pruned") {
  SECTION("S_max = 0 returns the global-intercept model") {
    std::mt19937_64 rng(73);
    const auto d = testutil::random_dataset(rng, 4, 6, 1);
    FitConfig cfg;
    cfg.max_splits = 0;
    cfg.folds = 3;
    const auto m = fit_pruned(d, cfg);
    CHECK(m.cov_tree.n_splits() == 0);
    CHECK(m.unit_tree.n_clusters() == 1);
    CHECK(m.beta0[0] == Catch::Approx(d.y.mean()).margin(1e-12));
  }

  SECTION("one_se never selects more splits and respects the curve") {
    std::mt19937_64 rng(74);
    for (int trial = 0; trial < 5; ++trial) {
      const auto d = testutil::random_dataset(rng, 6, 10, 2, 1.5, 1.0, 1.0);
      FitConfig cfg;
      cfg.max_splits = 6;
      cfg.min_bucket = 3;
      cfg.folds = 4;
      cfg.seed = 100 + trial;
      cfg.one_se = true;
      const auto m1 = fit_pruned(d, cfg);
      cfg.one_se = false;
      const auto m2 = fit_pruned(d, cfg);
      REQUIRE(m1.cv.has_value());
      CHECK(m1.cv->s_1se <= m1.cv->s_max_ll);
      const int s1 = m1.cov_tree.n_splits() + static_cast<int>(m1.unit_tree.cuts.size());
      const int s2 = m2.cov_tree.n_splits() + static_cast<int>(m2.unit_tree.cuts.size());
      CHECK(s1 <= s2);
      CHECK(s1 <= cfg.max_splits);
      CHECK(s1 <= m1.cv->size() - 1);
      CHECK(m1.adjusted());
    }
  }

  SECTION("pure-noise data prunes to zero splits in at least 90% of runs") {
    int zero = 0;
    const int runs = 50;
    for (int r = 0; r < runs; ++r) {
      std::mt19937_64 rng(500 + r);
      const auto d = testutil::random_dataset(rng, 8, 10, 3, 0.0, 1.0, 0.0);
      FitConfig cfg;
      cfg.max_splits = 5;
      cfg.min_bucket = 8;
      cfg.folds = 5;
      cfg.seed = 900 + r;
      const auto m = fit_pruned(d, cfg);
      const int s = m.cov_tree.n_splits() + static_cast<int>(m.unit_tree.cuts.size());
      zero += s == 0 ? 1 : 0;
    }
    INFO("zero-split runs: " << zero << "/" << runs);
    CHECK(zero >= 45);
  }
}
