#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fairopt/harness.hpp"

using namespace fairopt;

namespace {

ParetoPoint pt(double acc, double fair, double eps = 0.1, int g = 1) {
  ParetoPoint p;
  p.accuracy = acc;
  p.fairness = fair;
  p.epsilon = eps;
  p.level_g = g;
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset small_regression(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd x(n, 2), z(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    z(i, 0) = coin(rng) ? 1.0 : 0.0;
    x(i, 0) = nd(rng) + z(i, 0);
    x(i, 1) = nd(rng);
    y(i) = x(i, 0) - 0.5 * x(i, 1) + 0.3 * nd(rng);
  }
  return make_dataset(x, y, z);
}

ExperimentConfig regression_config() {
  ExperimentConfig cfg;
  cfg.task = Task::regression;
  cfg.levels = {{1, 1}};
  cfg.epsilons = {0.05};
  cfg.lambdas = {100};
  cfg.folds = 2;
  cfg.repeats = 1;
  cfg.seed = 99;
  cfg.include_baseline = false;
  return cfg;
}

std::string temp_prefix(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fairopt_test_harness";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Pareto, StrictDomination) {
  const auto f = pareto_frontier({pt(0.9, 0.5), pt(0.8, 0.6)});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].accuracy, 0.9);
}

TEST(Pareto, SinglePoint) {
  const auto f = pareto_frontier({pt(0.7, 0.2)});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].fairness, 0.2);
}

TEST(Pareto, AllOnFrontierSortedByFairness) {
  const auto f = pareto_frontier({pt(0.9, 0.5), pt(0.85, 0.3), pt(0.8, 0.1)});
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].fairness, 0.1);
  EXPECT_EQ(f[1].fairness, 0.3);
  EXPECT_EQ(f[2].fairness, 0.5);
}

TEST(Pareto, LowerAccuracyBetter) {
  auto a = pt(1.0, 0.5), b = pt(2.0, 0.6);
  a.higher_accuracy_better = b.higher_accuracy_better = false;
  const auto f = pareto_frontier({a, b});
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].accuracy, 1.0);
}

TEST(Pareto, Properties) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> grid(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ParetoPoint> pts;
    const int n = 1 + trial % 12;
    for (int i = 0; i < n; ++i) {
      // coarse grid on half the trials to force ties
      pts.push_back(trial % 2 ? pt(u(rng), u(rng), i) : pt(grid(rng) / 5.0, grid(rng) / 5.0, i));
    }
    const auto f = pareto_frontier(pts);
    ASSERT_FALSE(f.empty());
    for (const auto& a : f) {
      for (const auto& b : pts) {
        const bool dominated = (b.accuracy >= a.accuracy && b.fairness <= a.fairness) &&
                               (b.accuracy > a.accuracy || b.fairness < a.fairness);
        EXPECT_FALSE(dominated);
      }
      EXPECT_TRUE(std::any_of(pts.begin(), pts.end(), [&](const ParetoPoint& p) {
        return p.accuracy == a.accuracy && p.fairness == a.fairness && p.epsilon == a.epsilon;
      }));
    }
    const auto again = pareto_frontier(f);
    ASSERT_EQ(again.size(), f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      EXPECT_EQ(again[i].accuracy, f[i].accuracy);
      EXPECT_EQ(again[i].fairness, f[i].fairness);
    }
  }
}

TEST(FairTest, ZeroRhoMatchesTraditional) {
  const Eigen::Vector3d xi(0.3, -0.1, 0.9), psi(1.0, 2.0, -1.0);
  const auto r = fair_hypothesis_test(xi, psi, 0.0, 0.05);
  EXPECT_EQ(r.p_fair, r.p_traditional);
}

TEST(FairTest, ZeroXiGivesOne) {
  const auto r = fair_hypothesis_test(Eigen::Vector4d::Zero(), Eigen::Vector4d(1, 2, 3, 4), 0.0, 0.05);
  EXPECT_EQ(r.p_traditional, 1.0);
  EXPECT_FALSE(r.reject_traditional);
}

TEST(FairTest, HandArithmetic) {
  const auto r = fair_hypothesis_test(Eigen::Vector4d::Constant(0.5), Eigen::Vector4d::Constant(0.5), 0.6, 0.05);
  // 2 Phi(-0.5)
  EXPECT_NEAR(r.p_fair, 0.6170750774519739, 1e-12);
  EXPECT_NEAR(r.p_fair, 0.617, 5e-4);
  EXPECT_THROW(fair_hypothesis_test(Eigen::Vector4d::Zero(), Eigen::Vector4d::Zero(), 1.0, 0.05),
               ParameterError);
}

TEST(FairTest, SimulationSizeWithZeroRho) {
  const auto r = simulate_test_power(0.0, 0.3, 20, 10'000, 0.05, 1);
  EXPECT_EQ(r.size_fair, r.size_traditional);
  EXPECT_EQ(r.power_fair, r.power_traditional);
  EXPECT_THROW(simulate_test_power(0.5, 0.3, 20, 9'999, 0.05, 1), ParameterError);
}

TEST(FairTest, AnalyticPowerAtZeroIsLevel) {
  EXPECT_NEAR(analytic_power(0.0, 0.05), 0.05, 1e-12);
  EXPECT_NEAR(analytic_power(1.959963984540054, 0.05), 0.5 + 0.5 * std::erfc(3.919927969080108 / std::sqrt(2.0)), 1e-9);
}

TEST(Folds, StratifiedBalanced) {
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y(i) = i < 8 ? 1.0 : -1.0;
  std::mt19937_64 rng(5);
  const auto fold = make_folds(y, true, 4, rng);
  for (int f = 0; f < 4; ++f) {
    int pos = 0, neg = 0;
    for (int i = 0; i < 20; ++i) {
      if (fold[i] != f) continue;
      (y(i) > 0 ? pos : neg) += 1;
    }
    EXPECT_EQ(pos, 2);
    EXPECT_EQ(neg, 3);
  }
}

TEST(Folds, SeedDeterminesSplit) {
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(30, 0, 29);
  std::mt19937_64 a(7), b(7), c(8);
  const auto fa = make_folds(y, false, 3, a);
  EXPECT_EQ(fa, make_folds(y, false, 3, b));
  EXPECT_NE(fa, make_folds(y, false, 3, c));
}

TEST(Config, ParsesJsonAndRequiresSeed) {
  const auto j = nlohmann::json::parse(R"({
    "task": "quantile", "levels": [[1,1],[2,2]], "epsilons": [0.1, "inf"],
    "lambdas": [10], "folds": 3, "repeats": 2, "seed": 42,
    "schedule": {"kind": "bounded", "alpha": 2.5},
    "solver": {"feas_tol": 1e-9}})");
  const auto cfg = parse_config(j);
  EXPECT_EQ(cfg.task, Task::quantile);
  EXPECT_EQ(cfg.levels.size(), 2u);
  EXPECT_TRUE(std::isinf(cfg.epsilons[1]));
  EXPECT_EQ(*cfg.seed, 42u);
  EXPECT_EQ(cfg.schedule.kind, ScheduleKind::bounded);
  EXPECT_FALSE(cfg.alpha_from_data);
  EXPECT_EQ(cfg.solver.feas_tol, 1e-9);
  EXPECT_TRUE(cfg.clamp());
  EXPECT_NO_THROW(cfg.validate());
  auto no_seed = cfg;
  no_seed.seed.reset();
  EXPECT_THROW(no_seed.validate(), ParameterError);
  auto bad_level = cfg;
  bad_level.levels = {{3, 1}};
  EXPECT_THROW(bad_level.validate(), ParameterError);
}

TEST(Config, RepositoryConfigsLoad) {
  const std::string dir = std::string(FAIROPT_SOURCE_DIR) + "/configs/";
  for (const char* name : {"wine_cv.json", "synthetic_cv.json", "synthetic_quantile.json"}) {
    const auto cfg = load_config(dir + name);
    EXPECT_NO_THROW(cfg.validate()) << name;
    EXPECT_TRUE(std::filesystem::exists(cfg.data_path)) << name;
  }
}

TEST(RunCv, CountsSolvesAndPoints) {
  const Dataset ds = small_regression(1, 60);
  const auto out = run_cv(regression_config(), ds);
  ASSERT_EQ(out.points.size(), 1u);
  EXPECT_EQ(out.points[0].evaluations + out.points[0].failures, 2);
  EXPECT_FALSE(out.points[0].flagged);
  EXPECT_EQ(out.fairness_method, "binary");
}

TEST(RunCv, BaselinePointAdded) {
  auto cfg = regression_config();
  cfg.include_baseline = true;
  const auto out = run_cv(cfg, small_regression(2, 60));
  ASSERT_EQ(out.points.size(), 2u);
  EXPECT_TRUE(out.points[1].is_baseline());
}

TEST(RunCv, SlackEpsilonMatchesBaseline) {
  auto cfg = regression_config();
  cfg.epsilons = {1e6};
  cfg.include_baseline = true;
  const auto out = run_cv(cfg, small_regression(3, 80));
  ASSERT_EQ(out.points.size(), 2u);
  EXPECT_NEAR(out.points[0].accuracy, out.points[1].accuracy, 1e-6);
  EXPECT_NEAR(out.points[0].fairness, out.points[1].fairness, 1e-6);
}

TEST(RunCv, WorkerCountDoesNotChangeOutput) {
  auto cfg = regression_config();
  cfg.levels = {{1, 1}, {1, 2}};
  cfg.epsilons = {0.05, 0.5};
  const Dataset ds = small_regression(4, 60);
  const auto one = run_cv(cfg, ds);
  cfg.workers = 3;
  const auto three = run_cv(cfg, ds);
  ASSERT_EQ(one.points.size(), three.points.size());
  for (std::size_t i = 0; i < one.points.size(); ++i) {
    EXPECT_EQ(one.points[i].accuracy, three.points[i].accuracy);
    EXPECT_EQ(one.points[i].fairness, three.points[i].fairness);
  }
}

TEST(Emit, CsvRoundTripAndSeed) {
  const auto cfg = regression_config();
  std::vector<ParetoPoint> pts{pt(0.123456789012345, 0.3), pt(0.8, 0.1, 0.5, 2)};
  pts.push_back(pt(0.95, 0.4, std::numeric_limits<double>::infinity(), 0));
  pts.back().level_h = 0;
  const auto front = pareto_frontier(pts);
  const std::string prefix = temp_prefix("emit");
  emit_results(pts, front, cfg, prefix);
  const auto back = read_points_csv(prefix + ".csv");
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(back[i].accuracy, pts[i].accuracy, 1e-12);
    EXPECT_NEAR(back[i].fairness, pts[i].fairness, 1e-12);
    EXPECT_EQ(back[i].epsilon, pts[i].epsilon);
  }
  const auto meta = nlohmann::json::parse(slurp(prefix + ".json"));
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 99u);
  EXPECT_EQ(meta.at("version").get<std::string>(), kVersion);
  EXPECT_TRUE(meta.contains("solver_options"));
  EXPECT_TRUE(meta.contains("schedule"));
}

TEST(Emit, SameSeedSameFiles) {
  auto cfg = regression_config();
  const Dataset ds = small_regression(5, 50);
  const std::string a = temp_prefix("det_a"), b = temp_prefix("det_b");
  for (const auto& prefix : {a, b}) {
    const auto out = run_cv(cfg, ds);
    emit_results(out.points, pareto_frontier(out.points), cfg, prefix);
  }
  EXPECT_EQ(slurp(a + ".csv"), slurp(b + ".csv"));
  EXPECT_EQ(slurp(a + ".json"), slurp(b + ".json"));
}

TEST(TrainRule, EpsilonMonotoneOnFullData) {
  const Dataset ds = small_regression(6, 80);
  const auto cfg = regression_config();
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.01, 0.03, 0.1, 0.3, 1.0}) {
    const auto tr = train_rule(cfg, ds, 1, 1, eps, 100);
    EXPECT_EQ(tr.solution.status, SolveStatus::optimal);
    EXPECT_LE(tr.solution.objective, prev + 1e-7);
    prev = tr.solution.objective;
  }
}
