#pragma once

// Experiment driver: config, cross-validated sweeps, Pareto frontiers, the fair
// hypothesis test, and CSV/JSON output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fairopt/constraints.hpp"
#include "fairopt/data_model.hpp"
#include "fairopt/error.hpp"
#include "fairopt/fairness_eval.hpp"
#include "fairopt/moments.hpp"
#include "fairopt/solvers.hpp"

namespace fairopt {

inline constexpr const char* kVersion = "0.1.0";

enum class Task { svm, regression, quantile };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::svm: return "svm";
    case Task::regression: return "regression";
    case Task::quantile: return "quantile";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  if (s == "svm" || s == "classification") return Task::svm;
  if (s == "regression") return Task::regression;
  if (s == "quantile") return Task::quantile;
  throw ParameterError("unknown task '" + s + "'");
}

struct FeatureMapConfig {
  std::string kind = "affine";  // affine | linear | polynomial
  int degree = 2;
  bool include_z = false;

  FeatureMapSpec build(Eigen::Index px, Eigen::Index r) const {
    if (kind == "affine") return FeatureMapSpec::affine(px, r);
    if (kind == "linear") return FeatureMapSpec::linear(px, r);
    if (kind == "polynomial") return FeatureMapSpec::polynomial(px, r, degree, include_z);
    throw ParameterError("unknown feature map '" + kind + "'");
  }
};

struct ExperimentConfig {
  std::string data_path;
  Schema schema;
  Task task = Task::svm;
  double pinball_over = 1.0;
  double pinball_under = 2.0;
  std::vector<std::pair<int, int>> levels{{1, 1}};
  std::vector<double> epsilons{0.1};
  std::vector<double> lambdas{10.0};
  DeltaSchedule schedule;  // epsilon field is overwritten per grid point
  bool alpha_from_data = true;
  FairnessMode mode = FairnessMode::disparate_impact;
  std::optional<bool> binary_reduction;
  FeatureMapConfig feature_map;
  int folds = 5;
  int repeats = 5;
  std::optional<std::uint64_t> seed;
  bool include_baseline = true;
  std::optional<bool> clamp_negative;  // default: on for the quantile task
  int workers = 1;
  SolverOptions solver;

  LossSpec loss() const {
    switch (task) {
      case Task::svm: return LossSpec::hinge();
      case Task::regression: return LossSpec::squared();
      case Task::quantile: return LossSpec::pinball(pinball_over, pinball_under);
    }
    return LossSpec::squared();
  }

  bool clamp() const { return clamp_negative.value_or(task == Task::quantile); }

  void validate() const {
    if (levels.empty() || epsilons.empty() || lambdas.empty()) {
      throw ParameterError("level, epsilon and lambda grids must be nonempty");
    }
    for (auto [g, h] : levels) {
      if (g < 1 || h < 1 || g > 2 || h > 2) {
        throw ParameterError("levels must lie in {1,2} x {1,2}");
      }
    }
    for (double l : lambdas) {
      if (!(l >= 1.0)) throw ParameterError("lambda must be >= 1");
    }
    for (double e : epsilons) {
      if (!(e >= 0.0)) throw ParameterError("epsilon must be >= 0");
    }
    if (folds < 2) throw ParameterError("folds must be >= 2");
    if (repeats < 1) throw ParameterError("repeats must be >= 1");
    if (!seed) throw ParameterError("config must set a seed");
    if (workers < 1) throw ParameterError("workers must be >= 1");
  }
};

namespace detail {

inline std::vector<double> json_doubles(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& v : j) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "Infinity") {
        out.push_back(std::numeric_limits<double>::infinity());
        continue;
      }
      const auto d = parse_double(s);
      if (!d) throw ParameterError("not a number: '" + s + "'");
      out.push_back(*d);
    } else {
      out.push_back(v.get<double>());
    }
  }
  return out;
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  const std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return p;
  return (base / path).lexically_normal().string();
}

}  // namespace detail

inline SolverOptions parse_solver_options(const nlohmann::json& j, SolverOptions o = {}) {
  if (j.contains("feas_tol")) o.feas_tol = j.at("feas_tol").get<double>();
  if (j.contains("obj_tol")) o.obj_tol = j.at("obj_tol").get<double>();
  if (j.contains("ccp_step_tol")) o.ccp_step_tol = j.at("ccp_step_tol").get<double>();
  if (j.contains("ccp_max_iter")) o.ccp_max_iter = j.at("ccp_max_iter").get<int>();
  if (j.contains("max_newton")) o.barrier.max_newton = j.at("max_newton").get<int>();
  return o;
}

inline nlohmann::json solver_options_json(const SolverOptions& o) {
  return {{"feas_tol", o.feas_tol},
          {"obj_tol", o.obj_tol},
          {"ccp_step_tol", o.ccp_step_tol},
          {"ccp_max_iter", o.ccp_max_iter},
          {"barrier", {{"t0", o.barrier.t0},
                       {"mu", o.barrier.mu},
                       {"gap_rel", o.barrier.gap_rel},
                       {"gap_abs", o.barrier.gap_abs},
                       {"max_newton", o.barrier.max_newton}}}};
}

/// Relative paths are resolved against `base_dir` (normally the config's directory).
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = "") {
  ExperimentConfig c;
  try {
    if (j.contains("data")) c.data_path = detail::resolve_path(j.at("data").get<std::string>(), base_dir);
    if (j.contains("schema")) {
      const auto& s = j.at("schema");
      c.schema = s.is_string() ? load_schema(detail::resolve_path(s.get<std::string>(), base_dir))
                               : parse_schema(s);
    }
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("pinball")) {
      c.pinball_over = j.at("pinball").value("over", c.pinball_over);
      c.pinball_under = j.at("pinball").value("under", c.pinball_under);
    }
    if (j.contains("levels")) {
      c.levels.clear();
      for (const auto& l : j.at("levels")) c.levels.emplace_back(l.at(0).get<int>(), l.at(1).get<int>());
    }
    if (j.contains("epsilons")) c.epsilons = detail::json_doubles(j.at("epsilons"));
    if (j.contains("lambdas")) c.lambdas = detail::json_doubles(j.at("lambdas"));
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      if (s.is_string()) {
        c.schedule.kind = parse_schedule_kind(s.get<std::string>());
      } else {
        c.schedule.kind = parse_schedule_kind(s.at("kind").get<std::string>());
        if (s.contains("alpha")) {
          c.schedule.alpha = s.at("alpha").get<double>();
          c.alpha_from_data = false;
        }
        c.schedule.M = s.value("M", c.schedule.M);
        c.schedule.sigma2 = s.value("sigma2", c.schedule.sigma2);
        if (s.contains("manual")) {
          for (const auto& row : s.at("manual")) {
            c.schedule.manual[{row.at("m").get<int>(), row.at("q").get<int>()}] =
                row.at("delta").get<double>();
          }
        }
      }
    }
    if (j.contains("mode")) c.mode = parse_fairness_mode(j.at("mode").get<std::string>());
    if (j.contains("binary_reduction") && !j.at("binary_reduction").is_null()) {
      c.binary_reduction = j.at("binary_reduction").get<bool>();
    }
    if (j.contains("feature_map")) {
      const auto& f = j.at("feature_map");
      if (f.is_string()) {
        c.feature_map.kind = f.get<std::string>();
      } else {
        c.feature_map.kind = f.value("kind", c.feature_map.kind);
        c.feature_map.degree = f.value("degree", c.feature_map.degree);
        c.feature_map.include_z = f.value("include_z", c.feature_map.include_z);
      }
    }
    c.folds = j.value("folds", c.folds);
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.include_baseline = j.value("include_baseline", c.include_baseline);
    if (j.contains("clamp_negative")) c.clamp_negative = j.at("clamp_negative").get<bool>();
    c.workers = j.value("workers", c.workers);
    if (j.contains("solver")) c.solver = parse_solver_options(j.at("solver"));
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("malformed config file " + path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

/// One hyperparameter tuple with fold-averaged metrics. The unconstrained
/// baseline is encoded as level (0,0) with epsilon = inf.
struct ParetoPoint {
  int level_g = 1;
  int level_h = 1;
  double epsilon = 0.0;
  double lambda = 1.0;
  double accuracy = 0.0;
  double fairness = 0.0;
  bool higher_accuracy_better = true;
  std::optional<double> eo;
  double mm_hat = 0.0;
  double train_objective = 0.0;
  int evaluations = 0;  // successful fold solves
  int failures = 0;
  bool flagged = false;

  bool is_baseline() const { return level_g == 0 && level_h == 0; }
};

namespace detail {

inline bool better_or_equal_accuracy(const ParetoPoint& a, const ParetoPoint& b) {
  return a.higher_accuracy_better ? a.accuracy >= b.accuracy : a.accuracy <= b.accuracy;
}

inline bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  const bool strictly = a.accuracy != b.accuracy || a.fairness != b.fairness;
  return strictly && better_or_equal_accuracy(a, b) && a.fairness <= b.fairness;
}

inline bool frontier_order(const ParetoPoint& a, const ParetoPoint& b) {
  return std::tie(a.fairness, a.epsilon, a.level_g, a.level_h, a.lambda) <
         std::tie(b.fairness, b.epsilon, b.level_g, b.level_h, b.lambda);
}

}  // namespace detail

/// Non-dominated subset under (better accuracy, lower fairness value), sorted
/// by fairness with ties broken by smaller epsilon, then smaller level.
/// Points without any successful evaluation (NaN metrics) are skipped.
inline std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> out;
  for (const auto& p : points) {
    if (std::isnan(p.accuracy) || std::isnan(p.fairness)) continue;
    const bool dominated = std::any_of(points.begin(), points.end(),
                                       [&](const ParetoPoint& q) { return detail::dominates(q, p); });
    if (!dominated) out.push_back(p);
  }
  std::sort(out.begin(), out.end(), detail::frontier_order);
  return out;
}

namespace detail {

// Portable Fisher-Yates; std::shuffle's draw sequence is library-specific.
inline void shuffle(std::vector<Eigen::Index>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

/// Fold label per row. Classification targets are stratified by class: each
/// class is shuffled and dealt round-robin, continuing across classes.
inline std::vector<int> make_folds(const Eigen::VectorXd& y, bool stratify, int k,
                                   std::mt19937_64& rng) {
  std::vector<int> fold(static_cast<std::size_t>(y.size()), 0);
  std::vector<std::vector<Eigen::Index>> strata;
  if (stratify) {
    std::map<double, std::vector<Eigen::Index>> by;
    for (Eigen::Index i = 0; i < y.size(); ++i) by[y(i)].push_back(i);
    for (auto& [cls, rows] : by) strata.push_back(std::move(rows));
  } else {
    strata.emplace_back(static_cast<std::size_t>(y.size()));
    std::iota(strata[0].begin(), strata[0].end(), 0);
  }
  std::size_t pos = 0;
  for (auto& rows : strata) {
    detail::shuffle(rows, rng);
    for (auto i : rows) fold[static_cast<std::size_t>(i)] = static_cast<int>(pos++ % static_cast<std::size_t>(k));
  }
  return fold;
}

/// Outcome of training one rule on a (standardized) dataset.
struct TrainResult {
  FOSolution solution;
  StandardizationParams standardization;
  ConstraintSet constraints;
};

/// Standardizes `train`, builds the level-(g,h) constraints and solves. g = h = 0
/// trains the unconstrained rule.
inline TrainResult train_rule(const ExperimentConfig& cfg, const Dataset& train, int g, int h,
                              double epsilon, double lambda) {
  auto [std_train, params] = standardize(train);
  const FeatureMapSpec spec = cfg.feature_map.build(std_train.px(), std_train.r());
  FOProblem prob{std_train, spec, cfg.loss(), {}, lambda, cfg.solver};
  if (g > 0 && h > 0) {
    DeltaSchedule sched = cfg.schedule;
    sched.epsilon = epsilon;
    if (cfg.alpha_from_data) sched.alpha = params.alpha;
    ConstraintOptions copts;
    copts.mode = cfg.mode;
    copts.binary_reduction = cfg.binary_reduction;
    prob.constraints = build_constraint_set(std_train, spec, g, h, sched, copts);
  } else {
    prob.constraints.g = 0;
    prob.constraints.h = 0;
  }
  TrainResult out{solve_fo(prob), params, prob.constraints};
  return out;
}

/// Held-out predictions of a trained rule (clamped at zero when requested).
inline Eigen::VectorXd predict(const ExperimentConfig& cfg, const TrainResult& tr,
                               const Dataset& test) {
  const Dataset std_test = tr.standardization.apply(test);
  Eigen::VectorXd s = tr.solution.rule.scores(std_test);
  if (cfg.clamp()) s = s.cwiseMax(0.0);
  return s;
}

inline double accuracy_metric(const ExperimentConfig& cfg, const Eigen::VectorXd& pred,
                              const Dataset& test, double train_y_mean) {
  switch (cfg.task) {
    case Task::svm: return auc(pred, test.y);
    case Task::regression: return out_of_sample_r2(pred, test.y, train_y_mean);
    case Task::quantile: return cfg.loss().risk(pred, test.y);
  }
  return 0.0;
}

inline const char* accuracy_metric_name(Task t) {
  switch (t) {
    case Task::svm: return "auc";
    case Task::regression: return "or2";
    case Task::quantile: return "mean_pinball_risk";
  }
  return "?";
}

struct CvOutput {
  std::vector<ParetoPoint> points;
  std::string fairness_method;
  bool z_standardized = false;
  std::size_t dropped_rows = 0;
  std::size_t n = 0;
};

/// Repeated k-fold sweep over the hyperparameter grid. Work units (repeat,
/// fold, tuple) are independent and written to fixed slots, so the output
/// does not depend on `cfg.workers`.
inline CvOutput run_cv(const ExperimentConfig& cfg, const Dataset& ds) {
  cfg.validate();
  if (cfg.task == Task::svm && ds.target_type != ColumnType::binary) {
    throw DataError("the svm task needs a binary target");
  }

  struct Tuple {
    int g, h;
    double eps, lambda;
  };
  std::vector<Tuple> tuples;
  for (auto [g, h] : cfg.levels) {
    for (double e : cfg.epsilons) {
      for (double l : cfg.lambdas) tuples.push_back({g, h, e, l});
    }
  }
  if (cfg.include_baseline) {
    for (double l : cfg.lambdas) tuples.push_back({0, 0, std::numeric_limits<double>::infinity(), l});
  }

  const int k = cfg.folds;
  std::vector<std::vector<int>> fold_of(static_cast<std::size_t>(cfg.repeats));
  for (int r = 0; r < cfg.repeats; ++r) {
    std::mt19937_64 rng(*cfg.seed + static_cast<std::uint64_t>(r));
    fold_of[static_cast<std::size_t>(r)] = make_folds(ds.y, cfg.task == Task::svm, k, rng);
  }

  struct Eval {
    bool ok = false;
    double acc = 0, fair = 0, mm = 0, obj = 0;
    std::optional<double> eo;
    std::string method;
  };
  const std::size_t splits = static_cast<std::size_t>(cfg.repeats * k);
  std::vector<Eval> evals(splits * tuples.size());

  auto run_unit = [&](std::size_t unit) {
    const std::size_t split = unit / tuples.size();
    const Tuple& tp = tuples[unit % tuples.size()];
    const auto& fold = fold_of[split / static_cast<std::size_t>(k)];
    const int f = static_cast<int>(split % static_cast<std::size_t>(k));
    std::vector<Eigen::Index> tr_rows, te_rows;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      (fold[static_cast<std::size_t>(i)] == f ? te_rows : tr_rows).push_back(i);
    }
    const Dataset train = ds.subset(tr_rows);
    const Dataset test = ds.subset(te_rows);
    Eval& ev = evals[unit];
    try {
      const TrainResult tr = train_rule(cfg, train, tp.g, tp.h, tp.eps, tp.lambda);
      if (!usable(tr.solution, cfg.solver)) return;
      const Eigen::VectorXd pred = predict(cfg, tr, test);
      ev.acc = accuracy_metric(cfg, pred, test, train.y.mean());
      const FairnessReport rep = fairness_report(pred, test);
      ev.fair = rep.ks;
      ev.eo = rep.eo;
      ev.mm = rep.mm_hat;
      ev.method = rep.method;
      ev.obj = tr.solution.objective;
      ev.ok = true;
    } catch (const Error&) {
      ev.ok = false;
    }
  };

  const std::size_t units = evals.size();
  if (cfg.workers <= 1) {
    for (std::size_t u = 0; u < units; ++u) run_unit(u);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t u = static_cast<std::size_t>(w); u < units;
             u += static_cast<std::size_t>(cfg.workers)) {
          run_unit(u);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  CvOutput out;
  out.n = static_cast<std::size_t>(ds.n());
  out.dropped_rows = ds.dropped_rows;
  for (const auto& pv : ds.protected_vars) out.z_standardized |= pv.type == ColumnType::continuous;
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    ParetoPoint p;
    p.level_g = tuples[t].g;
    p.level_h = tuples[t].h;
    p.epsilon = tuples[t].eps;
    p.lambda = tuples[t].lambda;
    p.higher_accuracy_better = cfg.task != Task::quantile;
    double eo_sum = 0.0;
    int eo_count = 0;
    for (std::size_t s = 0; s < splits; ++s) {
      const Eval& ev = evals[s * tuples.size() + t];
      if (!ev.ok) {
        ++p.failures;
        continue;
      }
      ++p.evaluations;
      p.accuracy += ev.acc;
      p.fairness += ev.fair;
      p.mm_hat += ev.mm;
      p.train_objective += ev.obj;
      if (ev.eo) {
        eo_sum += *ev.eo;
        ++eo_count;
      }
      if (out.fairness_method.empty()) out.fairness_method = ev.method;
    }
    if (p.evaluations > 0) {
      const double c = p.evaluations;
      p.accuracy /= c;
      p.fairness /= c;
      p.mm_hat /= c;
      p.train_objective /= c;
    } else {
      p.accuracy = p.fairness = std::numeric_limits<double>::quiet_NaN();
    }
    if (eo_count > 0) p.eo = eo_sum / eo_count;
    p.flagged = p.failures > 0;
    out.points.push_back(p);
  }
  return out;
}

inline CvOutput run_cv(const ExperimentConfig& cfg) {
  if (cfg.data_path.empty()) throw ParameterError("config has no data path");
  return run_cv(cfg, load_csv(cfg.data_path, cfg.schema));
}

struct HypothesisTestResult {
  double p_traditional = 1.0;
  double p_fair = 1.0;
  bool reject_traditional = false;
  bool reject_fair = false;
};

/// 2 Phi(-x) for x >= 0.
inline double two_sided_normal_tail(double x) { return std::erfc(x / std::sqrt(2.0)); }

/// z-test of E(Xi) = 0, and its fair version that removes the part of Xi
/// explained by the protected score Psi (correlation rho).
inline HypothesisTestResult fair_hypothesis_test(const Eigen::VectorXd& xi,
                                                 const Eigen::VectorXd& psi, double rho,
                                                 double a) {
  if (!(std::abs(rho) < 1.0)) throw ParameterError("|rho| must be < 1");
  if (!(a > 0.0 && a < 1.0)) throw ParameterError("test level a must lie in (0,1)");
  if (xi.size() < 1 || psi.size() != xi.size()) throw ShapeError("xi and psi need equal nonzero length");
  const double n = static_cast<double>(xi.size());
  HypothesisTestResult r;
  r.p_traditional = two_sided_normal_tail(std::sqrt(n) * std::abs(xi.mean()));
  r.p_fair = two_sided_normal_tail(std::sqrt(n / (1.0 - rho * rho)) *
                                   std::abs((xi - rho * psi).mean()));
  r.reject_traditional = r.p_traditional < a;
  r.reject_fair = r.p_fair < a;
  return r;
}

struct PowerResult {
  double size_traditional = 0.0;
  double size_fair = 0.0;
  double power_traditional = 0.0;
  double power_fair = 0.0;
};

/// Monte Carlo size (mean 0) and power (Xi mean shifted by mu_alt) of both
/// tests for standard bivariate normal (Xi, Psi) with correlation rho.
inline PowerResult simulate_test_power(double rho, double mu_alt, int n, int trials, double a,
                                       std::uint64_t seed) {
  if (trials < 10'000) throw ParameterError("simulate_test_power needs at least 10^4 trials");
  if (n < 1) throw ParameterError("n must be >= 1");
  if (!(std::abs(rho) < 1.0)) throw ParameterError("|rho| must be < 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double c = std::sqrt(1.0 - rho * rho);
  Eigen::VectorXd xi(n), psi(n);
  PowerResult out;
  for (int phase = 0; phase < 2; ++phase) {
    const double shift = phase == 0 ? 0.0 : mu_alt;
    int rej_t = 0, rej_f = 0;
    for (int t = 0; t < trials; ++t) {
      for (int i = 0; i < n; ++i) {
        psi(i) = normal(rng);
        xi(i) = shift + rho * psi(i) + c * normal(rng);
      }
      const auto r = fair_hypothesis_test(xi, psi, rho, a);
      rej_t += r.reject_traditional;
      rej_f += r.reject_fair;
    }
    const double tr = trials;
    (phase == 0 ? out.size_traditional : out.power_traditional) = rej_t / tr;
    (phase == 0 ? out.size_fair : out.power_fair) = rej_f / tr;
  }
  return out;
}

/// Analytic power P(|N(c,1)| > z_{a/2}) of a two-sided z-test with noncentrality c.
inline double analytic_power(double c, double a) {
  // z_{a/2} by bisection on the tail function
  double lo = 0.0, hi = 40.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (two_sided_normal_tail(mid) > a ? lo : hi) = mid;
  }
  const double z = 0.5 * (lo + hi);
  auto phi_upper = [](double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); };
  return phi_upper(z - c) + phi_upper(z + c);
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return fmt_double(v);
}

inline nlohmann::json point_json(const ParetoPoint& p) {
  nlohmann::json j = {{"level_g", p.level_g},         {"level_h", p.level_h},
                      {"epsilon", json_number(p.epsilon)}, {"lambda", json_number(p.lambda)},
                      {"accuracy", json_number(p.accuracy)}, {"fairness", json_number(p.fairness)},
                      {"mm_hat", json_number(p.mm_hat)},   {"train_objective", json_number(p.train_objective)},
                      {"evaluations", p.evaluations},     {"failures", p.failures},
                      {"flagged", p.flagged},             {"baseline", p.is_baseline()}};
  if (p.eo) j["eo"] = json_number(*p.eo);
  return j;
}

inline bool same_tuple(const ParetoPoint& a, const ParetoPoint& b) {
  auto key = [](const ParetoPoint& p) {
    return std::make_tuple(p.level_g, p.level_h, p.epsilon, p.lambda);
  };
  return key(a) == key(b);
}

}  // namespace detail

inline nlohmann::json schedule_json(const DeltaSchedule& s, bool alpha_from_data) {
  nlohmann::json j = {{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case ScheduleKind::bounded:
    case ScheduleKind::epsilon_plus_concentration:
      j["alpha"] = alpha_from_data ? nlohmann::json("estimated per training fold") : nlohmann::json(s.alpha);
      break;
    case ScheduleKind::subgaussian:
      j["M"] = s.M;
      j["sigma2"] = s.sigma2;
      break;
    case ScheduleKind::finite_moment:
      j["moments"] = "plug-in: empirical sup over unit directions of E|<s,Z>|^{4m}, E|<t,Omega>|^{4q}";
      break;
    case ScheduleKind::manual: {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& [mq, d] : s.manual) rows.push_back({{"m", mq.first}, {"q", mq.second}, {"delta", d}});
      j["manual"] = rows;
      break;
    }
    case ScheduleKind::epsilon:
      j["formula"] = "eps^(m+q) * m! * q!";
      break;
  }
  return j;
}

/// Writes `<prefix>.csv` (one row per point) and `<prefix>.json` (metadata,
/// points, frontier).
inline void emit_results(const std::vector<ParetoPoint>& points,
                         const std::vector<ParetoPoint>& frontier, const ExperimentConfig& cfg,
                         const std::string& prefix, const nlohmann::json& extra = {}) {
  const std::string csv_path = prefix + ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot write " + csv_path);
  csv << "level_g,level_h,epsilon,lambda,accuracy,fairness,on_frontier,flagged\n";
  for (const auto& p : points) {
    const bool on = std::any_of(frontier.begin(), frontier.end(),
                                [&](const ParetoPoint& f) { return detail::same_tuple(f, p); });
    csv << p.level_g << ',' << p.level_h << ',' << detail::fmt_double(p.epsilon) << ','
        << detail::fmt_double(p.lambda) << ',' << detail::fmt_double(p.accuracy) << ','
        << detail::fmt_double(p.fairness) << ',' << (on ? 1 : 0) << ',' << (p.flagged ? 1 : 0)
        << '\n';
  }
  if (!csv) throw DataError("failed writing " + csv_path);

  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["seed"] = cfg.seed ? nlohmann::json(*cfg.seed) : nlohmann::json(nullptr);
  meta["task"] = to_string(cfg.task);
  meta["loss"] = to_string(cfg.loss().kind);
  if (cfg.task == Task::quantile) {
    meta["pinball"] = {{"over", cfg.pinball_over}, {"under", cfg.pinball_under}};
    meta["clamp_negative_predictions"] = cfg.clamp();
  }
  meta["accuracy_metric"] = accuracy_metric_name(cfg.task);
  meta["accuracy_higher_is_better"] = cfg.task != Task::quantile;
  meta["schedule"] = schedule_json(cfg.schedule, cfg.alpha_from_data);
  meta["mode"] = to_string(cfg.mode);
  meta["solver_options"] = solver_options_json(cfg.solver);
  meta["ccp_stopping"] = "step <= ccp_step_tol or ccp_max_iter outer iterations; iterate kept only if objective does not increase";
  meta["folds"] = cfg.folds;
  meta["repeats"] = cfg.repeats;
  meta["stratification"] = cfg.task == Task::svm ? "by target class" : "none (shuffled)";
  meta["standardization"] = "continuous predictor and protected columns, statistics from training folds";
  meta["feature_map"] = {{"kind", cfg.feature_map.kind},
                         {"degree", cfg.feature_map.degree},
                         {"include_z", cfg.feature_map.include_z}};
  meta["baseline_encoding"] = "level (0,0), epsilon = inf: unconstrained rule";
  meta["randomized_frontier"] = "line segments between consecutive frontier points are attainable by randomizing between their rules";
  nlohmann::json segs = nlohmann::json::array();
  for (std::size_t i = 0; i + 1 < frontier.size(); ++i) {
    segs.push_back({detail::point_json(frontier[i]), detail::point_json(frontier[i + 1])});
  }
  meta["frontier_segments"] = segs;
  nlohmann::json pts = nlohmann::json::array(), fr = nlohmann::json::array();
  for (const auto& p : points) pts.push_back(detail::point_json(p));
  for (const auto& p : frontier) fr.push_back(detail::point_json(p));
  meta["points"] = pts;
  meta["frontier"] = fr;
  for (const auto& [key, val] : extra.items()) meta[key] = val;

  const std::string json_path = prefix + ".json";
  std::ofstream js(json_path);
  if (!js) throw DataError("cannot write " + json_path);
  js << meta.dump(2) << '\n';
  if (!js) throw DataError("failed writing " + json_path);
}

/// Reads a points CSV written by emit_results.
inline std::vector<ParetoPoint> read_points_csv(const std::string& path,
                                                bool higher_accuracy_better = true) {
  const auto table = detail::read_csv(path);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < table.header.size(); ++c) col[table.header[c]] = c;
  for (const char* need : {"level_g", "level_h", "epsilon", "lambda", "accuracy", "fairness"}) {
    if (!col.count(need)) throw SchemaError(std::string("points file lacks column ") + need);
  }
  auto num = [&](const std::vector<std::string>& row, const char* name, std::size_t r) {
    const std::string& cell = row[col.at(name)];
    if (cell == "inf") return std::numeric_limits<double>::infinity();
    if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
    const auto v = detail::parse_double(cell);
    if (!v) throw ParseError("bad value '" + cell + "' in column " + name + " at data row " + std::to_string(r + 1));
    return *v;
  };
  std::vector<ParetoPoint> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ParetoPoint p;
    p.level_g = static_cast<int>(num(row, "level_g", r));
    p.level_h = static_cast<int>(num(row, "level_h", r));
    p.epsilon = num(row, "epsilon", r);
    p.lambda = num(row, "lambda", r);
    p.accuracy = num(row, "accuracy", r);
    p.fairness = num(row, "fairness", r);
    p.higher_accuracy_better = higher_accuracy_better;
    if (col.count("flagged")) p.flagged = row[col.at("flagged")] == "1";
    out.push_back(p);
  }
  return out;
}

}  // namespace fairopt
