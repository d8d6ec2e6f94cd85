// fairopt command-line driver.
//
//   fairopt train    --config cfg.json [--level 1,2 --eps 0.1 --lambda 10 --out rule.json]
//   fairopt cv       --config cfg.json --out results/prefix
//   fairopt pareto   --points points.csv --out frontier.csv
//   fairopt fairtest --rho 0.7 (--xi xi.txt --psi psi.txt | --simulate ...)
//   fairopt oracle   --pmf pmf.json --g 3 --h 3
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairopt/fairopt.hpp"

namespace {

using nlohmann::json;
using namespace fairopt;

struct Overrides {
  std::string config;
  std::string data;
  std::string schema;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;
  std::optional<int> repeats;
  std::optional<int> workers;
  std::optional<std::string> mode;
  std::optional<std::string> schedule;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--data", o.data, "CSV file (overrides config)");
  app->add_option("--schema", o.schema, "schema JSON file (overrides config)");
  app->add_option("--seed", o.seed, "random seed (overrides config)");
  app->add_option("--mode", o.mode, "disparate_impact | equalized_odds");
  app->add_option("--schedule", o.schedule, "eps | eps_conc | bounded | subgaussian | finite | manual");
}

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.data.empty()) cfg.data_path = o.data;
  if (!o.schema.empty()) cfg.schema = load_schema(o.schema);
  if (o.seed) cfg.seed = *o.seed;
  if (o.folds) cfg.folds = *o.folds;
  if (o.repeats) cfg.repeats = *o.repeats;
  if (o.workers) cfg.workers = *o.workers;
  if (o.mode) cfg.mode = parse_fairness_mode(*o.mode);
  if (o.schedule) cfg.schedule.kind = parse_schedule_kind(*o.schedule);
  if (cfg.data_path.empty()) throw UsageError("no dataset given (--data or config 'data')");
  if (cfg.schema.empty()) throw UsageError("no schema given (--schema or config 'schema')");
  return cfg;
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<double> vals;
  std::string tok;
  std::size_t line = 0;
  while (in >> tok) {
    ++line;
    for (char& c : tok) if (c == ',') c = ' ';
    std::istringstream parts(tok);
    std::string cell;
    while (parts >> cell) {
      const auto v = detail::parse_double(cell);
      if (!v) throw ParseError("non-numeric value '" + cell + "' in " + path + " at entry " + std::to_string(line));
      vals.push_back(*v);
    }
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

int cmd_train(const Overrides& o, const std::string& level, std::optional<double> eps,
              std::optional<double> lambda, const std::string& out) {
  const ExperimentConfig cfg = resolve_config(o);
  int g = cfg.levels.front().first, h = cfg.levels.front().second;
  if (!level.empty()) {
    if (std::sscanf(level.c_str(), "%d,%d", &g, &h) != 2 || g < 0 || h < 0) {
      throw UsageError("--level expects g,h");
    }
  }
  const double e = eps.value_or(cfg.epsilons.front());
  const double l = lambda.value_or(cfg.lambdas.front());
  const Dataset ds = load_csv(cfg.data_path, cfg.schema);
  const TrainResult tr = train_rule(cfg, ds, g, h, e, l);
  const FOSolution& sol = tr.solution;

  const Eigen::VectorXd scores = predict(cfg, tr, ds);
  const FairnessReport rep = fairness_report(scores, ds, std::max(g, 1), std::max(h, 1));

  json monomials = json::array();
  for (const auto& m : sol.rule.feature_map.monomials()) monomials.push_back(m);
  json xcols = json::array(), zcols = json::array();
  for (const auto& c : ds.x_columns) xcols.push_back(c.name);
  for (const auto& c : ds.z_columns) zcols.push_back(c.name);

  json j;
  j["version"] = kVersion;
  j["level"] = {g, h};
  j["epsilon"] = detail::json_number(e);
  j["lambda"] = l;
  j["schedule"] = schedule_json(cfg.schedule, cfg.alpha_from_data);
  j["mode"] = to_string(cfg.mode);
  j["loss"] = to_string(cfg.loss().kind);
  j["status"] = to_string(sol.status);
  j["objective"] = sol.objective;
  j["max_violation"] = detail::json_number(sol.max_violation);
  j["iterations"] = sol.iterations;
  j["newton_steps"] = sol.newton_steps;
  j["rule"] = {{"b", vector_json(sol.rule.b.row(0).transpose())},
               {"monomials", monomials},
               {"x_columns", xcols},
               {"z_columns", zcols},
               {"note", "monomial indices >= len(x_columns) refer to z; inputs are standardized"}};
  j["standardization"] = {{"x_mean", vector_json(tr.standardization.x_mean)},
                          {"x_scale", vector_json(tr.standardization.x_scale)},
                          {"z_mean", vector_json(tr.standardization.z_mean)},
                          {"z_scale", vector_json(tr.standardization.z_scale)},
                          {"alpha", tr.standardization.alpha},
                          {"z_standardized", tr.standardization.z_standardized}};
  j["training_fairness"] = {{"ks", rep.ks}, {"method", rep.method}, {"mm_hat", rep.mm_hat}};
  if (rep.eo) j["training_fairness"]["eo"] = *rep.eo;
  j["dropped_rows"] = ds.dropped_rows;
  j["n"] = ds.n();
  write_json(j, out);
  return usable(sol, cfg.solver) ? 0 : 3;
}

int cmd_cv(const Overrides& o, const std::string& out) {
  const ExperimentConfig cfg = resolve_config(o);
  const Dataset ds = load_csv(cfg.data_path, cfg.schema);
  const CvOutput cv = run_cv(cfg, ds);
  const auto frontier = pareto_frontier(cv.points);
  json extra = {{"fairness_metric", cv.fairness_method},
                {"z_standardized", cv.z_standardized},
                {"n", cv.n},
                {"dropped_rows", cv.dropped_rows},
                {"data", cfg.data_path}};
  emit_results(cv.points, frontier, cfg, out, extra);
  int flagged = 0;
  for (const auto& p : cv.points) flagged += p.flagged;
  std::cerr << cv.points.size() << " points, " << frontier.size() << " on the frontier, "
            << flagged << " flagged; wrote " << out << ".csv and " << out << ".json\n";
  return 0;
}

int cmd_pareto(const std::string& points, bool lower_better, const std::string& out) {
  const auto pts = read_points_csv(points, !lower_better);
  if (pts.empty()) throw DataError("points file has no rows");
  const auto fr = pareto_frontier(pts);
  std::ostringstream os;
  os << "level_g,level_h,epsilon,lambda,accuracy,fairness\n";
  for (const auto& p : fr) {
    os << p.level_g << ',' << p.level_h << ',' << detail::fmt_double(p.epsilon) << ','
       << detail::fmt_double(p.lambda) << ',' << detail::fmt_double(p.accuracy) << ','
       << detail::fmt_double(p.fairness) << '\n';
  }
  if (out.empty() || out == "-") {
    std::cout << os.str();
  } else {
    std::ofstream f(out);
    if (!f) throw DataError("cannot write " + out);
    f << os.str();
  }
  return 0;
}

int cmd_fairtest(const std::string& xi_path, const std::string& psi_path, double rho, double a,
                 bool simulate, double mu, int n, int trials, std::uint64_t seed) {
  json j;
  if (simulate) {
    const PowerResult r = simulate_test_power(rho, mu, n, trials, a, seed);
    const double c_t = mu * std::sqrt(static_cast<double>(n));
    const double c_f = mu * std::sqrt(n / (1.0 - rho * rho));
    j = {{"rho", rho}, {"mu_alt", mu}, {"n", n}, {"trials", trials}, {"a", a}, {"seed", seed},
         {"size_traditional", r.size_traditional}, {"size_fair", r.size_fair},
         {"power_traditional", r.power_traditional}, {"power_fair", r.power_fair},
         {"analytic_power_traditional", analytic_power(c_t, a)},
         {"analytic_power_fair", analytic_power(c_f, a)}};
  } else {
    if (xi_path.empty() || psi_path.empty()) {
      throw UsageError("fairtest needs --xi and --psi, or --simulate");
    }
    const HypothesisTestResult r = fair_hypothesis_test(read_vector(xi_path), read_vector(psi_path), rho, a);
    j = {{"p_traditional", r.p_traditional}, {"p_fair", r.p_fair},
         {"reject_traditional", r.reject_traditional}, {"reject_fair", r.reject_fair},
         {"rho", rho}, {"a", a}};
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_oracle(const std::string& pmf_path, int g, int h) {
  const DiscretePMF pmf = load_pmf(pmf_path);
  const OracleResult r = independence_oracle(pmf, g, h);
  json j = {{"g", g}, {"h", h}, {"pass", r.pass}, {"worst_residual", r.worst_residual.str()},
            {"worst_residual_float", static_cast<double>(r.worst_residual)}};
  if (!r.pass) j["first_failure"] = {r.fail_m, r.fail_q};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair optimization hierarchy: training, CV sweeps, Pareto frontiers"};
  app.require_subcommand(1);
  // subcommands inherit this; -h would clash with the oracle's --h
  app.set_help_flag("--help", "print this help message and exit");
  app.set_version_flag("--version", std::string(fairopt::kVersion));

  Overrides train_o, cv_o;
  std::string level, train_out, cv_out = "fairopt_results";
  std::optional<double> eps, lambda;
  auto* train = app.add_subcommand("train", "solve one FO problem on the full dataset");
  add_common(train, train_o);
  train->add_option("--level", level, "g,h (0,0 = unconstrained)");
  train->add_option("--eps", eps, "epsilon");
  train->add_option("--lambda", lambda, "norm-ball bound lambda >= 1");
  train->add_option("--out", train_out, "output JSON (default stdout)");

  auto* cv = app.add_subcommand("cv", "cross-validated sweep over the hyperparameter grid");
  add_common(cv, cv_o);
  cv->add_option("--folds", cv_o.folds, "number of folds");
  cv->add_option("--repeats", cv_o.repeats, "number of repeats");
  cv->add_option("--workers", cv_o.workers, "worker threads");
  cv->add_option("--out", cv_out, "output prefix for .csv and .json");

  std::string points, pareto_out;
  bool lower_better = false;
  auto* pareto = app.add_subcommand("pareto", "non-dominated subset of a points CSV");
  pareto->add_option("--points", points, "points CSV written by cv")->required()->check(CLI::ExistingFile);
  pareto->add_flag("--lower-accuracy-better", lower_better, "accuracy column is a risk (quantile task)");
  pareto->add_option("--out", pareto_out, "output CSV (default stdout)");

  std::string xi, psi;
  double rho = 0.0, a = 0.05, mu = 0.3;
  bool simulate = false;
  int n = 50, trials = 100000;
  std::uint64_t seed = 1;
  auto* ft = app.add_subcommand("fairtest", "traditional vs fair z-test");
  ft->add_option("--xi", xi, "file of Xi samples");
  ft->add_option("--psi", psi, "file of Psi samples");
  ft->add_option("--rho", rho, "correlation of Xi and Psi")->required();
  ft->add_option("--a", a, "test level");
  ft->add_flag("--simulate", simulate, "Monte Carlo size and power instead of a single test");
  ft->add_option("--mu", mu, "alternative mean for --simulate");
  ft->add_option("--n", n, "sample size for --simulate");
  ft->add_option("--trials", trials, "Monte Carlo trials (>= 10000)");
  ft->add_option("--seed", seed, "random seed");

  std::string pmf;
  int og = 3, oh = 3;
  auto* oracle = app.add_subcommand("oracle", "exact moment independence check of a finite pmf");
  oracle->add_option("--pmf", pmf, "pmf JSON")->required()->check(CLI::ExistingFile);
  oracle->add_option("--g", og, "max Z power");
  oracle->add_option("--h", oh, "max output power");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(train_o, level, eps, lambda, train_out);
    if (*cv) return cmd_cv(cv_o, cv_out);
    if (*pareto) return cmd_pareto(points, lower_better, pareto_out);
    if (*ft) return cmd_fairtest(xi, psi, rho, a, simulate, mu, n, trials, seed);
    if (*oracle) return cmd_oracle(pmf, og, oh);
  } catch (const fairopt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
