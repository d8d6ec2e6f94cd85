#pragma once

// Level-(g,h) FO solves for d = 1 rules: one convex barrier solve when h = 1,
// the constrained convex-concave procedure when h = 2.

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairopt/constraints.hpp"
#include "fairopt/data_model.hpp"
#include "fairopt/detail/barrier.hpp"
#include "fairopt/error.hpp"
#include "fairopt/moments.hpp"

namespace fairopt {

enum class LossKind { hinge, squared, pinball };

struct LossSpec {
  LossKind kind = LossKind::squared;
  double over = 1.0;   // pinball: cost per unit of over-prediction
  double under = 2.0;  // pinball: cost per unit of under-prediction

  static LossSpec hinge() { return {LossKind::hinge, 0.0, 0.0}; }
  static LossSpec squared() { return {LossKind::squared, 0.0, 0.0}; }
  static LossSpec pinball(double over, double under) { return {LossKind::pinball, over, under}; }

  void validate() const {
    if (kind == LossKind::pinball) {
      if (over < 0.0 || under < 0.0) throw ParameterError("pinball weights must be nonnegative");
      if (over == 0.0 && under == 0.0) throw ParameterError("pinball weights cannot both be zero");
    }
  }

  /// Per-sample loss of prediction u against target y.
  double operator()(double u, double y) const {
    switch (kind) {
      case LossKind::hinge: return std::max(0.0, 1.0 - y * u);
      case LossKind::squared: return (y - u) * (y - u);
      case LossKind::pinball: return std::max(over * (u - y), under * (y - u));
    }
    return 0.0;
  }

  double risk(const Eigen::VectorXd& u, const Eigen::VectorXd& y) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += (*this)(u(i), y(i));
    return s / static_cast<double>(u.size());
  }
};

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::hinge: return "hinge";
    case LossKind::squared: return "squared";
    case LossKind::pinball: return "pinball";
  }
  return "?";
}

struct SolverOptions {
  double feas_tol = 1e-8;
  double obj_tol = 1e-6;
  double ccp_step_tol = 1e-6;
  int ccp_max_iter = 100;
  detail::BarrierOptions barrier;
};

enum class SolveStatus { optimal, max_iter, infeasible_subproblem };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_subproblem: return "infeasible_subproblem";
  }
  return "?";
}

/// Convex-path result, also one CCP step.
struct ConvexResult {
  Eigen::VectorXd b;
  double objective = 0.0;
  SolveStatus status = SolveStatus::optimal;
  int newton_steps = 0;
};

namespace detail {

inline BarrierProblem make_barrier_problem(const Eigen::MatrixXd& omega, const Eigen::VectorXd& y,
                                           const LossSpec& loss) {
  loss.validate();
  BarrierProblem bp;
  bp.omega = &omega;
  bp.y = &y;
  bp.squared = loss.kind == LossKind::squared;
  if (bp.squared) return bp;
  const Eigen::Index n = omega.rows();
  bp.kappa.resize(n, 2);
  bp.h.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (loss.kind == LossKind::hinge) {
      if (y(i) != 1.0 && y(i) != -1.0) throw ParameterError("hinge loss needs labels in {-1,+1}");
      bp.kappa(i, 0) = 0.0;
      bp.h(i, 0) = 0.0;
      bp.kappa(i, 1) = -y(i);
      bp.h(i, 1) = 1.0;
    } else {
      bp.kappa(i, 0) = loss.over;
      bp.h(i, 0) = -loss.over * y(i);
      bp.kappa(i, 1) = -loss.under;
      bp.h(i, 1) = loss.under * y(i);
    }
  }
  return bp;
}

// |a . b| <= Delta as two affine rows, or an equality when Delta = 0.
inline void add_two_sided(BarrierProblem& bp, const LinearConstraint& c) {
  if (c.delta == 0.0) {
    bp.equalities.push_back(c.a);
  } else {
    bp.affine.push_back({c.a, c.delta});
    bp.affine.push_back({-c.a, c.delta});
  }
}

inline ConvexResult run_barrier(const BarrierProblem& bp, const LossSpec& loss,
                                const Eigen::VectorXd& start, const SolverOptions& opts) {
  BarrierSolver solver(bp, opts.barrier);
  const BarrierResult br = solver.solve(start);
  ConvexResult out;
  out.b = br.b;
  out.newton_steps = br.newton_steps;
  out.objective = loss.risk(*bp.omega * br.b, *bp.y);
  switch (br.status) {
    case BarrierStatus::converged: out.status = SolveStatus::optimal; break;
    case BarrierStatus::max_iter: out.status = SolveStatus::max_iter; break;
    case BarrierStatus::infeasible_start: out.status = SolveStatus::infeasible_subproblem; break;
  }
  return out;
}

}  // namespace detail

/// One convex solve: loss over rows of Omega subject to |a . b| <= Delta for
/// each linear constraint, a . b <= c for each extra row, and |b|^2 <= lambda.
inline ConvexResult solve_convex_subproblem(const Eigen::MatrixXd& omega, const Eigen::VectorXd& y,
                                            const LossSpec& loss,
                                            const std::vector<LinearConstraint>& linear_constraints,
                                            const std::vector<detail::AffineRow>& extra_linear,
                                            double lambda, const SolverOptions& opts = {},
                                            const Eigen::VectorXd* start = nullptr) {
  if (omega.rows() != y.size()) throw ShapeError("Omega and y row counts differ");
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  detail::BarrierProblem bp = detail::make_barrier_problem(omega, y, loss);
  for (const auto& c : linear_constraints) detail::add_two_sided(bp, c);
  bp.affine.insert(bp.affine.end(), extra_linear.begin(), extra_linear.end());
  bp.lambda = lambda;
  const Eigen::VectorXd b0 = start ? *start : Eigen::VectorXd::Zero(omega.cols());
  return detail::run_barrier(bp, loss, b0, opts);
}

/// Q = Q_plus - Q_minus with both PSD, from the eigendecomposition of Q.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> dc_split(const Eigen::MatrixXd& q) {
  if (q.rows() != q.cols()) throw ContractError("dc_split needs a square matrix");
  if (q.size() > 0 && (q - q.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw ContractError("dc_split needs a symmetric matrix");
  }
  const Eigen::MatrixXd sym = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd ev = es.eigenvalues();
  const Eigen::MatrixXd& v = es.eigenvectors();
  Eigen::MatrixXd plus = v * ev.cwiseMax(0.0).asDiagonal() * v.transpose();
  Eigen::MatrixXd minus = v * (-ev).cwiseMax(0.0).asDiagonal() * v.transpose();
  plus = 0.5 * (plus + plus.transpose()).eval();
  minus = 0.5 * (minus + minus.transpose()).eval();
  return {plus, minus};
}

struct FOProblem {
  Dataset ds;
  FeatureMapSpec spec;
  LossSpec loss;
  ConstraintSet constraints;
  double lambda = 1.0;
  SolverOptions solver_opts;
};

struct FOSolution {
  DecisionRule rule;
  double objective = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::optimal;
  int newton_steps = 0;
  // objective and iterate after every accepted outer step, starting at B0
  std::vector<double> trace_objectives;
  std::vector<Eigen::VectorXd> trace_iterates;
};

/// Result of the raw CCP loop.
struct CCPResult {
  Eigen::VectorXd b;
  double objective = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::optimal;
  int newton_steps = 0;
  std::vector<double> trace_objectives;
  std::vector<Eigen::VectorXd> trace_iterates;
};

/// Constrained convex-concave procedure from B0 = 0: every two-sided
/// quadratic constraint |b Q b^T| <= Delta is convexified at the current
/// iterate (concave side linearized) and the convex subproblem re-solved.
inline CCPResult ccp_solve(const Eigen::MatrixXd& omega, const Eigen::VectorXd& y,
                           const LossSpec& loss, const std::vector<LinearConstraint>& linear,
                           const std::vector<QuadConstraint>& quadratic, double lambda,
                           const SolverOptions& opts = {}) {
  if (omega.rows() != y.size()) throw ShapeError("Omega and y row counts differ");
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  const Eigen::Index p = omega.cols();

  struct Split {
    Eigen::MatrixXd plus, minus;
    double delta;
  };
  std::vector<Split> splits;
  for (const auto& qc : quadratic) {
    auto [plus, minus] = dc_split(qc.q);
    // an exact zero threshold has no interior; the barrier gets half the tolerance
    const double dl = qc.delta == 0.0 ? opts.feas_tol / 2.0 : qc.delta;
    splits.push_back({std::move(plus), std::move(minus), dl});
  }

  detail::BarrierProblem base = detail::make_barrier_problem(omega, y, loss);
  for (const auto& c : linear) detail::add_two_sided(base, c);
  base.lambda = lambda;

  CCPResult res;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  double obj = loss.risk(omega * b, y);
  res.trace_objectives.push_back(obj);
  res.trace_iterates.push_back(b);
  res.status = SolveStatus::max_iter;

  auto add_side = [](detail::BarrierProblem& bp, const Eigen::MatrixXd& convex,
                     const Eigen::MatrixXd& concave, const Eigen::VectorXd& bk, double delta) {
    detail::ConvexQuadRow row;
    row.P = convex;
    row.q = -2.0 * (concave * bk);
    row.c = delta - bk.dot(concave * bk);
    // constant rows with positive right-hand side are vacuous
    if ((row.P.array() == 0.0).all() && (row.q.array() == 0.0).all() && row.c > 0.0) return;
    bp.quad.push_back(std::move(row));
  };

  for (int k = 1; k <= opts.ccp_max_iter; ++k) {
    detail::BarrierProblem bp = base;
    for (const auto& sp : splits) {
      add_side(bp, sp.plus, sp.minus, b, sp.delta);
      add_side(bp, sp.minus, sp.plus, b, sp.delta);
    }
    const ConvexResult step = detail::run_barrier(bp, loss, b, opts);
    res.newton_steps += step.newton_steps;
    res.iterations = k;
    if (step.status == SolveStatus::infeasible_subproblem) {
      res.status = SolveStatus::infeasible_subproblem;
      break;
    }
    // the current iterate is feasible for this subproblem, so a higher
    // objective is barrier-gap noise; keep the current iterate and stop
    if (step.objective > obj) {
      res.status = SolveStatus::optimal;
      break;
    }
    const double move = (step.b - b).norm();
    b = step.b;
    obj = step.objective;
    res.trace_objectives.push_back(obj);
    res.trace_iterates.push_back(b);
    if (move <= opts.ccp_step_tol) {
      res.status = step.status;
      break;
    }
  }
  res.b = b;
  res.objective = obj;
  return res;
}

inline CCPResult ccp_solve(const FOProblem& problem) {
  if (problem.constraints.h != 2) throw ParameterError("ccp_solve needs h = 2");
  const Eigen::MatrixXd omega = feature_matrix(problem.spec, problem.ds);
  return ccp_solve(omega, problem.ds.y, problem.loss, problem.constraints.linear,
                   problem.constraints.quadratic, problem.lambda, problem.solver_opts);
}

/// Dispatches on h and checks the result with the sample-based residual evaluator.
/// True when the returned rule can be used: optimal, or a capped CCP run whose
/// iterate still satisfies the constraints.
inline bool usable(const FOSolution& sol, const SolverOptions& opts) {
  return sol.status == SolveStatus::optimal ||
         (sol.status == SolveStatus::max_iter && sol.max_violation <= opts.feas_tol);
}

inline FOSolution solve_fo(const FOProblem& problem) {
  const auto& cs = problem.constraints;
  if (cs.h >= 3) {
    throw UnsupportedLevelError("training supports h <= 2, got h = " + std::to_string(cs.h));
  }
  if (problem.lambda < 1.0) throw ParameterError("lambda must be >= 1");
  const Eigen::MatrixXd omega = feature_matrix(problem.spec, problem.ds);

  FOSolution sol;
  sol.rule.feature_map = problem.spec;
  Eigen::VectorXd b;
  if (cs.quadratic.empty()) {
    const ConvexResult r = solve_convex_subproblem(omega, problem.ds.y, problem.loss, cs.linear, {},
                                                   problem.lambda, problem.solver_opts);
    b = r.b;
    sol.objective = r.objective;
    sol.status = r.status;
    sol.iterations = 1;
    sol.newton_steps = r.newton_steps;
    sol.trace_objectives = {problem.loss.risk(Eigen::VectorXd::Zero(omega.rows()), problem.ds.y),
                            r.objective};
    sol.trace_iterates = {Eigen::VectorXd::Zero(omega.cols()), r.b};
  } else {
    CCPResult r = ccp_solve(omega, problem.ds.y, problem.loss, cs.linear, cs.quadratic,
                            problem.lambda, problem.solver_opts);
    b = r.b;
    sol.objective = r.objective;
    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.newton_steps = r.newton_steps;
    sol.trace_objectives = std::move(r.trace_objectives);
    sol.trace_iterates = std::move(r.trace_iterates);
  }
  sol.rule.b = b.transpose();
  sol.max_violation = max_violation(sol.rule, problem.ds, cs);
  const bool in_ball = b.norm() <= std::sqrt(problem.lambda) + problem.solver_opts.feas_tol;
  if (sol.status == SolveStatus::optimal &&
      (sol.max_violation > problem.solver_opts.feas_tol || !in_ball)) {
    sol.status = SolveStatus::max_iter;
  }
  return sol;
}

}  // namespace fairopt
