#pragma once

// Threshold schedules Delta_{m,q} and assembly of the level-(g,h) constraint set.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairopt/data_model.hpp"
#include "fairopt/detail/sphere.hpp"
#include "fairopt/error.hpp"
#include "fairopt/moments.hpp"

namespace fairopt {

/// R_{m,q}[n] for almost surely bounded data.
inline double radius_bounded(double n, int m, int q, double alpha, int rho, double p, double d,
                             double r) {
  const double complexity =
      d * p * std::log(1.0 + 4.0 * q) + m * std::log(r) + q * std::log(d);
  return 8.0 * std::pow(alpha, m + rho * q) * std::pow(p, q / 2.0) * std::sqrt(complexity / n);
}

inline double delta_bounded(double n, int m, int q, double alpha, int rho, double p, double d,
                            double r) {
  return 3.0 * (1.0 + std::log(n)) * radius_bounded(n, m, q, alpha, rho, p, d, r);
}

/// C_{m,q}[n] for sub-Gaussian data; evaluated in log space.
inline double radius_subgaussian(double n, int m, int q, double M, double sigma2, double d,
                                 double p, double r) {
  if (sigma2 == 0.0) return 0.0;
  const double e = std::numbers::e;
  const double log_inner = 2.0 + 2.0 * std::log(M) + 7.0 * std::log(2.0) + 3.0 * std::log(5.0) -
                           std::log(std::numbers::pi * n) + d * p * std::log(1.0 + 4.0 * q) +
                           m * (std::log(r) + 3.0 * std::log(double(m))) +
                           q * (std::log(d) + 3.0 * std::log(double(q))) +
                           (3.0 * m + 3.0 * q) * std::log(24.0 * sigma2 / e);
  return std::exp(log_inner / 6.0);
}

inline double delta_subgaussian(double n, int m, int q, double M, double sigma2, double d,
                                double p, double r) {
  const double c = radius_subgaussian(n, m, q, M, sigma2, d, p, r);
  return 3.0 * c + c * c;
}

/// Y_{m,q}[n] from the moment bounds M_{4m,0} and M_{0,4q}.
inline double radius_finite_moment(double n, double m4m_z, double m4q_v) {
  if (!(m4m_z > 0.0) || !(m4q_v > 0.0)) {
    throw EstimationError("finite-moment schedule needs positive moment estimates");
  }
  return std::sqrt(8.0 / n) * std::pow(m4m_z * m4q_v, 0.25);
}

inline double delta_finite_moment(double n, double m4m_z, double m4q_v) {
  const double y = radius_finite_moment(n, m4m_z, m4q_v);
  return 3.0 * y + y * y;
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

/// eps^{m+q} m! q!, plus an optional concentration term.
inline double delta_epsilon(double eps, int m, int q, double concentration = 0.0) {
  if (eps < 0.0) throw ParameterError("epsilon must be >= 0");
  if (std::isinf(eps)) return std::numeric_limits<double>::infinity();
  return std::pow(eps, m + q) * factorial(m) * factorial(q) + concentration;
}

enum class ScheduleKind { bounded, subgaussian, finite_moment, epsilon, epsilon_plus_concentration, manual };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::bounded: return "bounded";
    case ScheduleKind::subgaussian: return "subgaussian";
    case ScheduleKind::finite_moment: return "finite";
    case ScheduleKind::epsilon: return "eps";
    case ScheduleKind::epsilon_plus_concentration: return "eps_conc";
    case ScheduleKind::manual: return "manual";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "bounded") return ScheduleKind::bounded;
  if (s == "subgaussian") return ScheduleKind::subgaussian;
  if (s == "finite" || s == "finite_moment") return ScheduleKind::finite_moment;
  if (s == "eps" || s == "epsilon") return ScheduleKind::epsilon;
  if (s == "eps_conc" || s == "epsilon_plus_concentration") {
    return ScheduleKind::epsilon_plus_concentration;
  }
  if (s == "manual") return ScheduleKind::manual;
  throw ParameterError("unknown schedule '" + s + "'");
}

/// Sample-size and dimension context a schedule is evaluated in.
struct ScheduleContext {
  double n = 2;
  double p = 1;
  double d = 1;
  double r = 1;
  int rho = 1;
  // finite-moment plug-ins, filled lazily by build_constraint_set
  std::map<int, double> z_moment;  // k -> sup_s E|<s,Z>|^k
  std::map<int, double> v_moment;  // k -> sup_t E|<t,Omega>|^k
};

struct DeltaSchedule {
  ScheduleKind kind = ScheduleKind::epsilon;
  double epsilon = 0.0;
  double alpha = 1.0;   // bounded / eps_conc
  double M = 1.0;       // subgaussian
  double sigma2 = 1.0;  // subgaussian
  std::map<std::pair<int, int>, double> manual;

  static DeltaSchedule eps(double e) {
    DeltaSchedule s;
    s.kind = ScheduleKind::epsilon;
    s.epsilon = e;
    return s;
  }

  double delta(int m, int q, const ScheduleContext& ctx) const {
    double out = 0.0;
    switch (kind) {
      case ScheduleKind::bounded:
        out = delta_bounded(ctx.n, m, q, alpha, ctx.rho, ctx.p, ctx.d, ctx.r);
        break;
      case ScheduleKind::subgaussian:
        out = delta_subgaussian(ctx.n, m, q, M, sigma2, ctx.d, ctx.p, ctx.r);
        break;
      case ScheduleKind::finite_moment: {
        auto zi = ctx.z_moment.find(4 * m);
        auto vi = ctx.v_moment.find(4 * q);
        if (zi == ctx.z_moment.end() || vi == ctx.v_moment.end()) {
          throw EstimationError("finite-moment schedule is missing moment estimates");
        }
        out = delta_finite_moment(ctx.n, zi->second, vi->second);
        break;
      }
      case ScheduleKind::epsilon:
        out = delta_epsilon(epsilon, m, q);
        break;
      case ScheduleKind::epsilon_plus_concentration:
        out = delta_epsilon(epsilon, m, q,
                            delta_bounded(ctx.n, m, q, alpha, ctx.rho, ctx.p, ctx.d, ctx.r));
        break;
      case ScheduleKind::manual: {
        auto it = manual.find({m, q});
        if (it == manual.end()) {
          throw ParameterError("manual schedule has no Delta for (m=" + std::to_string(m) +
                               ", q=" + std::to_string(q) + ")");
        }
        out = it->second;
        break;
      }
    }
    if (!(out >= 0.0) || std::isnan(out)) {
      throw ParameterError("schedule produced an invalid Delta for (m=" + std::to_string(m) +
                           ", q=" + std::to_string(q) + ")");
    }
    return out;
  }
};

enum class FairnessMode { disparate_impact, equalized_odds };

inline const char* to_string(FairnessMode m) {
  return m == FairnessMode::disparate_impact ? "disparate_impact" : "equalized_odds";
}

inline FairnessMode parse_fairness_mode(const std::string& s) {
  if (s == "disparate_impact" || s == "di") return FairnessMode::disparate_impact;
  if (s == "equalized_odds" || s == "eo") return FairnessMode::equalized_odds;
  throw ParameterError("unknown fairness mode '" + s + "'");
}

/// |a . b| <= delta
struct LinearConstraint {
  int m = 1;
  int group = -1;  // conditioning group index, -1 for the full sample
  Eigen::VectorXd a;
  double delta = 0.0;
};

/// |b Q b^T| <= delta
struct QuadConstraint {
  int m = 1;
  int group = -1;
  Eigen::MatrixXd q;
  double delta = 0.0;
};

/// Per-(m,q) coefficient blocks and thresholds, plus the flattened,
/// deduplicated rows the solvers consume.
struct ConstraintSet {
  int g = 1;
  int h = 1;
  FairnessMode mode = FairnessMode::disparate_impact;
  bool binary_reduction = false;  // true if m >= 2 blocks were skipped as redundant

  struct LinearBlock {
    LinearCoefTensor coef;
    double delta = 0.0;
    int group = -1;
  };
  struct QuadBlock {
    QuadCoefFamily coef;
    double delta = 0.0;
    int group = -1;
  };
  std::vector<LinearBlock> linear_blocks;
  std::vector<QuadBlock> quad_blocks;

  std::vector<LinearConstraint> linear;
  std::vector<QuadConstraint> quadratic;

  /// Equalized odds: conditioning labels and the row indices of each subsample.
  std::vector<std::string> conditioning;
  std::vector<std::vector<Eigen::Index>> group_rows;

  /// Delta_{m,q} for every (m,q) in [g] x [h] and every group (group -1 = full sample).
  std::map<std::tuple<int, int, int>, double> delta_table;

  bool solvable() const { return h <= 2; }
};

namespace detail {

inline bool rows_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

inline void add_linear(std::vector<LinearConstraint>& rows, LinearConstraint c) {
  if (std::isinf(c.delta) || (c.a.array() == 0.0).all()) return;  // vacuous
  for (auto& r : rows) {
    if (rows_equal(r.a, c.a) || rows_equal(r.a, -c.a)) {
      r.delta = std::min(r.delta, c.delta);
      return;
    }
  }
  rows.push_back(std::move(c));
}

inline void add_quadratic(std::vector<QuadConstraint>& rows, QuadConstraint c) {
  if (std::isinf(c.delta) || (c.q.array() == 0.0).all()) return;
  for (auto& r : rows) {
    if ((r.q.array() == c.q.array()).all() || (r.q.array() == -c.q.array()).all()) {
      r.delta = std::min(r.delta, c.delta);
      return;
    }
  }
  rows.push_back(std::move(c));
}

// Z columns all in {0,1} with pairwise disjoint supports (one binary variable
// or a one-hot block): every higher Z power collapses onto the m = 1 entries
// or vanishes.
inline bool zero_one_exclusive(const Eigen::MatrixXd& z) {
  if (!((z.array() == 0.0) || (z.array() == 1.0)).all()) return false;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (z.row(i).sum() > 1.0) return false;
  }
  return true;
}

inline void fill_moment_plugins(ScheduleContext& ctx, const Eigen::MatrixXd& z,
                                const Eigen::MatrixXd& omega, int g, int h) {
  for (int m = 1; m <= g; ++m) ctx.z_moment[4 * m] = sup_abs_moment(z, 4 * m);
  for (int q = 1; q <= h; ++q) ctx.v_moment[4 * q] = sup_abs_moment(omega, 4 * q);
}

}  // namespace detail

struct ConstraintOptions {
  FairnessMode mode = FairnessMode::disparate_impact;
  /// Skip m >= 2 when Z is {0,1}-coded with disjoint columns. Unset means
  /// "on whenever that holds".
  std::optional<bool> binary_reduction;
  std::size_t max_entries = kDefaultMaxEntries;
  /// Equalized odds: minimum samples per conditioning class.
  Eigen::Index min_group_size = 10;
};

/// Builds the constraint set for level (g,h). In equalized-odds mode every
/// (m,q) constraint is replicated per target class, each built from that
/// class's subsample. Coefficient structures are only built for q <= 2; higher
/// h yields an evaluation-only set (Delta table filled, no rows).
inline ConstraintSet build_constraint_set(const Dataset& ds, const FeatureMapSpec& spec, int g,
                                          int h, const DeltaSchedule& schedule,
                                          const ConstraintOptions& opts = {}) {
  if (g < 1 || h < 1) throw ParameterError("level (g,h) must have g,h >= 1");
  ConstraintSet cs;
  cs.g = g;
  cs.h = h;
  cs.mode = opts.mode;

  const Eigen::MatrixXd omega = feature_matrix(spec, ds);

  if (opts.mode == FairnessMode::disparate_impact) {
    cs.group_rows.push_back({});
  } else {
    for (const auto& pv : ds.protected_vars) {
      if (pv.type == ColumnType::continuous) {
        throw ModeError("equalized odds requires binary or categorical protected attributes; '" +
                        pv.name + "' is continuous");
      }
    }
    if (ds.target_type != ColumnType::binary) {
      throw ModeError("equalized odds requires a binary target");
    }
    for (double cls : {-1.0, 1.0}) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < ds.n(); ++i) {
        if (ds.y(i) == cls) rows.push_back(i);
      }
      const std::string label =
          ds.target_levels.size() == 2 ? ds.target_levels[cls > 0 ? 1 : 0]
                                       : (cls > 0 ? std::string("+1") : std::string("-1"));
      if (static_cast<Eigen::Index>(rows.size()) < opts.min_group_size) {
        throw CategoryError("equalized-odds class '" + label + "' has " +
                            std::to_string(rows.size()) + " samples, need at least " +
                            std::to_string(opts.min_group_size));
      }
      cs.conditioning.push_back(label);
      cs.group_rows.push_back(std::move(rows));
    }
  }

  const bool can_reduce = detail::zero_one_exclusive(ds.z);
  cs.binary_reduction = opts.binary_reduction.value_or(true) && can_reduce;
  const int g_built = cs.binary_reduction ? 1 : g;

  for (std::size_t gi = 0; gi < cs.group_rows.size(); ++gi) {
    const int group = opts.mode == FairnessMode::disparate_impact ? -1 : static_cast<int>(gi);
    Eigen::MatrixXd om, zz;
    if (group < 0) {
      om = omega;
      zz = ds.z;
    } else {
      const auto& rows = cs.group_rows[gi];
      om.resize(static_cast<Eigen::Index>(rows.size()), omega.cols());
      zz.resize(static_cast<Eigen::Index>(rows.size()), ds.z.cols());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        om.row(static_cast<Eigen::Index>(k)) = omega.row(rows[k]);
        zz.row(static_cast<Eigen::Index>(k)) = ds.z.row(rows[k]);
      }
    }

    ScheduleContext ctx;
    ctx.n = static_cast<double>(om.rows());
    ctx.p = static_cast<double>(spec.p());
    ctx.d = 1.0;
    ctx.r = static_cast<double>(ds.r());
    ctx.rho = spec.rho();
    if (schedule.kind == ScheduleKind::finite_moment) {
      detail::fill_moment_plugins(ctx, zz, om, g, h);
    }

    for (int q = 1; q <= h; ++q) {
      double min_delta = std::numeric_limits<double>::infinity();
      for (int m = 1; m <= g; ++m) {
        const double dl = schedule.delta(m, q, ctx);
        cs.delta_table[{m, q, group}] = dl;
        min_delta = std::min(min_delta, dl);
      }
      if (q > 2) continue;
      for (int m = 1; m <= g_built; ++m) {
        // with reduction the kept m = 1 block must honour the tightest Delta over m
        const double dl = cs.binary_reduction ? min_delta : cs.delta_table[{m, q, group}];
        if (q == 1) {
          auto coef = linear_coef_tensor(om, zz, m, opts.max_entries);
          for (Eigen::Index s = 0; s < coef.c.rows(); ++s) {
            detail::add_linear(cs.linear, {m, group, coef.c.row(s).transpose(), dl});
          }
          cs.linear_blocks.push_back({std::move(coef), dl, group});
        } else {
          auto coef = quad_coef_family(om, zz, m, opts.max_entries);
          for (const auto& qm : coef.q_mats) detail::add_quadratic(cs.quadratic, {m, group, qm, dl});
          cs.quad_blocks.push_back({std::move(coef), dl, group});
        }
      }
    }
  }
  return cs;
}

/// max over (m,q) in [g] x [h] and groups of (residual - Delta), residuals
/// taken from the sample-based evaluator.
inline double max_violation(const DecisionRule& rule, const Dataset& ds, const ConstraintSet& cs,
                            std::size_t max_entries = kDefaultMaxEntries) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t gi = 0; gi < cs.group_rows.size(); ++gi) {
    const int group = cs.mode == FairnessMode::disparate_impact ? -1 : static_cast<int>(gi);
    const Dataset sub = group < 0 ? ds : ds.subset(cs.group_rows[gi]);
    for (int m = 1; m <= cs.g; ++m) {
      for (int q = 1; q <= cs.h; ++q) {
        const double dl = cs.delta_table.at({m, q, group});
        if (std::isinf(dl)) continue;
        worst = std::max(worst, constraint_residual_generic(rule, sub, m, q, max_entries) - dl);
      }
    }
  }
  return worst;
}

}  // namespace fairopt
