#pragma once

// Primal log-barrier interior-point method for the d = 1 convex subproblems:
//
//   minimize   loss(b)
//   subject to |a_k . b| <= Delta_k           (Delta_k = 0 handled as equality)
//              a_j . b <= c_j
//              b^T P_l b + q_l . b <= c_l      (P_l PSD)
//              |b|^2 <= lambda
//
// Hinge and pinball losses use one slack per sample, s_i >= kappa_ij (Omega_i . b) + h_ij
// for j = 1,2; the slacks are eliminated from each Newton system by a
// per-sample Schur complement so every step costs O(n p^2).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace fairopt::detail {

struct AffineRow {
  Eigen::VectorXd a;
  double c = 0.0;  // a . b <= c
};

struct ConvexQuadRow {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double c = 0.0;  // b^T P b + q . b <= c
};

struct BarrierProblem {
  const Eigen::MatrixXd* omega = nullptr;  // n x p
  const Eigen::VectorXd* y = nullptr;
  bool squared = false;
  // slack losses: per-sample epigraph pieces (n x 2 each)
  Eigen::MatrixX2d kappa, h;

  std::vector<AffineRow> affine;
  std::vector<ConvexQuadRow> quad;
  std::vector<Eigen::VectorXd> equalities;  // a . b = 0
  double lambda = std::numeric_limits<double>::infinity();
};

struct BarrierOptions {
  double t0 = 1.0;
  double mu = 10.0;
  double gap_rel = 1e-9;
  double gap_abs = 1e-10;
  double centering_tol = 1e-10;  // half squared Newton decrement
  int max_newton = 3000;
  double rank_tol = 1e-12;
};

enum class BarrierStatus { converged, max_iter, infeasible_start };

struct BarrierResult {
  Eigen::VectorXd b;
  BarrierStatus status = BarrierStatus::converged;
  int newton_steps = 0;
  double gap_bound = 0.0;
};

/// Orthonormal basis of {b : E b = 0} for the rows of E.
inline Eigen::MatrixXd null_space(const std::vector<Eigen::VectorXd>& rows, Eigen::Index p,
                                  double rank_tol) {
  if (rows.empty()) return Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd e(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t k = 0; k < rows.size(); ++k) e.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > rank_tol * std::max(smax, 1.0)) ++rank;
  }
  return svd.matrixV().rightCols(p - rank);
}

class BarrierSolver {
 public:
  BarrierSolver(const BarrierProblem& prob, const BarrierOptions& opts) : pr_(prob), opts_(opts) {
    const Eigen::MatrixXd& om = *pr_.omega;
    n_ = om.rows();
    p_ = om.cols();
    if (pr_.squared) {
      gram2_ = (2.0 / static_cast<double>(n_)) * (om.transpose() * om);
      lin2_ = (2.0 / static_cast<double>(n_)) * (om.transpose() * *pr_.y);
    }
    basis_ = null_space(pr_.equalities, p_, opts_.rank_tol);
    m_ineq_ = static_cast<double>(pr_.affine.size() + pr_.quad.size()) +
              (std::isfinite(pr_.lambda) ? 1.0 : 0.0) + (pr_.squared ? 0.0 : 2.0 * n_);
  }

  /// Loss value at b with optimal slacks.
  double loss(const Eigen::VectorXd& b) const {
    const Eigen::VectorXd u = *pr_.omega * b;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (pr_.squared) {
        const double e = (*pr_.y)(i) - u(i);
        s += e * e;
      } else {
        s += std::max(pr_.kappa(i, 0) * u(i) + pr_.h(i, 0), pr_.kappa(i, 1) * u(i) + pr_.h(i, 1));
      }
    }
    return s / static_cast<double>(n_);
  }

  /// Runs the barrier method from `start`; `start` is projected onto the
  /// equality null space and then shrunk toward 0 until strictly feasible.
  BarrierResult solve(const Eigen::VectorXd& start) const {
    BarrierResult res;
    std::optional<Eigen::VectorXd> b0;
    const Eigen::VectorXd proj = basis_ * (basis_.transpose() * start);
    for (double theta : {1.0, 0.999, 0.99, 0.9, 0.5, 0.1, 0.0}) {
      const Eigen::VectorXd cand = theta * proj;
      if (constraints_strict(cand)) {
        b0 = cand;
        break;
      }
    }
    if (!b0) {
      res.b = proj;
      res.status = BarrierStatus::infeasible_start;
      return res;
    }
    Eigen::VectorXd b = *b0;
    Eigen::VectorXd s;
    if (!pr_.squared) {
      const Eigen::VectorXd u = *pr_.omega * b;
      s.resize(n_);
      for (Eigen::Index i = 0; i < n_; ++i) {
        s(i) = std::max(pr_.kappa(i, 0) * u(i) + pr_.h(i, 0), pr_.kappa(i, 1) * u(i) + pr_.h(i, 1)) + 1.0;
      }
    }

    double t = opts_.t0;
    int steps = 0;
    while (true) {
      const bool ok = center(t, b, s, steps);
      const double f = loss(b);
      const double gap = m_ineq_ / t;
      res.gap_bound = gap;
      if (!ok) {
        res.status = BarrierStatus::max_iter;
        break;
      }
      if (m_ineq_ == 0.0 || gap <= std::max(opts_.gap_rel * std::abs(f), opts_.gap_abs)) break;
      t *= opts_.mu;
    }
    res.b = b;
    res.newton_steps = steps;
    return res;
  }

 private:
  bool constraints_strict(const Eigen::VectorXd& b) const {
    for (const auto& r : pr_.affine) {
      if (!(r.a.dot(b) - r.c < 0.0)) return false;
    }
    for (const auto& r : pr_.quad) {
      if (!(b.dot(r.P * b) + r.q.dot(b) - r.c < 0.0)) return false;
    }
    if (std::isfinite(pr_.lambda) && !(b.squaredNorm() - pr_.lambda < 0.0)) return false;
    return true;
  }

  // Barrier objective; +inf outside the strict interior.
  double phi(double t, const Eigen::VectorXd& b, const Eigen::VectorXd& s) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double val = 0.0;
    for (const auto& r : pr_.affine) {
      const double g = r.a.dot(b) - r.c;
      if (!(g < 0.0)) return inf;
      val -= std::log(-g);
    }
    for (const auto& r : pr_.quad) {
      const double g = b.dot(r.P * b) + r.q.dot(b) - r.c;
      if (!(g < 0.0)) return inf;
      val -= std::log(-g);
    }
    if (std::isfinite(pr_.lambda)) {
      const double g = b.squaredNorm() - pr_.lambda;
      if (!(g < 0.0)) return inf;
      val -= std::log(-g);
    }
    const Eigen::VectorXd u = *pr_.omega * b;
    if (pr_.squared) {
      val += t * ((*pr_.y - u).squaredNorm() / static_cast<double>(n_));
      return val;
    }
    double ssum = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double dd = s(i) - pr_.kappa(i, j) * u(i) - pr_.h(i, j);
        if (!(dd > 0.0)) return inf;
        val -= std::log(dd);
      }
      ssum += s(i);
    }
    return val + t * ssum / static_cast<double>(n_);
  }

  // Newton centering at fixed t. Returns false when the step budget runs out.
  bool center(double t, Eigen::VectorXd& b, Eigen::VectorXd& s, int& steps) const {
    const Eigen::MatrixXd& om = *pr_.omega;
    const Eigen::Index k = basis_.cols();
    if (k == 0 && pr_.squared) return true;
    while (true) {
      if (steps >= opts_.max_newton) return false;
      ++steps;

      Eigen::VectorXd gb = Eigen::VectorXd::Zero(p_);
      Eigen::MatrixXd hb = Eigen::MatrixXd::Zero(p_, p_);
      for (const auto& r : pr_.affine) {
        const double g = r.a.dot(b) - r.c;
        gb += r.a / (-g);
        hb.noalias() += (r.a * r.a.transpose()) / (g * g);
      }
      for (const auto& r : pr_.quad) {
        const Eigen::VectorXd grad = 2.0 * (r.P * b) + r.q;
        const double g = b.dot(r.P * b) + r.q.dot(b) - r.c;
        gb += grad / (-g);
        hb.noalias() += (grad * grad.transpose()) / (g * g) + (2.0 / (-g)) * r.P;
      }
      if (std::isfinite(pr_.lambda)) {
        const double g = b.squaredNorm() - pr_.lambda;
        gb += (2.0 * b) / (-g);
        hb.noalias() += (4.0 * b * b.transpose()) / (g * g);
        hb.diagonal().array() += 2.0 / (-g);
      }

      Eigen::VectorXd gs, hss, hbs_coef;
      Eigen::VectorXd rhs_b;
      if (pr_.squared) {
        gb += t * (gram2_ * b - lin2_);
        hb += t * gram2_;
        rhs_b = -gb;
      } else {
        const Eigen::VectorXd u = om * b;
        gs.resize(n_);
        hss.resize(n_);
        hbs_coef.resize(n_);
        Eigen::VectorXd gu(n_), w(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
          double a[2], inv[2];
          for (int j = 0; j < 2; ++j) {
            const double dd = s(i) - pr_.kappa(i, j) * u(i) - pr_.h(i, j);
            inv[j] = 1.0 / dd;
            a[j] = inv[j] * inv[j];
          }
          const double k0 = pr_.kappa(i, 0), k1 = pr_.kappa(i, 1);
          gs(i) = t / static_cast<double>(n_) - inv[0] - inv[1];
          gu(i) = k0 * inv[0] + k1 * inv[1];
          hss(i) = a[0] + a[1];
          hbs_coef(i) = -(k0 * a[0] + k1 * a[1]);
          w(i) = a[0] * a[1] * (k0 - k1) * (k0 - k1) / (a[0] + a[1]);
        }
        gb += om.transpose() * gu;
        hb.noalias() += om.transpose() * w.asDiagonal() * om;
        // -g_b + H_bs H_ss^{-1} g_s
        rhs_b = -gb + om.transpose() * (hbs_coef.cwiseProduct(gs).cwiseQuotient(hss));
      }

      Eigen::VectorXd db = Eigen::VectorXd::Zero(p_);
      if (k > 0) {
        Eigen::MatrixXd hr = basis_.transpose() * hb * basis_;
        const Eigen::VectorXd gr = basis_.transpose() * rhs_b;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hr);
        Eigen::VectorXd du = ldlt.solve(gr);
        if (ldlt.info() != Eigen::Success || !du.allFinite()) {
          hr.diagonal().array() += 1e-12 * std::max(1.0, hr.diagonal().cwiseAbs().maxCoeff());
          du = hr.ldlt().solve(gr);
        }
        db = basis_ * du;
      }
      Eigen::VectorXd ds;
      double decrement = 0.0;  // -grad . step
      if (pr_.squared) {
        decrement = -gb.dot(db);
      } else {
        const Eigen::VectorXd du_out = om * db;
        ds = (-gs - hbs_coef.cwiseProduct(du_out)).cwiseQuotient(hss);
        decrement = -(gb.dot(db) + gs.dot(ds));
      }
      if (!(decrement > 0.0) || decrement / 2.0 <= opts_.centering_tol) return true;

      const double f0 = phi(t, b, s);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 80; ++ls) {
        const Eigen::VectorXd bn = b + alpha * db;
        Eigen::VectorXd sn;
        if (!pr_.squared) sn = s + alpha * ds;
        const double f1 = phi(t, bn, sn);
        if (std::isfinite(f1) && f1 < f0 && f1 <= f0 - 0.25 * alpha * decrement) {
          b = bn;
          if (!pr_.squared) s = sn;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      // no Armijo progress: the decrement is below the floating-point resolution of phi
      if (!moved) return true;
    }
  }

  const BarrierProblem& pr_;
  BarrierOptions opts_;
  Eigen::Index n_ = 0, p_ = 0;
  Eigen::MatrixXd gram2_;
  Eigen::VectorXd lin2_;
  Eigen::MatrixXd basis_;
  double m_ineq_ = 0.0;
};

}  // namespace fairopt::detail
