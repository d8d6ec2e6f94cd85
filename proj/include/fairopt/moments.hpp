#pragma once

// Empirical moment tensors of (Z, delta) and the coefficient structures that
// turn the level-(m,q) constraints into explicit polynomials in B for d = 1.
//
// Determinism: every mean is accumulated sequentially in dataset row order.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairopt/data_model.hpp"
#include "fairopt/error.hpp"

namespace fairopt {

/// Default cap on the number of entries of any tensor built here.
inline constexpr std::size_t kDefaultMaxEntries = 1'000'000;

/// Dense tensor, row-major over its multi-index.
struct MomentTensor {
  std::vector<Eigen::Index> shape;
  std::vector<double> entries;

  std::size_t size() const { return entries.size(); }
};

namespace detail {

// base^exp, saturating at SIZE_MAX.
inline std::size_t checked_pow(std::size_t base, int exp) {
  std::size_t out = 1;
  for (int k = 0; k < exp; ++k) {
    if (base != 0 && out > std::numeric_limits<std::size_t>::max() / base) {
      return std::numeric_limits<std::size_t>::max();
    }
    out *= base;
  }
  return out;
}

inline std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    return std::numeric_limits<std::size_t>::max();
  }
  return a * b;
}

inline void check_budget(std::size_t entries, std::size_t max_entries, int m, int q) {
  if (entries > max_entries) {
    throw LevelLimitError("level (m=" + std::to_string(m) + ", q=" + std::to_string(q) +
                          ") needs " +
                          (entries == std::numeric_limits<std::size_t>::max()
                               ? std::string("more than SIZE_MAX")
                               : std::to_string(entries)) +
                          " tensor entries, budget is " + std::to_string(max_entries) +
                          "; use a lower level");
  }
}

// Digits of `flat` in base `base`, most significant first (row-major order).
inline void decode_index(std::size_t flat, Eigen::Index base, std::vector<Eigen::Index>& digits) {
  for (auto k = digits.size(); k-- > 0;) {
    digits[k] = static_cast<Eigen::Index>(flat % static_cast<std::size_t>(base));
    flat /= static_cast<std::size_t>(base);
  }
}

// w_i = prod_k cols(i, sigma_k), multiplied left to right.
inline void product_column(const Eigen::MatrixXd& cols, const std::vector<Eigen::Index>& sigma,
                           Eigen::VectorXd& w) {
  const Eigen::Index n = cols.rows();
  w.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = 1.0;
    for (auto s : sigma) v *= cols(i, s);
    w(i) = v;
  }
}

inline double ordered_mean(const Eigen::VectorXd& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v(i);
  return s / static_cast<double>(v.size());
}

inline double ordered_mean_product(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
  return s / static_cast<double>(a.size());
}

inline void check_level(int m, const char* what) {
  if (m < 1) throw ParameterError(std::string(what) + " must be >= 1, got " + std::to_string(m));
}

}  // namespace detail

/// E_n(Z^{(x)m}): entry sigma = (1/n) sum_i prod_k Z_i[sigma_k].
inline MomentTensor z_power_moment(const Eigen::MatrixXd& z, int m,
                                   std::size_t max_entries = kDefaultMaxEntries) {
  detail::check_level(m, "m");
  if (z.rows() < 1) throw DataError("z_power_moment needs at least one sample");
  const Eigen::Index r = z.cols();
  const std::size_t count = detail::checked_pow(static_cast<std::size_t>(r), m);
  detail::check_budget(count, max_entries, m, 0);
  MomentTensor t;
  t.shape.assign(static_cast<std::size_t>(m), r);
  t.entries.resize(count);
  std::vector<Eigen::Index> sigma(static_cast<std::size_t>(m));
  Eigen::VectorXd w;
  for (std::size_t k = 0; k < count; ++k) {
    detail::decode_index(k, r, sigma);
    detail::product_column(z, sigma, w);
    t.entries[k] = detail::ordered_mean(w);
  }
  return t;
}

/// Max absolute entry; NaN or Inf entries raise NumericError.
inline double linf_norm(const MomentTensor& t) {
  double out = 0.0;
  for (double v : t.entries) {
    if (!std::isfinite(v)) throw NumericError("non-finite tensor entry");
    out = std::max(out, std::abs(v));
  }
  return out;
}

inline double linf_norm(const Eigen::MatrixXd& a) {
  if (!a.allFinite()) throw NumericError("non-finite entry");
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Row sigma of `c` (sigma in [r]^m, row-major) holds
/// E_n(w_sigma Omega) - E_n(w_sigma) E_n(Omega) with w_sigma = prod_k Z[sigma_k],
/// so the (m,1) residual of a d = 1 rule is max_sigma |c.row(sigma) . b|.
struct LinearCoefTensor {
  int m = 1;
  Eigen::Index r = 0;
  Eigen::Index p = 0;
  Eigen::MatrixXd c;  // r^m x p
};

/// q_mats[sigma] = sym(E_n(w_sigma Omega Omega^T) - E_n(w_sigma) E_n(Omega Omega^T)),
/// so the (m,2) residual of a d = 1 rule is max_sigma |b Q_sigma b^T|.
struct QuadCoefFamily {
  int m = 1;
  Eigen::Index r = 0;
  Eigen::Index p = 0;
  std::vector<Eigen::MatrixXd> q_mats;
};

inline LinearCoefTensor linear_coef_tensor(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& z,
                                           int m, std::size_t max_entries = kDefaultMaxEntries) {
  detail::check_level(m, "m");
  if (omega.rows() != z.rows()) throw ShapeError("Omega and Z row counts differ");
  if (omega.rows() < 1) throw DataError("coefficient tensor needs at least one sample");
  const Eigen::Index n = omega.rows(), p = omega.cols(), r = z.cols();
  const std::size_t count = detail::checked_pow(static_cast<std::size_t>(r), m);
  detail::check_budget(detail::checked_mul(count, static_cast<std::size_t>(p)), max_entries, m, 1);

  LinearCoefTensor out;
  out.m = m;
  out.r = r;
  out.p = p;
  out.c.resize(static_cast<Eigen::Index>(count), p);
  Eigen::VectorXd omega_mean(p);
  for (Eigen::Index j = 0; j < p; ++j) omega_mean(j) = detail::ordered_mean(omega.col(j));

  std::vector<Eigen::Index> sigma(static_cast<std::size_t>(m));
  Eigen::VectorXd w;
  for (std::size_t k = 0; k < count; ++k) {
    detail::decode_index(k, r, sigma);
    detail::product_column(z, sigma, w);
    const double w_mean = detail::ordered_mean(w);
    for (Eigen::Index j = 0; j < p; ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += w(i) * omega(i, j);
      out.c(static_cast<Eigen::Index>(k), j) = s / static_cast<double>(n) - w_mean * omega_mean(j);
    }
  }
  return out;
}

inline LinearCoefTensor linear_coef_tensor(const Dataset& ds, const FeatureMapSpec& spec, int m,
                                           std::size_t max_entries = kDefaultMaxEntries) {
  return linear_coef_tensor(feature_matrix(spec, ds), ds.z, m, max_entries);
}

inline QuadCoefFamily quad_coef_family(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& z,
                                       int m, std::size_t max_entries = kDefaultMaxEntries) {
  detail::check_level(m, "m");
  if (omega.rows() != z.rows()) throw ShapeError("Omega and Z row counts differ");
  if (omega.rows() < 1) throw DataError("coefficient family needs at least one sample");
  const Eigen::Index n = omega.rows(), p = omega.cols(), r = z.cols();
  const std::size_t count = detail::checked_pow(static_cast<std::size_t>(r), m);
  detail::check_budget(detail::checked_mul(count, static_cast<std::size_t>(p * p)), max_entries,
                       m, 2);

  // E_n(Omega Omega^T), upper triangle accumulated in row order
  Eigen::MatrixXd second(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a; b < p; ++b) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += omega(i, a) * omega(i, b);
      second(a, b) = second(b, a) = s / static_cast<double>(n);
    }
  }

  QuadCoefFamily out;
  out.m = m;
  out.r = r;
  out.p = p;
  out.q_mats.reserve(count);
  std::vector<Eigen::Index> sigma(static_cast<std::size_t>(m));
  Eigen::VectorXd w;
  for (std::size_t k = 0; k < count; ++k) {
    detail::decode_index(k, r, sigma);
    detail::product_column(z, sigma, w);
    const double w_mean = detail::ordered_mean(w);
    Eigen::MatrixXd q(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = a; b < p; ++b) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += w(i) * omega(i, a) * omega(i, b);
        q(a, b) = s / static_cast<double>(n) - w_mean * second(a, b);
      }
    }
    // mirror the upper triangle so Q == Q^T bit for bit
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = 0; b < a; ++b) q(a, b) = q(b, a);
    }
    out.q_mats.push_back(std::move(q));
  }
  return out;
}

inline QuadCoefFamily quad_coef_family(const Dataset& ds, const FeatureMapSpec& spec, int m,
                                       std::size_t max_entries = kDefaultMaxEntries) {
  return quad_coef_family(feature_matrix(spec, ds), ds.z, m, max_entries);
}

/// Signed tensor E_n(U^{(x)m} (x) V^{(x)q}) - E_n(U^{(x)m}) (x) E_n(V^{(x)q}),
/// shape r^m x d^q flattened row-major (sigma first, then tau).
inline MomentTensor joint_minus_product(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, int m,
                                        int q, std::size_t max_entries = kDefaultMaxEntries) {
  detail::check_level(m, "m");
  detail::check_level(q, "q");
  if (u.rows() != v.rows()) throw ShapeError("sample matrices have different row counts");
  if (u.rows() < 1) throw DataError("moment residual needs at least one sample");
  const Eigen::Index r = u.cols(), d = v.cols();
  const std::size_t nu = detail::checked_pow(static_cast<std::size_t>(r), m);
  const std::size_t nv = detail::checked_pow(static_cast<std::size_t>(d), q);
  detail::check_budget(detail::checked_mul(nu, nv), max_entries, m, q);

  std::vector<Eigen::VectorXd> vcols(nv);
  std::vector<double> vmeans(nv);
  std::vector<Eigen::Index> tau(static_cast<std::size_t>(q));
  for (std::size_t t = 0; t < nv; ++t) {
    detail::decode_index(t, d, tau);
    detail::product_column(v, tau, vcols[t]);
    vmeans[t] = detail::ordered_mean(vcols[t]);
  }

  MomentTensor out;
  out.shape.assign(static_cast<std::size_t>(m), r);
  out.shape.insert(out.shape.end(), static_cast<std::size_t>(q), d);
  out.entries.resize(nu * nv);
  std::vector<Eigen::Index> sigma(static_cast<std::size_t>(m));
  Eigen::VectorXd w;
  for (std::size_t s = 0; s < nu; ++s) {
    detail::decode_index(s, r, sigma);
    detail::product_column(u, sigma, w);
    const double w_mean = detail::ordered_mean(w);
    for (std::size_t t = 0; t < nv; ++t) {
      out.entries[s * nv + t] = detail::ordered_mean_product(w, vcols[t]) - w_mean * vmeans[t];
    }
  }
  return out;
}

/// Signed (m,q) residual tensor of a rule, computed from its outputs on the
/// samples (no coefficient shortcut). Works for any d.
inline MomentTensor constraint_residual_tensor(const DecisionRule& rule, const Dataset& ds, int m,
                                               int q,
                                               std::size_t max_entries = kDefaultMaxEntries) {
  return joint_minus_product(ds.z, rule.outputs(ds), m, q, max_entries);
}

/// l_inf norm of the (m,q) joint-minus-product tensor of a rule.
inline double constraint_residual_generic(const DecisionRule& rule, const Dataset& ds, int m,
                                          int q, std::size_t max_entries = kDefaultMaxEntries) {
  return linf_norm(constraint_residual_tensor(rule, ds, m, q, max_entries));
}

}  // namespace fairopt
