#pragma once

// Accuracy and fairness metrics, moment-based independence diagnostics, and
// an exact rational independence oracle for finite distributions.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "fairopt/constraints.hpp"
#include "fairopt/data_model.hpp"
#include "fairopt/detail/sphere.hpp"
#include "fairopt/error.hpp"
#include "fairopt/moments.hpp"

namespace fairopt {

/// Two-sample KS distance between empirical CDFs, evaluated at every sample point.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw GroupError("KS needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() || j < b.size()) {
    const double t = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

namespace detail {

inline std::map<int, std::vector<double>> split_by_group(const Eigen::VectorXd& scores,
                                                         const std::vector<int>& groups) {
  if (static_cast<std::size_t>(scores.size()) != groups.size()) {
    throw ShapeError("scores and group labels differ in length");
  }
  std::map<int, std::vector<double>> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    out[groups[i]].push_back(scores(static_cast<Eigen::Index>(i)));
  }
  return out;
}

inline std::vector<int> groups_from_values(const Eigen::VectorXd& z) {
  std::map<double, int> code;
  for (Eigen::Index i = 0; i < z.size(); ++i) code.emplace(z(i), 0);
  int k = 0;
  for (auto& [v, c] : code) c = k++;
  std::vector<int> g(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) g[static_cast<std::size_t>(i)] = code.at(z(i));
  return g;
}

}  // namespace detail

/// Max over unordered group pairs of the two-sample KS distance.
inline double ks_categorical(const Eigen::VectorXd& scores, const std::vector<int>& groups) {
  const auto by = detail::split_by_group(scores, groups);
  if (by.size() < 2) throw GroupError("fairness KS needs at least two nonempty groups");
  double best = 0.0;
  for (auto a = by.begin(); a != by.end(); ++a) {
    for (auto b = std::next(a); b != by.end(); ++b) {
      best = std::max(best, ks_two_sample(a->second, b->second));
    }
  }
  return best;
}

/// KS between the score distributions of the two groups of a binary z.
inline double ks_binary(const Eigen::VectorXd& scores, const Eigen::VectorXd& z) {
  if (scores.size() != z.size()) throw ShapeError("scores and z differ in length");
  const auto groups = detail::groups_from_values(z);
  const int k = groups.empty() ? 0 : *std::max_element(groups.begin(), groups.end()) + 1;
  if (k != 2) {
    throw GroupError("ks_binary needs exactly two groups, found " + std::to_string(k));
  }
  return ks_categorical(scores, groups);
}

/// sup over the sample grid of |F_{Z,S}(z,s) - F_Z(z) F_S(s)|.
inline double ks_joint_product(const Eigen::VectorXd& scores, const Eigen::VectorXd& z) {
  const Eigen::Index n = scores.size();
  if (z.size() != n) throw ShapeError("scores and z differ in length");
  if (n < 2) throw DataError("ks_joint_product needs at least 2 samples");

  std::vector<double> svals(scores.data(), scores.data() + n);
  std::sort(svals.begin(), svals.end());
  svals.erase(std::unique(svals.begin(), svals.end()), svals.end());
  std::vector<std::size_t> srank(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    srank[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
        std::lower_bound(svals.begin(), svals.end(), scores(i)) - svals.begin());
  }
  // marginal CDF of S at each distinct score
  std::vector<double> fs(svals.size(), 0.0);
  for (auto r : srank) fs[r] += 1.0;
  for (std::size_t k = 1; k < fs.size(); ++k) fs[k] += fs[k - 1];

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return z(a) < z(b); });

  const double nn = static_cast<double>(n);
  std::vector<double> cnt(svals.size(), 0.0);
  double best = 0.0;
  std::size_t pos = 0;
  while (pos < order.size()) {
    const double zc = z(order[pos]);
    while (pos < order.size() && z(order[pos]) == zc) {
      cnt[srank[static_cast<std::size_t>(order[pos])]] += 1.0;
      ++pos;
    }
    const double fz = static_cast<double>(pos) / nn;
    double joint = 0.0;
    for (std::size_t k = 0; k < cnt.size(); ++k) {
      joint += cnt[k];
      best = std::max(best, std::abs(joint / nn - fz * fs[k] / nn));
    }
  }
  return best;
}

/// Max over target classes of the group KS restricted to that class.
inline double equalized_odds_gap(const Eigen::VectorXd& scores, const std::vector<int>& groups,
                                 const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != groups.size() || y.size() != scores.size()) {
    throw ShapeError("scores, groups and y differ in length");
  }
  const std::set<int> all(groups.begin(), groups.end());
  std::set<double> classes(y.data(), y.data() + y.size());
  double best = 0.0;
  for (double c : classes) {
    std::vector<double> sc;
    std::vector<int> gr;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) == c) {
        sc.push_back(scores(i));
        gr.push_back(groups[static_cast<std::size_t>(i)]);
      }
    }
    const std::set<int> present(gr.begin(), gr.end());
    for (int g : all) {
      if (!present.count(g)) {
        throw GroupError("empty equalized-odds cell (group " + std::to_string(g) + ", y = " +
                         std::to_string(c) + ")");
      }
    }
    best = std::max(best, ks_categorical(Eigen::Map<const Eigen::VectorXd>(
                                             sc.data(), static_cast<Eigen::Index>(sc.size())),
                                         gr));
  }
  return best;
}

/// Mann-Whitney AUC; y > 0 is the positive class, ties earn half credit.
inline double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& y) {
  const Eigen::Index n = scores.size();
  if (y.size() != n) throw ShapeError("scores and y differ in length");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });
  double pos = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores(order[j]) == scores(order[i])) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (y(order[k]) > 0) {
        pos += 1.0;
        rank_sum += mid_rank;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw GroupError("AUC needs both classes present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// 1 - SSE(pred) / SSE(train mean).
inline double out_of_sample_r2(const Eigen::VectorXd& pred, const Eigen::VectorXd& y_test,
                               double y_train_mean) {
  if (y_test.size() == 0) throw DataError("OR2 needs a nonempty test set");
  if (pred.size() != y_test.size()) throw ShapeError("pred and y_test differ in length");
  const double base = (y_test.array() - y_train_mean).square().sum();
  if (base == 0.0) throw NumericError("OR2 baseline SSE is zero");
  return 1.0 - (y_test - pred).squaredNorm() / base;
}

/// max over (m,q) in [g] x [h] of (residual_{m,q} / (m! q!))^{1/(m+q)}, a
/// level-truncated plug-in estimate of the mutual majorization.
inline double mutual_majorization_estimate(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& z,
                                           int g, int h) {
  if (g < 1 || h < 1) throw ParameterError("g and h must be >= 1");
  double best = 0.0;
  for (int m = 1; m <= g; ++m) {
    for (int q = 1; q <= h; ++q) {
      const double res = linf_norm(joint_minus_product(z, scores, m, q));
      best = std::max(best, std::pow(res / (factorial(m) * factorial(q)), 1.0 / (m + q)));
    }
  }
  return best;
}

struct CharacteristicBound {
  double value = 0.0;
  double J = 0.0;
  double P = 0.0;
  bool approximate = false;  // sphere suprema sampled (multivariate input)
};

/// Moment bound on the mutual characteristic of (U,V):
/// [(J + P) / ((g+1)! (h+1)!)]^{1/(g+h+3)}, with J and P taken as suprema of
/// absolute empirical moments over separate unit spheres for U and V.
inline CharacteristicBound mutual_characteristic_bound(const Eigen::MatrixXd& u,
                                                       const Eigen::MatrixXd& v, int g, int h,
                                                       double residual_tol) {
  if (g < 1 || h < 1) throw ParameterError("g and h must be >= 1");
  if (u.rows() != v.rows()) throw ShapeError("u and v differ in sample count");
  double worst = -1.0;
  int wm = 0, wq = 0;
  for (int m = 1; m <= g; ++m) {
    for (int q = 1; q <= h; ++q) {
      const double res = linf_norm(joint_minus_product(u, v, m, q));
      if (res > worst) {
        worst = res;
        wm = m;
        wq = q;
      }
    }
  }
  if (worst > residual_tol) {
    throw ResidualTooLargeError("moment residual " + std::to_string(worst) + " at (m=" +
                                std::to_string(wm) + ", q=" + std::to_string(wq) +
                                ") exceeds tolerance " + std::to_string(residual_tol));
  }

  CharacteristicBound out;
  out.approximate = u.cols() > 1 || v.cols() > 1;
  const Eigen::MatrixXd su = detail::sphere_directions(u.cols());
  const Eigen::MatrixXd sv = detail::sphere_directions(v.cols(), detail::kSphereDirections,
                                                       detail::kSphereSeed + 1);
  const Eigen::MatrixXd pu = (u * su).array().abs().pow(g + 1).matrix();  // n x K_u
  const Eigen::MatrixXd pv = (v * sv).array().abs().pow(h + 1).matrix();  // n x K_v
  const double n = static_cast<double>(u.rows());

  double sup_u = 0.0, sup_v = 0.0;
  for (Eigen::Index k = 0; k < pu.cols(); ++k) sup_u = std::max(sup_u, pu.col(k).mean());
  for (Eigen::Index k = 0; k < pv.cols(); ++k) sup_v = std::max(sup_v, pv.col(k).mean());
  out.P = sup_u * sup_v;

  // J: all axis pairs, then the sampled directions paired index by index
  const Eigen::Index au = u.cols() == 1 ? 1 : u.cols();
  const Eigen::Index av = v.cols() == 1 ? 1 : v.cols();
  for (Eigen::Index a = 0; a < au; ++a) {
    for (Eigen::Index b = 0; b < av; ++b) {
      out.J = std::max(out.J, pu.col(a).dot(pv.col(b)) / n);
    }
  }
  const Eigen::Index ru = pu.cols() - au, rv = pv.cols() - av;
  const Eigen::Index pairs = std::max(ru, rv);
  for (Eigen::Index k = 0; k < pairs; ++k) {
    const Eigen::Index a = ru > 0 ? au + k % ru : 0;
    const Eigen::Index b = rv > 0 ? av + k % rv : 0;
    out.J = std::max(out.J, pu.col(a).dot(pv.col(b)) / n);
  }

  const double denom = factorial(g + 1) * factorial(h + 1);
  out.value = std::pow((out.J + out.P) / denom, 1.0 / (g + h + 3));
  return out;
}

using Rational = boost::multiprecision::cpp_rational;

/// Finite joint distribution of (U,V) with exact probabilities.
struct DiscretePMF {
  struct Atom {
    std::vector<Rational> u;
    std::vector<Rational> v;
    Rational prob;
  };
  std::vector<Atom> atoms;

  void validate() const {
    if (atoms.empty()) throw DataError("pmf has no support points");
    Rational total = 0;
    const auto du = atoms.front().u.size(), dv = atoms.front().v.size();
    for (const auto& a : atoms) {
      if (a.prob < 0) throw DataError("pmf has a negative probability");
      if (a.u.size() != du || a.v.size() != dv) throw DataError("pmf atoms differ in dimension");
      total += a.prob;
    }
    if (total != 1) throw DataError("pmf probabilities sum to " + total.str() + ", not 1");
  }
};

/// Parses "3", "-2/7" or "0.125" exactly.
inline Rational parse_rational(const std::string& text) {
  using boost::multiprecision::cpp_int;
  const std::string s = detail::trim(text);
  try {
    const auto slash = s.find('/');
    if (slash != std::string::npos) {
      const cpp_int den(s.substr(slash + 1));
      if (den == 0) throw ParseError("zero denominator in '" + s + "'");
      return Rational(cpp_int(s.substr(0, slash)), den);
    }
    const auto dot = s.find('.');
    if (dot != std::string::npos) {
      const std::string frac = s.substr(dot + 1);
      std::string whole = s.substr(0, dot);
      const bool neg = !whole.empty() && whole[0] == '-';
      if (neg || (!whole.empty() && whole[0] == '+')) whole.erase(0, 1);
      if (whole.empty()) whole = "0";
      cpp_int scale = 1;
      for (std::size_t k = 0; k < frac.size(); ++k) scale *= 10;
      Rational out(cpp_int(whole) * scale + (frac.empty() ? cpp_int(0) : cpp_int(frac)), scale);
      return neg ? Rational(-out) : out;
    }
    return Rational(cpp_int(s));
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const ParseError*>(&e)) throw;
    throw ParseError("cannot parse rational '" + s + "'");
  }
}

namespace detail {

inline Rational json_rational(const nlohmann::json& j) {
  if (j.is_string()) return parse_rational(j.get<std::string>());
  if (j.is_number_integer()) return Rational(j.get<long long>());
  throw ParseError("pmf values must be integers or rational strings, got " + j.dump());
}

inline std::vector<Rational> json_rational_vector(const nlohmann::json& j) {
  std::vector<Rational> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(json_rational(e));
  } else {
    out.push_back(json_rational(j));
  }
  return out;
}

}  // namespace detail

/// {"support": [{"u": "1/2" | [..], "v": ..., "p": "1/4"}, ...]}
inline DiscretePMF parse_pmf(const nlohmann::json& j) {
  DiscretePMF pmf;
  try {
    for (const auto& a : j.at("support")) {
      pmf.atoms.push_back({detail::json_rational_vector(a.at("u")),
                           detail::json_rational_vector(a.at("v")),
                           detail::json_rational(a.at("p"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed pmf: ") + e.what());
  }
  pmf.validate();
  return pmf;
}

inline DiscretePMF load_pmf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pmf file: " + path);
  try {
    return parse_pmf(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed pmf file " + path + ": " + e.what());
  }
}

struct OracleResult {
  bool pass = true;
  Rational worst_residual = 0;
  int fail_m = 0;  // first failing level in (m,q) lexicographic order, 0 if none
  int fail_q = 0;
};

/// Checks E(U^{(x)m} (x) V^{(x)q}) = E(U^{(x)m}) (x) E(V^{(x)q}) exactly for all
/// (m,q) in [g] x [h].
inline OracleResult independence_oracle(const DiscretePMF& pmf, int g, int h) {
  pmf.validate();
  if (g < 1 || h < 1) throw ParameterError("g and h must be >= 1");
  const auto du = pmf.atoms.front().u.size(), dv = pmf.atoms.front().v.size();
  OracleResult out;

  auto power_products = [&](bool is_u, int k, std::size_t atom) {
    const auto& x = is_u ? pmf.atoms[atom].u : pmf.atoms[atom].v;
    const std::size_t dim = is_u ? du : dv;
    const std::size_t count = detail::checked_pow(dim, k);
    std::vector<Rational> vals(count);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(k));
    for (std::size_t f = 0; f < count; ++f) {
      detail::decode_index(f, static_cast<Eigen::Index>(dim), idx);
      Rational v = 1;
      for (auto i : idx) v *= x[static_cast<std::size_t>(i)];
      vals[f] = v;
    }
    return vals;
  };

  for (int m = 1; m <= g; ++m) {
    for (int q = 1; q <= h; ++q) {
      const std::size_t nu = detail::checked_pow(du, m), nv = detail::checked_pow(dv, q);
      std::vector<Rational> eu(nu, 0), ev(nv, 0), joint(nu * nv, 0);
      for (std::size_t a = 0; a < pmf.atoms.size(); ++a) {
        const auto& pr = pmf.atoms[a].prob;
        const auto pu = power_products(true, m, a);
        const auto pv = power_products(false, q, a);
        for (std::size_t s = 0; s < nu; ++s) eu[s] += pr * pu[s];
        for (std::size_t t = 0; t < nv; ++t) ev[t] += pr * pv[t];
        for (std::size_t s = 0; s < nu; ++s) {
          for (std::size_t t = 0; t < nv; ++t) joint[s * nv + t] += pr * pu[s] * pv[t];
        }
      }
      for (std::size_t s = 0; s < nu; ++s) {
        for (std::size_t t = 0; t < nv; ++t) {
          Rational diff = joint[s * nv + t] - eu[s] * ev[t];
          if (diff < 0) diff = -diff;
          if (diff != 0 && out.pass) {
            out.pass = false;
            out.fail_m = m;
            out.fail_q = q;
          }
          if (diff > out.worst_residual) out.worst_residual = diff;
        }
      }
    }
  }
  return out;
}

/// Fairness summary of a score vector against a dataset's protected attributes.
struct FairnessReport {
  double ks = 0.0;
  std::optional<double> eo;
  double mm_hat = 0.0;
  std::string method;  // binary | categorical | joint_product
};

/// KS variant chosen per protected variable by its type; the report keeps the
/// largest value. Equalized odds is reported for a binary target with
/// discrete protected attributes.
inline FairnessReport fairness_report(const Eigen::VectorXd& scores, const Dataset& ds, int g = 1,
                                      int h = 1) {
  if (scores.size() != ds.n()) throw ShapeError("scores length does not match dataset");
  if (ds.protected_vars.empty()) throw GroupError("dataset has no protected attributes");
  FairnessReport rep;
  bool all_discrete = true;
  for (const auto& pv : ds.protected_vars) {
    double v = 0.0;
    std::string method;
    if (pv.type == ColumnType::continuous) {
      v = ks_joint_product(scores, ds.z.col(pv.first_col));
      method = "joint_product";
      all_discrete = false;
    } else {
      v = ks_categorical(scores, pv.group);
      method = pv.type == ColumnType::binary ? "binary" : "categorical";
    }
    if (rep.method.empty() || v > rep.ks) rep.method = method;
    rep.ks = std::max(rep.ks, v);
  }
  if (all_discrete && ds.target_type == ColumnType::binary) {
    // a held-out fold can miss a (group, class) cell; eo is then left unset
    try {
      double eo = 0.0;
      for (const auto& pv : ds.protected_vars) {
        eo = std::max(eo, equalized_odds_gap(scores, pv.group, ds.y));
      }
      rep.eo = eo;
    } catch (const GroupError&) {
    }
  }
  rep.mm_hat = mutual_majorization_estimate(scores, ds.z, g, h);
  return rep;
}

}  // namespace fairopt
