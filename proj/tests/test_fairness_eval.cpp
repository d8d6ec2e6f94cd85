#include <random>

#include <gtest/gtest.h>

#include "fairopt/fairness_eval.hpp"

using namespace fairopt;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Brute-force KS oracle: evaluate both ECDFs at every pooled sample point.
double ks_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double best = 0;
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  for (double t : pts) {
    double fa = 0, fb = 0;
    for (double x : a) fa += x <= t;
    for (double x : b) fb += x <= t;
    best = std::max(best, std::abs(fa / a.size() - fb / b.size()));
  }
  return best;
}

double joint_product_oracle(const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
  const double n = static_cast<double>(s.size());
  double best = 0;
  for (Eigen::Index a = 0; a < s.size(); ++a) {
    for (Eigen::Index b = 0; b < s.size(); ++b) {
      double joint = 0, fz = 0, fs = 0;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        joint += (z(i) <= z(a) && s(i) <= s(b));
        fz += z(i) <= z(a);
        fs += s(i) <= s(b);
      }
      best = std::max(best, std::abs(joint / n - fz * fs / (n * n)));
    }
  }
  return best;
}

DiscretePMF product_pmf(const std::vector<std::pair<Rational, Rational>>& pu,
                        const std::vector<std::pair<Rational, Rational>>& pv) {
  DiscretePMF pmf;
  for (const auto& [u, p] : pu)
    for (const auto& [v, q] : pv) pmf.atoms.push_back({{u}, {v}, p * q});
  return pmf;
}

}  // namespace

TEST(KsBinary, Examples) {
  EXPECT_DOUBLE_EQ(ks_binary(vec({1, 2, 3, 4}), vec({1, 1, 0, 0})), 1.0);
  EXPECT_DOUBLE_EQ(ks_binary(vec({1, 2, 1, 2}), vec({1, 1, 0, 0})), 0.0);
  EXPECT_DOUBLE_EQ(ks_binary(vec({1, 2, 3}), vec({1, 0, 1})), 0.5);
  EXPECT_THROW(ks_binary(vec({1, 2}), vec({1, 1})), GroupError);
}

TEST(KsCategorical, Examples) {
  EXPECT_DOUBLE_EQ(ks_categorical(vec({1, 2, 1}), {0, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(ks_categorical(vec({1, 2, 1, 2, 1, 2}), {0, 0, 1, 1, 2, 2}), 0.0);
  const auto s = vec({0.3, 1.2, -0.5, 2.0, 0.7});
  EXPECT_DOUBLE_EQ(ks_categorical(s, {0, 1, 0, 1, 1}), ks_binary(s, vec({0, 1, 0, 1, 1})));
}

TEST(KsJointProduct, Examples) {
  EXPECT_DOUBLE_EQ(ks_joint_product(vec({3, 3, 3, 3}), vec({0.1, 2, -1, 5})), 0.0);
  EXPECT_DOUBLE_EQ(ks_joint_product(vec({1, 2}), vec({1, 2})), 0.25);
}

TEST(KsProperties, MatchBruteForceAndRange) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 6 + trial % 15;
    Eigen::VectorXd s(n), z(n);
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
      s(i) = trial % 3 == 0 ? small(rng) : nd(rng);  // ties on some trials
      z(i) = i < 2 ? i : small(rng) % 2;
      (z(i) == 0 ? a : b).push_back(s(i));
    }
    const double ks = ks_binary(s, z);
    EXPECT_DOUBLE_EQ(ks, ks_oracle(a, b));
    EXPECT_GE(ks, 0.0);
    EXPECT_LE(ks, 1.0);
    EXPECT_EQ(ks == 0.0, ks_oracle(a, b) == 0.0);
    // strictly increasing transform leaves every variant unchanged
    const Eigen::VectorXd t = (s.array() * 0.5).exp() + 3.0;
    EXPECT_DOUBLE_EQ(ks_binary(t, z), ks);
    Eigen::VectorXd zc(n);
    for (int i = 0; i < n; ++i) zc(i) = nd(rng);
    const double jp = ks_joint_product(s, zc);
    EXPECT_NEAR(jp, joint_product_oracle(s, zc), 1e-14);
    EXPECT_DOUBLE_EQ(ks_joint_product(t, zc), jp);
    EXPECT_LE(jp, 0.25);
  }
}

TEST(EqualizedOdds, Examples) {
  EXPECT_DOUBLE_EQ(equalized_odds_gap(vec({1, 2, 3, 4}), {1, 0, 1, 0}, vec({1, 1, -1, -1})), 1.0);
  EXPECT_DOUBLE_EQ(equalized_odds_gap(vec({1, 1, 2, 2}), {0, 1, 0, 1}, vec({1, 1, -1, -1})), 0.0);
  // y = +1 identical across groups, y = -1 group 0 {1,2} vs group 1 {1,3}: KS 0.5
  EXPECT_DOUBLE_EQ(equalized_odds_gap(vec({5, 5, 1, 2, 1, 3}), {0, 1, 0, 0, 1, 1},
                                      vec({1, 1, -1, -1, -1, -1})),
                   0.5);
  EXPECT_THROW(equalized_odds_gap(vec({1, 2, 3}), {0, 1, 0}, vec({1, 1, -1})), GroupError);
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc(vec({0.1, 0.2, 0.8, 0.9}), vec({-1, -1, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(auc(vec({2, 1}), vec({-1, 1})), 0.0);
  EXPECT_DOUBLE_EQ(auc(vec({1, 1, 1, 1}), vec({-1, 1, -1, 1})), 0.5);
  EXPECT_THROW(auc(vec({1, 2}), vec({1, 1})), GroupError);
}

TEST(Auc, MatchesPairCount) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 12;
    Eigen::VectorXd s(n), y(n);
    for (int i = 0; i < n; ++i) {
      s(i) = small(rng);
      y(i) = i < 2 ? (i == 0 ? 1 : -1) : (small(rng) % 2 ? 1 : -1);
    }
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y(i) > 0 && y(j) < 0) {
          den += 1;
          num += s(i) > s(j) ? 1.0 : (s(i) == s(j) ? 0.5 : 0.0);
        }
    EXPECT_NEAR(auc(s, y), num / den, 1e-15);
  }
}

TEST(OutOfSampleR2, Examples) {
  const auto y = vec({1, 2, 3, 6});
  EXPECT_DOUBLE_EQ(out_of_sample_r2(y, y, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(out_of_sample_r2(Eigen::VectorXd::Constant(4, 2.0), y, 2.0), 0.0);
  // baseline residuals (-1,0,1,4), SSE 18; prediction residuals with SSE 36
  const auto pred = vec({1 + 3, 2 + 3, 3 + 3, 6 + 3});
  EXPECT_DOUBLE_EQ(out_of_sample_r2(pred, y, 2.0), -1.0);
  EXPECT_THROW(out_of_sample_r2(vec({1, 1}), vec({1, 1}), 1.0), NumericError);
}

TEST(MutualMajorization, Examples) {
  Eigen::MatrixXd s(4, 1), z(4, 1);
  s << 0, 1, 0, 1;
  z << 0, 0, 1, 1;
  EXPECT_DOUBLE_EQ(mutual_majorization_estimate(s, z, 2, 2), 0.0);
  Eigen::MatrixXd d(2, 1);
  d << 0, 1;
  EXPECT_DOUBLE_EQ(mutual_majorization_estimate(d, d, 1, 1), 0.5);
}

TEST(MutualMajorization, MonotoneInLevel) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd s(30, 1), z(30, 1);
  for (int i = 0; i < 30; ++i) {
    z(i, 0) = nd(rng);
    s(i, 0) = 0.4 * z(i, 0) + nd(rng);
  }
  double prev = 0;
  for (int k = 1; k <= 3; ++k) {
    const double v = mutual_majorization_estimate(s, z, k, k);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(CharacteristicBound, FactorialDesign) {
  Eigen::MatrixXd u(4, 1), v(4, 1);
  u << 0, 1, 0, 1;
  v << 0, 0, 1, 1;
  const auto b = mutual_characteristic_bound(u, v, 1, 1, 1e-12);
  EXPECT_DOUBLE_EQ(b.J, 0.25);
  EXPECT_DOUBLE_EQ(b.P, 0.25);
  EXPECT_NEAR(b.value, std::pow(0.5 / 4.0, 0.2), 1e-15);
  EXPECT_NEAR(b.value, 0.6597, 1e-4);
  EXPECT_FALSE(b.approximate);
  const auto zero = mutual_characteristic_bound(0 * u, 0 * v, 1, 1, 1e-12);
  EXPECT_EQ(zero.value, 0.0);
}

TEST(CharacteristicBound, ResidualTooLarge) {
  Eigen::MatrixXd d(2, 1);
  d << 0, 1;
  try {
    mutual_characteristic_bound(d, d, 1, 1, 0.1);
    FAIL();
  } catch (const ResidualTooLargeError& e) {
    EXPECT_NE(std::string(e.what()).find("m=1, q=1"), std::string::npos);
  }
}

TEST(CharacteristicBound, DecreasesWithLevelOnUniformDesign) {
  // full grid of a uniform 5-point marginal: every residual is exactly zero
  Eigen::MatrixXd u(25, 1), v(25, 1);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      u(a * 5 + b, 0) = a / 4.0;
      v(a * 5 + b, 0) = b / 4.0;
    }
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 3; ++k) {
    const double val = mutual_characteristic_bound(u, v, k, k, 1e-12).value;
    EXPECT_LT(val, prev);
    prev = val;
  }
}

TEST(CharacteristicBound, MultivariateFlaggedApproximate) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd u(20, 2), v(20, 1);
  for (int i = 0; i < 20; ++i) {
    u(i, 0) = nd(rng);
    u(i, 1) = nd(rng);
    v(i, 0) = nd(rng);
  }
  const auto b = mutual_characteristic_bound(u, v, 1, 1, 10.0);
  EXPECT_TRUE(b.approximate);
  EXPECT_GT(b.value, 0.0);
}

TEST(Rationals, Parse) {
  EXPECT_EQ(parse_rational("1/3"), Rational(1, 3));
  EXPECT_EQ(parse_rational("0.25"), Rational(1, 4));
  EXPECT_EQ(parse_rational("-2"), Rational(-2));
}

TEST(Oracle, ProductPasses) {
  const auto pmf = product_pmf({{0, Rational(1, 2)}, {1, Rational(1, 2)}},
                               {{0, Rational(2, 3)}, {1, Rational(1, 3)}});
  for (int g = 1; g <= 3; ++g)
    for (int h = 1; h <= 3; ++h) EXPECT_TRUE(independence_oracle(pmf, g, h).pass);
}

TEST(Oracle, CopiedBernoulliFails) {
  DiscretePMF pmf;
  pmf.atoms = {{{0}, {0}, Rational(1, 2)}, {{1}, {1}, Rational(1, 2)}};
  const auto r = independence_oracle(pmf, 1, 1);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.worst_residual, Rational(1, 4));
}

TEST(Oracle, SquareFixtureNeedsSecondLevel) {
  DiscretePMF pmf;
  for (int u : {-1, 0, 1}) pmf.atoms.push_back({{u}, {u * u}, Rational(1, 3)});
  EXPECT_TRUE(independence_oracle(pmf, 1, 1).pass);
  const auto r = independence_oracle(pmf, 2, 1);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.fail_m, 2);
  EXPECT_EQ(r.fail_q, 1);
  EXPECT_EQ(r.worst_residual, Rational(2, 3) - Rational(4, 9));
}

TEST(Oracle, LoadsConfigFixtures) {
  const std::string dir = std::string(FAIROPT_SOURCE_DIR) + "/configs/";
  EXPECT_TRUE(independence_oracle(load_pmf(dir + "pmf_product.json"), 3, 3).pass);
  EXPECT_FALSE(independence_oracle(load_pmf(dir + "pmf_square.json"), 2, 1).pass);
}

TEST(Oracle, RejectsBadTotal) {
  DiscretePMF pmf;
  pmf.atoms = {{{0}, {0}, Rational(1, 2)}, {{1}, {1}, Rational(1, 3)}};
  EXPECT_ANY_THROW(independence_oracle(pmf, 1, 1));
}

TEST(Report, BinaryProtectedWithBinaryTarget) {
  Eigen::MatrixXd x(8, 1), z(8, 1);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  z << 0, 1, 0, 1, 0, 1, 0, 1;
  const Dataset ds = make_dataset(x, vec({1, 1, -1, -1, 1, 1, -1, -1}), z);
  const auto rep = fairness_report(x.col(0), ds);
  EXPECT_EQ(rep.method, "binary");
  EXPECT_DOUBLE_EQ(rep.ks, 0.25);
  ASSERT_TRUE(rep.eo.has_value());
  EXPECT_DOUBLE_EQ(*rep.eo, 0.5);
}

TEST(Report, EmptyCellLeavesEoUnset) {
  Eigen::MatrixXd x(4, 1), z(4, 1);
  x << 1, 2, 3, 4;
  z << 0, 1, 0, 1;
  const Dataset ds = make_dataset(x, vec({1, -1, 1, -1}), z);
  EXPECT_FALSE(fairness_report(x.col(0), ds).eo.has_value());
}
