#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fairopt/moments.hpp"

using namespace fairopt;

namespace {

// Independent oracle: the (m,1) residual entry for d = 1 written with plain loops.
double oracle_linear_entry(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& z,
                           const std::vector<int>& sigma, const Eigen::VectorXd& b) {
  const auto n = static_cast<double>(omega.rows());
  double ew = 0, es = 0, ews = 0;
  for (Eigen::Index i = 0; i < omega.rows(); ++i) {
    double w = 1;
    for (int s : sigma) w *= z(i, s);
    const double score = omega.row(i).dot(b);
    ew += w;
    es += score;
    ews += w * score;
  }
  return ews / n - (ew / n) * (es / n);
}

Dataset random_dataset(std::mt19937_64& rng, int n, int px, int r, bool binary_z) {
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.4);
  Eigen::MatrixXd x(n, px), z(n, r);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < px; ++j) x(i, j) = nd(rng);
    for (int j = 0; j < r; ++j) z(i, j) = binary_z ? (coin(rng) ? 1.0 : 0.0) : nd(rng);
    y(i) = nd(rng);
  }
  return make_dataset(x, y, z);
}

}  // namespace

TEST(ZPowerMoment, HandAverages) {
  Eigen::MatrixXd z(2, 2);
  z << 1, 0, 0, 1;
  const auto m1 = z_power_moment(z, 1);
  EXPECT_EQ(m1.entries, (std::vector<double>{0.5, 0.5}));
  const auto m2 = z_power_moment(z, 2);
  EXPECT_EQ(m2.shape, (std::vector<Eigen::Index>{2, 2}));
  EXPECT_EQ(m2.entries, (std::vector<double>{0.5, 0.0, 0.0, 0.5}));
}

TEST(ZPowerMoment, ConstantColumn) {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(5, 1, 1.5);
  for (int m = 1; m <= 4; ++m) {
    for (double v : z_power_moment(z, m).entries) EXPECT_DOUBLE_EQ(v, std::pow(1.5, m));
  }
}

TEST(ZPowerMoment, BudgetExceeded) {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Ones(3, 10);
  EXPECT_THROW(z_power_moment(z, 7), LevelLimitError);
  EXPECT_NO_THROW(z_power_moment(z, 3, 1000));
  EXPECT_THROW(z_power_moment(z, 3, 999), LevelLimitError);
}

TEST(LinfNorm, Examples) {
  EXPECT_EQ(linf_norm(MomentTensor{{2}, {0.0, 0.0}}), 0.0);
  EXPECT_EQ(linf_norm(MomentTensor{{2}, {-3.0, 2.0}}), 3.0);
  EXPECT_EQ(linf_norm(MomentTensor{{2, 2}, {-0.25, 0.25, 0.0, 0.0}}), 0.25);
  EXPECT_THROW(linf_norm(MomentTensor{{1}, {std::nan("")}}), NumericError);
}

TEST(LinearCoef, ScalarHandComputation) {
  Eigen::MatrixXd omega(2, 1), z(2, 1);
  omega << 1, -1;
  z << 0, 1;
  const auto c = linear_coef_tensor(omega, z, 1);
  ASSERT_EQ(c.c.rows(), 1);
  EXPECT_DOUBLE_EQ(c.c(0, 0), -0.5);
}

TEST(LinearCoef, ConstantZGivesZero) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd omega(8, 3);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 3; ++j) omega(i, j) = nd(rng);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Constant(8, 1, 2.0);
  EXPECT_LE(linf_norm(linear_coef_tensor(omega, z, 2).c), 1e-14);
  for (const auto& q : quad_coef_family(omega, z, 1).q_mats) EXPECT_LE(linf_norm(q), 1e-14);
}

TEST(LinearCoef, BinaryRedundancyExact) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset ds = random_dataset(rng, 30, 2, 1, true);
    const auto spec = FeatureMapSpec::affine(2, 1);
    const auto c1 = linear_coef_tensor(ds, spec, 1);
    for (int m = 2; m <= 3; ++m) {
      const auto cm = linear_coef_tensor(ds, spec, m);
      ASSERT_EQ(cm.c.rows(), 1);
      EXPECT_TRUE((cm.c.array() == c1.c.array()).all()) << "m=" << m;
    }
  }
}

TEST(QuadCoef, HandComputation) {
  Eigen::MatrixXd omega(2, 2), z(2, 1);
  omega << 1, 0, 0, 1;
  z << 0, 1;
  const auto fam = quad_coef_family(omega, z, 1);
  ASSERT_EQ(fam.q_mats.size(), 1u);
  Eigen::Matrix2d expect;
  expect << -0.25, 0, 0, 0.25;
  EXPECT_EQ(fam.q_mats[0], expect);
}

TEST(QuadCoef, ExactlySymmetric) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset ds = random_dataset(rng, 25, 3, 2, false);
    const auto fam = quad_coef_family(ds, FeatureMapSpec::polynomial(3, 2, 2, false), 2);
    for (const auto& q : fam.q_mats) EXPECT_TRUE((q.array() == q.transpose().array()).all());
  }
}

TEST(Residual, ZeroRule) {
  std::mt19937_64 rng(29);
  const Dataset ds = random_dataset(rng, 20, 2, 2, false);
  const DecisionRule rule{Eigen::MatrixXd::Zero(1, 3), FeatureMapSpec::affine(2, 2)};
  for (int m = 1; m <= 3; ++m)
    for (int q = 1; q <= 3; ++q) EXPECT_EQ(constraint_residual_generic(rule, ds, m, q), 0.0);
}

TEST(Residual, MatchesLoopOracle) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  const Dataset ds = random_dataset(rng, 40, 2, 2, false);
  const auto spec = FeatureMapSpec::affine(2, 2);
  const Eigen::MatrixXd omega = feature_matrix(spec, ds);
  const Eigen::RowVector3d b(nd(rng), nd(rng), nd(rng));
  const DecisionRule rule{b, spec};
  const auto t = constraint_residual_tensor(rule, ds, 2, 1);
  for (int s0 = 0; s0 < 2; ++s0) {
    for (int s1 = 0; s1 < 2; ++s1) {
      EXPECT_NEAR(t.entries[static_cast<std::size_t>(s0 * 2 + s1)],
                  oracle_linear_entry(omega, ds.z, {s0, s1}, b.transpose()), 1e-12);
    }
  }
}

TEST(Residual, CoefficientPathsAgree) {
  std::mt19937_64 rng(37);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> pick_n(5, 50), pick_p(1, 3), pick_r(1, 2), pick_m(1, 3);
  for (int trial = 0; trial < 40; ++trial) {
    const int px = pick_p(rng), r = pick_r(rng), m = pick_m(rng);
    const Dataset ds = random_dataset(rng, pick_n(rng), px, r, trial % 2 == 0);
    const auto spec = FeatureMapSpec::affine(px, r);
    Eigen::RowVectorXd b(spec.p());
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = nd(rng);
    const DecisionRule rule{b, spec};
    const double lin = (linear_coef_tensor(ds, spec, m).c * b.transpose()).cwiseAbs().maxCoeff();
    EXPECT_NEAR(lin, constraint_residual_generic(rule, ds, m, 1), 1e-10);
    double quad = 0;
    for (const auto& q : quad_coef_family(ds, spec, m).q_mats)
      quad = std::max(quad, std::abs(b * q * b.transpose()));
    EXPECT_NEAR(quad, constraint_residual_generic(rule, ds, m, 2), 1e-10);
  }
}

TEST(Residual, DegreeHomogeneity) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset ds = random_dataset(rng, 30, 2, 1, false);
    const auto spec = FeatureMapSpec::affine(2, 1);
    Eigen::RowVectorXd b(3);
    for (int j = 0; j < 3; ++j) b(j) = nd(rng);
    const double c = nd(rng) * 3;
    for (int q = 1; q <= 3; ++q) {
      const double base = constraint_residual_generic(DecisionRule{b, spec}, ds, 2, q);
      const double scaled = constraint_residual_generic(DecisionRule{c * b, spec}, ds, 2, q);
      EXPECT_NEAR(scaled, std::pow(std::abs(c), q) * base, 1e-10 * std::max(1.0, scaled));
    }
  }
}

TEST(Residual, LinearInRuleAtQOne) {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> nd;
  const Dataset ds = random_dataset(rng, 30, 2, 2, false);
  const auto spec = FeatureMapSpec::affine(2, 2);
  Eigen::RowVectorXd b1(3), b2(3);
  for (int j = 0; j < 3; ++j) {
    b1(j) = nd(rng);
    b2(j) = nd(rng);
  }
  const double a = 0.7, c = -1.9;
  const auto t1 = constraint_residual_tensor(DecisionRule{b1, spec}, ds, 2, 1);
  const auto t2 = constraint_residual_tensor(DecisionRule{b2, spec}, ds, 2, 1);
  const auto t = constraint_residual_tensor(DecisionRule{a * b1 + c * b2, spec}, ds, 2, 1);
  for (std::size_t k = 0; k < t.size(); ++k)
    EXPECT_NEAR(t.entries[k], a * t1.entries[k] + c * t2.entries[k], 1e-10);
}

TEST(Residual, MultiOutputShape) {
  std::mt19937_64 rng(47);
  const Dataset ds = random_dataset(rng, 12, 2, 2, false);
  Eigen::MatrixXd b = Eigen::MatrixXd::Random(2, 3);
  const auto t = constraint_residual_tensor(DecisionRule{b, FeatureMapSpec::affine(2, 2)}, ds, 1, 2);
  EXPECT_EQ(t.shape, (std::vector<Eigen::Index>{2, 2, 2}));
  EXPECT_EQ(t.size(), 8u);
}

TEST(Tensors, RowPermutationInvariance) {
  std::mt19937_64 rng(53);
  const Dataset ds = random_dataset(rng, 16, 2, 2, true);
  std::vector<Eigen::Index> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Dataset shuffled = ds.subset(perm);
  const auto spec = FeatureMapSpec::affine(2, 2);
  // sums over continuous x are order dependent at rounding level
  EXPECT_LE(linf_norm(Eigen::MatrixXd(linear_coef_tensor(ds, spec, 2).c -
                                      linear_coef_tensor(shuffled, spec, 2).c)),
            1e-14);
  const auto q1 = quad_coef_family(ds, spec, 1), q2 = quad_coef_family(shuffled, spec, 1);
  for (std::size_t k = 0; k < q1.q_mats.size(); ++k)
    EXPECT_LE(linf_norm(Eigen::MatrixXd(q1.q_mats[k] - q2.q_mats[k])), 1e-14);
  EXPECT_EQ(z_power_moment(ds.z, 2).entries, z_power_moment(shuffled.z, 2).entries);
}

TEST(Tensors, Deterministic) {
  std::mt19937_64 rng(59);
  const Dataset ds = random_dataset(rng, 33, 3, 2, false);
  const auto spec = FeatureMapSpec::affine(3, 2);
  EXPECT_TRUE((linear_coef_tensor(ds, spec, 2).c.array() ==
               linear_coef_tensor(ds, spec, 2).c.array())
                  .all());
}
