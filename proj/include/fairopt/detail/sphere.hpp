#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace fairopt::detail {

inline constexpr int kSphereDirections = 10'000;
inline constexpr std::uint64_t kSphereSeed = 0x5eed5eedULL;

/// Unit directions in R^dim as columns: the coordinate axes followed by
/// `random_count` seeded Gaussian-normalized draws. For dim = 1 only +1 is
/// returned (callers use absolute or even moments, so -1 is redundant).
inline Eigen::MatrixXd sphere_directions(Eigen::Index dim, int random_count = kSphereDirections,
                                         std::uint64_t seed = kSphereSeed) {
  if (dim == 1) return Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd dirs(dim, dim + random_count);
  dirs.leftCols(dim).setIdentity();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < random_count; ++k) {
    Eigen::VectorXd v(dim);
    do {
      for (Eigen::Index j = 0; j < dim; ++j) v(j) = normal(rng);
    } while (v.norm() == 0.0);
    dirs.col(dim + k) = v / v.norm();
  }
  return dirs;
}

/// sup over unit s of E_n |<s, X_i>|^k, with the sphere replaced by
/// sphere_directions(X.cols()).
inline double sup_abs_moment(const Eigen::MatrixXd& x, int k) {
  const Eigen::MatrixXd dirs = sphere_directions(x.cols());
  double best = 0.0;
  for (Eigen::Index c = 0; c < dirs.cols(); ++c) {
    const Eigen::VectorXd proj = x * dirs.col(c);
    best = std::max(best, proj.array().abs().pow(k).mean());
  }
  return best;
}

}  // namespace fairopt::detail
