#pragma once

#include <Eigen/Core>
#include <utility>

#include "dfc/geometry.hpp"

namespace dfc::procrustes {

/// Source/target point pairs (as matrix columns) with nonnegative weights.
struct WeightedPairs {
  Eigen::Ref<const Eigen::Matrix3Xd> source;
  Eigen::Ref<const Eigen::Matrix3Xd> target;
  Eigen::Ref<const Eigen::VectorXd> weights;
};

inline constexpr double kZeroWeightEps = 1e-12;
inline constexpr double kDegenerateRatio = 1e-12;

/// Weighted centroids of source and target. Throws ZeroWeightSum.
std::pair<Vec3, Vec3> weighted_centroids(const WeightedPairs& wp);

/// H = sum_i w_i (x_i - xbar)(y_i - ybar)^T.
Mat3 cross_covariance(const WeightedPairs& wp, const std::pair<Vec3, Vec3>& centroids);

/// Closed-form weighted least-squares rigid alignment taking source onto
/// target. R = V diag(1, 1, det(V U^T)) U^T with H = U S V^T, and
/// t = ybar - R xbar.
///
/// Throws ZeroWeightSum when the weights sum to (almost) zero, and
/// DegenerateGeometry when fewer than three weights are positive or the two
/// smallest singular values of H are both below 1e-12 times the largest.
RigidTransform solve(const WeightedPairs& wp);

/// Unit-weight convenience overload.
RigidTransform solve(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target);

/// (1/N) sum_i w_i ||R x_i + t - y_i||^2.
double weighted_mse(const WeightedPairs& wp, const RigidTransform& tf);

}  // namespace dfc::procrustes
