#include "dfc/procrustes.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>

#include "dfc/error.hpp"

namespace dfc::procrustes {
namespace {

void validate(const WeightedPairs& wp) {
  const auto n = wp.source.cols();
  if (wp.target.cols() != n || wp.weights.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "source, target and weights differ in length");
  }
  if (n < 3) {
    throw Error(ErrorCode::DegenerateGeometry, "need at least 3 pairs");
  }
  if (!wp.weights.allFinite() || (wp.weights.array() < 0.0).any()) {
    throw Error(ErrorCode::InvalidArgument, "weights must be finite and nonnegative");
  }
}

}  // namespace

std::pair<Vec3, Vec3> weighted_centroids(const WeightedPairs& wp) {
  const double total = wp.weights.sum();
  if (!(total > kZeroWeightEps)) {
    throw Error(ErrorCode::ZeroWeightSum, "weights sum to zero");
  }
  Vec3 xbar = wp.source * wp.weights / total;
  Vec3 ybar = wp.target * wp.weights / total;
  return {xbar, ybar};
}

Mat3 cross_covariance(const WeightedPairs& wp, const std::pair<Vec3, Vec3>& centroids) {
  Eigen::Matrix3Xd xc = wp.source.colwise() - centroids.first;
  Eigen::Matrix3Xd yc = wp.target.colwise() - centroids.second;
  return xc * wp.weights.asDiagonal() * yc.transpose();
}

RigidTransform solve(const WeightedPairs& wp) {
  validate(wp);
  const auto centroids = weighted_centroids(wp);
  if ((wp.weights.array() > 0.0).count() < 3) {
    throw Error(ErrorCode::DegenerateGeometry, "fewer than 3 positive weights");
  }
  const Mat3 h = cross_covariance(wp, centroids);

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3& s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) < kDegenerateRatio * s(0)) {
    throw Error(ErrorCode::DegenerateGeometry, "collinear or coincident support");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 diag(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);

  RigidTransform tf;
  tf.rotation = v * diag.asDiagonal() * u.transpose();
  tf.translation = centroids.second - tf.rotation * centroids.first;
  return tf;
}

RigidTransform solve(const Eigen::Matrix3Xd& source, const Eigen::Matrix3Xd& target) {
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(source.cols());
  return solve(WeightedPairs{source, target, ones});
}

double weighted_mse(const WeightedPairs& wp, const RigidTransform& tf) {
  Eigen::Matrix3Xd r = ((tf.rotation * wp.source).colwise() + tf.translation) - wp.target;
  return (r.colwise().squaredNorm().transpose().array() * wp.weights.array()).sum() /
         static_cast<double>(wp.source.cols());
}

}  // namespace dfc::procrustes
