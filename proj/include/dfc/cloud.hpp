#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"

namespace dfc {

/// Points as columns, with an optional per-point feature matrix (rows match
/// points; zero rows means no features).
struct PointCloud {
  Eigen::Matrix3Xd points;
  Eigen::MatrixXd features;

  Eigen::Index size() const { return points.cols(); }
  bool has_features() const { return features.rows() > 0; }
  void validate() const;
};

enum class CloudFormat { ply_ascii, xyz, csv };

/// Guesses the format from the extension (.ply, .xyz/.txt, .csv).
CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Replaces the points of each occupied voxel by their centroid (features
/// are averaged the same way). Output is ordered by ascending voxel index
/// (x, then y, then z).
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

struct SyntheticPair {
  PointCloud source;
  PointCloud target;
  RigidTransform gt;
  std::vector<std::uint8_t> gt_labels;
};

struct SyntheticOptions {
  int n_points = 1000;
  double outlier_ratio = 0.7;
  double noise_sigma = 0.01;
  double tau = 0.05;
};

/// Unit-cube source, target = gt * source + N(0, noise_sigma^2). The i-th
/// correspondence pairs source i with target i, except for round(ratio * n)
/// randomly chosen ones re-paired with a uniformly random other target
/// point. Labels mark residual < tau under gt.
std::pair<SyntheticPair, CorrespondenceSet> make_synthetic_pair(const SyntheticOptions& opts,
                                                                 Rng& rng);

struct AugmentOptions {
  double noise_sigma = 0.03;
  double translation_range = 1.0;
};

/// Random rotation, uniform translation in [-range, range]^3 and per-point
/// Gaussian noise. Returns the applied motion.
std::pair<PointCloud, RigidTransform> augment(const PointCloud& cloud, Rng& rng,
                                              const AugmentOptions& opts = {});

/// Reads/writes the 4x4 row-major transform text format.
RigidTransform load_transform(const std::filesystem::path& path);
void save_transform(const RigidTransform& tf, const std::filesystem::path& path);

}  // namespace dfc
