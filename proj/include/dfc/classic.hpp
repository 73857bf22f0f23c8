#pragma once

#include <cstdint>
#include <vector>

#include "dfc/cloud.hpp"
#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"
#include "dfc/verification.hpp"

namespace dfc {

struct IcpConfig {
  int max_iterations = 50;
  double max_corr_dist = 0.05;
  double transform_tol = 1e-6;
  double rmse_tol = 1e-8;

  void validate() const;
};

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  double final_rmse = 0.0;
  std::vector<double> rmse_history;  // one entry per accepted transform
  bool no_correspondences = false;
};

/// Point-to-point ICP: nearest target point within max_corr_dist, unit-weight
/// Procrustes, accumulate. A step that would raise the matched-pair RMSE is
/// rejected and ends the run, so rmse_history never increases. When nothing
/// is in range the initial transform comes back with no_correspondences set.
IcpResult icp_refine(const PointCloud& source, const PointCloud& target,
                     const RigidTransform& initial, const IcpConfig& cfg);

struct RansacConfig {
  int iterations = 1000;
  double tau = 0.05;
  std::uint64_t seed = 0;
};

/// Counter-based generator so every iteration has its own reproducible stream.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct RansacResult {
  Hypothesis best;
  int degenerate_samples = 0;
  Eigen::Index max_sampled_inliers = 0;
};

/// Three-point RANSAC scored by count_inliers with the verification tie
/// rules, followed by an unweighted refit on the winning consensus set.
/// Throws AllSamplesDegenerate.
RansacResult ransac(const CorrespondenceSet& corrs, const RansacConfig& cfg);

}  // namespace dfc
