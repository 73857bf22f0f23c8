#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dfc/cloud.hpp"
#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"

namespace dfc {

enum class FeatureMode { oracle, local_hist, precomputed };
std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& name);

/// Pointwise descriptor source standing in for a learned 3-D descriptor.
///
/// oracle: ground-truth-matched points share a random unit vector, perturbed
///   by Gaussian noise with total expected norm `noise` and re-normalized.
/// local_hist: per-axis histograms of neighbor offsets within `radius`
///   (`bins` per axis, dim = 3 * bins), L2-normalized. Not rotation invariant.
/// precomputed: rows of a CSV file, one per point.
struct FeatureProvider {
  FeatureMode mode = FeatureMode::oracle;
  int dim = 32;
  double noise = 0.1;
  double radius = 0.1;
  int bins = 8;
  std::filesystem::path source_path;
  std::filesystem::path target_path;

  void validate() const;
};

/// Ground truth the oracle provider needs: target index -> source index
/// (-1 when the target point has no partner).
struct PairContext {
  std::vector<Eigen::Index> target_to_source;

  /// Pairs each target point with the nearest gt-mapped source point within
  /// match_radius.
  static PairContext from_transform(const PointCloud& source, const PointCloud& target,
                                    const RigidTransform& gt, double match_radius);
  /// Target i matches source i.
  static PairContext identity(Eigen::Index n);
};

/// Features for one cloud without pair context (local_hist, precomputed).
/// Precomputed mode returns the features already attached to the cloud, or
/// reads `csv` when none are attached.
Eigen::MatrixXd describe(const FeatureProvider& provider, const PointCloud& cloud,
                         const std::filesystem::path& csv = {});

/// Features for both clouds of a pair. Throws MissingContext for the oracle
/// mode without a context.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> describe_pair(const FeatureProvider& provider,
                                                          const PointCloud& source,
                                                          const PointCloud& target,
                                                          const PairContext* context, Rng& rng);

/// Reads an N x D CSV feature file. Throws DimensionMismatch on ragged rows
/// or when expected_rows / expected_dim (if positive) disagree.
Eigen::MatrixXd load_feature_csv(const std::filesystem::path& path, Eigen::Index expected_rows = -1,
                                 Eigen::Index expected_dim = -1);
void save_feature_csv(const Eigen::MatrixXd& features, const std::filesystem::path& path);

/// Samples min(sample_n, |source|) source points uniformly without
/// replacement (ascending index order) and pairs each with its nearest target
/// point in feature space; ties go to the lowest target index.
CorrespondenceSet build_correspondences(const PointCloud& source, const Eigen::MatrixXd& src_feats,
                                        const PointCloud& target, const Eigen::MatrixXd& dst_feats,
                                        Eigen::Index sample_n, Rng& rng);

/// Exact nearest row of `candidates` to `query` by squared distance, lowest
/// index on ties.
Eigen::Index nearest_row(const Eigen::MatrixXd& candidates,
                         const Eigen::Ref<const Eigen::RowVectorXd>& query);

/// Per-correspondence stand-in for a trained embedding: every inlier shares
/// one random unit direction (plus noise of expected norm `noise`), outliers
/// get independent random unit vectors. Rows are unit length.
Eigen::MatrixXd oracle_correspondence_features(const std::vector<std::uint8_t>& labels, int dim,
                                               double noise, Rng& rng);

}  // namespace dfc
