#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"
#include "dfc/weighting.hpp"

namespace dfc {

/// A candidate inlier (the seed, always members[0]) plus its k - 1 nearest
/// correspondences in embedding space.
struct InlierSubset {
  std::vector<Eigen::Index> members;
  Eigen::Index seed = -1;
};

/// e_ij = max(0, 1 - ||f_i - f_j||^2 / sigma2) over L2-normalized rows, unit
/// diagonal.
struct ConsistencyMatrix {
  Eigen::MatrixXd m;
  double sigma2 = 1.0;
  bool has_zero_rows = false;
};

/// How the inlier weights are read off the consistency matrix.
/// eigenvector: dominant eigenvector of M by power iteration.
/// pca: first principal axis of M's rows (dominant eigenvector of the
///   covariance of the column-centered matrix).
enum class PrincipalMode { eigenvector, pca };

std::string to_string(PrincipalMode mode);
PrincipalMode principal_mode_from_string(const std::string& name);

struct PrincipalVector {
  Eigen::VectorXd w;    // nonnegative, unit norm
  Eigen::VectorXd raw;  // converged iterate before orientation and clamping
  double eigenvalue = 0.0;
  int iterations = 0;
  bool converged = false;
  PrincipalMode mode = PrincipalMode::eigenvector;
};

/// Throws TooFewCorrespondences when N < k and InvalidArgument when the
/// features are missing.
std::vector<InlierSubset> build_subsets(const CorrespondenceSet& corrs,
                                        const std::vector<Eigen::Index>& seeds, int k);

/// Rows of `features` are the subset's embeddings. Throws NonPositiveSigma.
ConsistencyMatrix consistency_matrix(const Eigen::MatrixXd& features, double sigma2);

/// Power iteration from the uniform vector; stops when successive iterates
/// differ by less than tol. On non-convergence the last iterate is returned
/// with converged = false. The result is oriented to a nonnegative entry sum,
/// clamped at zero and re-normalized.
PrincipalVector principal_vector(const Eigen::MatrixXd& m, PrincipalMode mode,
                                 int max_iters = 1000, double tol = 1e-10);

/// Weighted Procrustes over the subset members. Propagates procrustes errors.
RigidTransform subset_transform(const CorrespondenceSet& corrs, const InlierSubset& subset,
                                const Eigen::VectorXd& weights);

struct SubsetResult {
  std::optional<RigidTransform> transform;  // empty when the subset was degenerate
  PrincipalVector weights;
  std::string diagnostic;
};

struct MatchingOptions {
  double sigma2 = 1.0;
  PrincipalMode mode = PrincipalMode::eigenvector;
  int max_iters = 1000;
  double tol = 1e-10;
  int threads = 1;
};

/// Consistency matrix -> principal vector -> weighted Procrustes for every
/// subset. Results are indexed like `subsets` regardless of thread count.
std::vector<SubsetResult> match_subsets(const CorrespondenceSet& corrs,
                                        const std::vector<InlierSubset>& subsets,
                                        const MatchingOptions& opts);

}  // namespace dfc
