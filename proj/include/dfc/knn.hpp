#pragma once

#include <Eigen/Core>
#include <vector>

namespace dfc {

struct Neighbor {
  Eigen::Index index = -1;
  double sq_dist = 0.0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  }
  friend bool operator==(const Neighbor& a, const Neighbor& b) = default;
};

/// Exact k-nearest-neighbor index over the columns of a dims x n matrix.
///
/// Results are the k smallest (squared distance, index) pairs in
/// lexicographic order, so they agree exactly with brute_force_knn.
class KdTree {
 public:
  explicit KdTree(Eigen::MatrixXd points, int leaf_size = 8);

  std::vector<Neighbor> knn(const Eigen::Ref<const Eigen::VectorXd>& query, int k,
                            Eigen::Index exclude = -1) const;
  Neighbor nearest(const Eigen::Ref<const Eigen::VectorXd>& query) const;
  /// All points with squared distance <= sq_radius, sorted.
  std::vector<Neighbor> radius(const Eigen::Ref<const Eigen::VectorXd>& query,
                               double sq_radius) const;

  Eigen::Index size() const { return points_.cols(); }
  Eigen::Index dims() const { return points_.rows(); }
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int split_dim = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end);
  void search(int node, const double* q, int k, Eigen::Index exclude,
              std::vector<Neighbor>& heap) const;
  void search_radius(int node, const double* q, double sq_radius,
                     std::vector<Neighbor>& out) const;

  Eigen::MatrixXd points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_;
};

/// Reference O(n) scan with the same ordering contract as KdTree::knn.
std::vector<Neighbor> brute_force_knn(const Eigen::MatrixXd& points,
                                      const Eigen::Ref<const Eigen::VectorXd>& query, int k,
                                      Eigen::Index exclude = -1);

/// Exact k nearest columns of `points` for every column of `queries`, with
/// the same ordering contract as brute_force_knn. Distances are screened
/// through one Gram-matrix product, then every candidate within a rounding
/// margin of the k-th is re-ranked with squared_distance, so the result
/// matches the scalar scan bit for bit. exclude, when non-empty, holds one
/// point index per query to skip (-1 for none). Output is query-major, k
/// entries per query. Throws InvalidArgument when k exceeds the points left.
std::vector<Neighbor> knn_batch(const Eigen::MatrixXd& points, const Eigen::MatrixXd& queries,
                                int k, const std::vector<Eigen::Index>& exclude = {});

/// Squared distance accumulated dimension by dimension in index order.
inline double squared_distance(const double* a, const double* b, Eigen::Index dims) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace dfc
