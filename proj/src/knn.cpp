#include "dfc/knn.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "dfc/error.hpp"

namespace dfc {
namespace {

void push_bounded(std::vector<Neighbor>& heap, int k, const Neighbor& nb) {
  if (static_cast<int>(heap.size()) < k) {
    heap.push_back(nb);
    std::push_heap(heap.begin(), heap.end());
  } else if (nb < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = nb;
    std::push_heap(heap.begin(), heap.end());
  }
}

}  // namespace

KdTree::KdTree(Eigen::MatrixXd points, int leaf_size)
    : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) {
    nodes_.reserve(2 * order_.size() / static_cast<std::size_t>(leaf_size_) + 2);
    build(0, static_cast<int>(order_.size()));
  }
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  int best_dim = 0;
  double best_spread = -1.0;
  for (Eigen::Index d = 0; d < points_.rows(); ++d) {
    double lo = points_(d, order_[begin]);
    double hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      const double v = points_(d, order_[i]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<int>(d);
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_(best_dim, a) < points_(best_dim, b); });
  const double split = points_(best_dim, order_[mid]);

  nodes_[id].split_dim = best_dim;
  nodes_[id].split = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node_id, const double* q, int k, Eigen::Index exclude,
                    std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.split_dim < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      if (idx == exclude) continue;
      push_bounded(heap, k, {idx, squared_distance(q, points_.col(idx).data(), points_.rows())});
    }
    return;
  }
  // Left holds values <= split and right holds values >= split.
  const double diff = q[node.split_dim] - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  search(near, q, k, exclude, heap);
  if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().sq_dist) {
    search(far, q, k, exclude, heap);
  }
}

std::vector<Neighbor> KdTree::knn(const Eigen::Ref<const Eigen::VectorXd>& query, int k,
                                  Eigen::Index exclude) const {
  std::vector<Neighbor> heap;
  if (k <= 0 || nodes_.empty()) return heap;
  heap.reserve(static_cast<std::size_t>(k) + 1);
  Eigen::VectorXd q = query;
  search(0, q.data(), k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

Neighbor KdTree::nearest(const Eigen::Ref<const Eigen::VectorXd>& query) const {
  auto r = knn(query, 1);
  return r.empty() ? Neighbor{} : r.front();
}

void KdTree::search_radius(int node_id, const double* q, double sq_radius,
                           std::vector<Neighbor>& out) const {
  const Node& node = nodes_[node_id];
  if (node.split_dim < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d = squared_distance(q, points_.col(idx).data(), points_.rows());
      if (d <= sq_radius) out.push_back({idx, d});
    }
    return;
  }
  const double diff = q[node.split_dim] - node.split;
  if (diff <= 0.0 || diff * diff <= sq_radius) search_radius(node.left, q, sq_radius, out);
  if (diff >= 0.0 || diff * diff <= sq_radius) search_radius(node.right, q, sq_radius, out);
}

std::vector<Neighbor> KdTree::radius(const Eigen::Ref<const Eigen::VectorXd>& query,
                                     double sq_radius) const {
  std::vector<Neighbor> out;
  if (nodes_.empty()) return out;
  Eigen::VectorXd q = query;
  search_radius(0, q.data(), sq_radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Neighbor> brute_force_knn(const Eigen::MatrixXd& points,
                                      const Eigen::Ref<const Eigen::VectorXd>& query, int k,
                                      Eigen::Index exclude) {
  Eigen::VectorXd q = query;
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    if (j == exclude) continue;
    all.push_back({j, squared_distance(q.data(), points.col(j).data(), points.rows())});
  }
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end());
  all.resize(kk);
  return all;
}

}  // namespace dfc

namespace dfc {

std::vector<Neighbor> knn_batch(const Eigen::MatrixXd& points, const Eigen::MatrixXd& queries,
                                int k, const std::vector<Eigen::Index>& exclude) {
  const Eigen::Index n = points.cols();
  const Eigen::Index m = queries.cols();
  const Eigen::Index dims = points.rows();
  if (queries.rows() != dims) throw Error(ErrorCode::InvalidArgument, "query dimension mismatch");
  if (!exclude.empty() && static_cast<Eigen::Index>(exclude.size()) != m) {
    throw Error(ErrorCode::InvalidArgument, "exclude needs one entry per query");
  }
  if (k < 1 || k > n - (exclude.empty() ? 0 : 1)) {
    throw Error(ErrorCode::InvalidArgument, "k = " + std::to_string(k) + " exceeds the point count");
  }
  std::vector<Neighbor> out(static_cast<std::size_t>(m * k));
  const Eigen::VectorXd pn = points.colwise().squaredNorm().transpose();
  const double max_pn = n > 0 ? pn.maxCoeff() : 0.0;
  // The Gram form a + b - 2<x, y> is off from the exact sum by at most a few
  // (dims + 3) ulps of a + b; 1e-11 relative covers dims well past 1000.
  constexpr double kRelMargin = 1e-11;
  constexpr Eigen::Index kBlock = 256;

  std::vector<double> top(static_cast<std::size_t>(k));  // k smallest screened values, ascending
  std::vector<Neighbor> cand;
  Eigen::MatrixXd gram;
  Eigen::VectorXd screen(n);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (Eigen::Index q0 = 0; q0 < m; q0 += kBlock) {
    const Eigen::Index qb = std::min(kBlock, m - q0);
    gram.noalias() = points.transpose() * queries.middleCols(q0, qb);
    for (Eigen::Index c = 0; c < qb; ++c) {
      const Eigen::Index q = q0 + c;
      const Eigen::Index skip = exclude.empty() ? -1 : exclude[static_cast<std::size_t>(q)];
      const double qn = queries.col(q).squaredNorm();
      screen = (pn.array() + qn) - 2.0 * gram.col(c).array();
      if (skip >= 0) screen[skip] = kInf;
      const double* d = screen.data();

      std::fill(top.begin(), top.end(), kInf);
      double worst = kInf;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (d[j] >= worst) continue;
        auto pos = static_cast<std::size_t>(k - 1);
        while (pos > 0 && top[pos - 1] > d[j]) {
          top[pos] = top[pos - 1];
          --pos;
        }
        top[pos] = d[j];
        worst = top.back();
      }
      const double limit = worst + 2.0 * kRelMargin * (max_pn + qn) + 1e-300;
      cand.clear();
      const double* qp = queries.col(q).data();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (d[j] <= limit) cand.push_back({j, squared_distance(qp, points.col(j).data(), dims)});
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      std::copy(cand.begin(), cand.begin() + k, out.begin() + static_cast<std::ptrdiff_t>(q * k));
    }
  }
  return out;
}

}  // namespace dfc
