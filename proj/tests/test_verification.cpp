#include <doctest.h>

#include "dfc/error.hpp"
#include "dfc/procrustes.hpp"
#include "dfc/verification.hpp"
#include "oracles.hpp"

using namespace dfc;

TEST_CASE("count_inliers: ground truth, strict boundary, naive oracle") {
  std::mt19937_64 rng(1);
  const auto gt = oracle::random_tf(rng);
  CorrespondenceSet c;
  c.src = oracle::random_points(50, rng);
  c.dst = oracle::transform(gt, c.src);
  const auto all = count_inliers(gt, c, 0.05);
  CHECK(all.count == 50);
  CHECK(all.mean_residual < 1e-15);

  CorrespondenceSet one;
  one.src = Eigen::Matrix3Xd::Zero(3, 1);
  one.dst = Eigen::Matrix3Xd::Zero(3, 1);
  one.dst(0, 0) = 0.25;  // exactly representable
  CHECK(count_inliers(RigidTransform::identity(), one, 0.25).count == 0);
  CHECK(count_inliers(RigidTransform::identity(), one, std::nextafter(0.25, 1.0)).count == 1);

  for (int t = 0; t < 200; ++t) {
    const auto tf = oracle::random_tf(rng);
    c.src = oracle::random_points(80, rng);
    c.dst = oracle::transform(tf, c.src) + 0.3 * oracle::random_points(80, rng);
    const auto probe = oracle::random_tf(rng, 0.1);
    const double tau = 0.05 + 0.3 * (t % 5);
    const auto got = count_inliers(probe, c, tau);
    CHECK(static_cast<std::size_t>(got.count) == oracle::naive_inlier_count(probe, c.src, c.dst, tau));
    CHECK(static_cast<Eigen::Index>(std::count(got.mask.begin(), got.mask.end(), 1)) == got.count);
  }
  CHECK_THROWS_AS(count_inliers(gt, c, 0.0), Error);

  const std::vector<Eigen::Index> members{1, 3, 5};
  const auto sub = count_inliers(gt, c, 10.0, members);
  CHECK(sub.mask.size() == 3);
  CHECK(sub.count == 3);
}

TEST_CASE("select_best tie rules") {
  std::vector<Hypothesis> h(3);
  h[0].inlier_count = 5;
  h[1].inlier_count = 9;
  h[1].mean_inlier_residual = 0.01;
  h[2].inlier_count = 9;
  h[2].mean_inlier_residual = 0.02;
  CHECK(select_best(h) == 1);

  h[2].mean_inlier_residual = 0.01;
  h[1].subset_seed = 7;
  h[2].subset_seed = 3;
  CHECK(select_best(h) == 2);

  CHECK(select_best({h[0]}) == 0);
  try {
    select_best({});
    FAIL("expected EmptyHypothesisSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyHypothesisSet);
  }
}

TEST_CASE("ground-truth hypothesis wins among 50 at 60% outliers") {
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    const auto gt = oracle::random_tf(rng);
    CorrespondenceSet c;
    c.src = oracle::random_points(200, rng, 0.0, 1.0);
    c.dst = oracle::transform(gt, c.src) + 0.005 * oracle::random_points(200, rng);
    for (int i = 0; i < 120; ++i) c.dst.col(i) = oracle::transform(gt, oracle::random_points(1, rng, 0.0, 1.0));
    std::vector<Hypothesis> hyps;
    const int truth = trial % 50;
    for (int k = 0; k < 50; ++k) {
      Hypothesis h;
      if (k == truth) {
        h.transform = gt;
      } else {
        // three random correspondences: mostly contaminated fits
        std::uniform_int_distribution<int> pick(0, 199);
        Eigen::Matrix3Xd a(3, 3), b(3, 3);
        for (int s = 0; s < 3; ++s) {
          const int i = pick(rng);
          a.col(s) = c.src.col(i);
          b.col(s) = c.dst.col(i);
        }
        try {
          h.transform = procrustes::solve(a, b);
        } catch (const Error&) {
          h.transform = oracle::random_tf(rng);
        }
      }
      const auto cnt = count_inliers(h.transform, c, 0.05);
      h.inlier_count = cnt.count;
      h.mean_inlier_residual = cnt.mean_residual;
      h.subset_seed = k;
      hyps.push_back(h);
    }
    const auto best = select_best(hyps);
    // an all-inlier sample can tie the truth; it must then be essentially the truth
    CHECK(oracle::angle_between(hyps[best].transform.rotation, gt.rotation) < deg2rad(1.0));
    CHECK(hyps[best].inlier_count >= hyps[static_cast<std::size_t>(truth)].inlier_count);
  }
}
