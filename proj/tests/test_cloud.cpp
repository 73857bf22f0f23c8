#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dfc/cloud.hpp"
#include "dfc/error.hpp"
#include "dfc/procrustes.hpp"
#include "oracles.hpp"

using namespace dfc;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(DFC_SOURCE_DIR) / "tests" / "fixtures";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dfc_test_cloud";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("PLY fixture loads in declared order, extra properties ignored") {
  const auto c = load_cloud(kFixtures / "three.ply");
  REQUIRE(c.size() == 3);
  CHECK((c.points.col(0) - Vec3(1.5, 0, -2)).norm() == 0.0);
  CHECK((c.points.col(1) - Vec3(0, 2.25, 0)).norm() == 0.0);
  CHECK((c.points.col(2) - Vec3(-1, -1, 3.125)).norm() == 0.0);
  CHECK_FALSE(c.has_features());
}

TEST_CASE("empty PLY is an empty cloud") {
  const auto c = load_cloud(kFixtures / "empty.ply");
  CHECK(c.size() == 0);
}

TEST_CASE("malformed input reports the line") {
  try {
    load_cloud(kFixtures / "bad.ply");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find(":9:") != std::string::npos);
  }
  try {
    load_cloud(kFixtures / "does_not_exist.ply");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}

TEST_CASE("xyz reader skips comments and accepts commas") {
  const auto c = load_cloud(kFixtures / "points.xyz");
  REQUIRE(c.size() == 2);
  CHECK((c.points.col(1) - Vec3(4, 5, 6)).norm() == 0.0);
}

TEST_CASE("save/load round trip in every format") {
  std::mt19937_64 rng(1);
  PointCloud c;
  c.points = oracle::random_points(1000, rng, -50.0, 50.0);
  for (const char* name : {"rt.ply", "rt.xyz", "rt.csv"}) {
    save_cloud(c, scratch(name));
    const auto back = load_cloud(scratch(name));
    REQUIRE(back.size() == 1000);
    CHECK((back.points - c.points).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("voxel_downsample: midpoint, separated points, ordering") {
  PointCloud two;
  two.points.resize(3, 2);
  two.points << 0.01, 0.03, 0.02, 0.04, 0.01, 0.01;
  const auto one = voxel_downsample(two, 0.05);
  REQUIRE(one.size() == 1);
  CHECK((one.points.col(0) - Vec3(0.02, 0.03, 0.01)).norm() < 1e-15);

  PointCloud far;
  far.points.resize(3, 3);
  far.points << 0.9, 0.1, 0.5, 0.9, 0.1, 0.5, 0.1, 0.1, 0.9;
  const auto same = voxel_downsample(far, 0.2);
  REQUIRE(same.size() == 3);
  // lexicographic voxel order: x first
  CHECK(same.points(0, 0) == 0.1);
  CHECK(same.points(0, 1) == 0.5);
  CHECK(same.points(0, 2) == 0.9);

  CHECK_THROWS_AS(voxel_downsample(far, 0.0), Error);
}

TEST_CASE("voxel_downsample equals a map-based binning oracle") {
  std::mt19937_64 rng(2);
  PointCloud c;
  c.points = oracle::random_points(10000, rng, -0.3, 0.7);
  const double voxel = 0.05;
  const auto out = voxel_downsample(c, voxel);
  const auto bins = oracle::voxel_bins(c.points, voxel);
  REQUIRE(out.size() == static_cast<Eigen::Index>(bins.size()));
  Eigen::Index j = 0;
  for (const auto& [key, acc] : bins) {
    const Vec3 want = acc.first / acc.second;
    CHECK((out.points.col(j) - want).norm() == 0.0);
    // every output lies inside its voxel's box
    CHECK(std::floor(out.points(0, j) / voxel) == std::get<0>(key));
    CHECK(std::floor(out.points(1, j) / voxel) == std::get<1>(key));
    CHECK(std::floor(out.points(2, j) / voxel) == std::get<2>(key));
    ++j;
  }
}

TEST_CASE("voxel_downsample averages attached features") {
  PointCloud c;
  c.points.resize(3, 2);
  c.points << 0.01, 0.02, 0.01, 0.02, 0.01, 0.02;
  c.features.resize(2, 2);
  c.features << 1, 2, 3, 6;
  const auto out = voxel_downsample(c, 1.0);
  REQUIRE(out.features.rows() == 1);
  CHECK(out.features(0, 0) == 2.0);
  CHECK(out.features(0, 1) == 4.0);
}

TEST_CASE("make_synthetic_pair: clean pair, determinism") {
  SyntheticOptions o{200, 0.0, 0.0, 0.05};
  Rng rng(3);
  const auto [pair, corrs] = make_synthetic_pair(o, rng);
  CHECK(std::all_of(corrs.labels.begin(), corrs.labels.end(), [](auto l) { return l == 1; }));
  CHECK(pair.source.points.minCoeff() >= 0.0);
  CHECK(pair.source.points.maxCoeff() <= 1.0);
  const auto est = procrustes::solve(corrs.src, corrs.dst);
  CHECK(oracle::angle_between(est.rotation, pair.gt.rotation) < 1e-9);
  CHECK((est.translation - pair.gt.translation).norm() < 1e-9);

  Rng a(4), b(4);
  SyntheticOptions noisy{300, 0.5, 0.01, 0.05};
  const auto pa = make_synthetic_pair(noisy, a);
  const auto pb = make_synthetic_pair(noisy, b);
  CHECK(pa.second.src == pb.second.src);
  CHECK(pa.second.dst == pb.second.dst);
  CHECK(pa.second.labels == pb.second.labels);
  CHECK(pa.first.gt.matrix() == pb.first.gt.matrix());

  Rng r(0);
  CHECK_THROWS_AS(make_synthetic_pair(SyntheticOptions{5, 0.1, 0.0, 0.05}, r), Error);
  CHECK_THROWS_AS(make_synthetic_pair(SyntheticOptions{50, 1.5, 0.0, 0.05}, r), Error);
}

TEST_CASE("make_synthetic_pair: outlier statistics") {
  // all re-paired: a random other point lands within tau only by chance
  double inliers = 0.0;
  const int n = 500;
  for (int s = 0; s < 100; ++s) {
    Rng rng(100 + s);
    const auto [pair, corrs] = make_synthetic_pair(SyntheticOptions{n, 1.0, 0.01, 0.05}, rng);
    inliers += std::count(corrs.labels.begin(), corrs.labels.end(), 1);
  }
  CHECK(inliers / (100.0 * n) < 0.02);

  // label mean ~ 1 - r within 3 standard errors
  const double r = 0.7;
  std::vector<double> means;
  for (int s = 0; s < 100; ++s) {
    Rng rng(1000 + s);
    const auto [pair, corrs] = make_synthetic_pair(SyntheticOptions{n, r, 0.005, 0.05}, rng);
    means.push_back(static_cast<double>(std::count(corrs.labels.begin(), corrs.labels.end(), 1)) / n);
  }
  double mu = 0.0, var = 0.0;
  for (double m : means) mu += m;
  mu /= means.size();
  for (double m : means) var += (m - mu) * (m - mu);
  const double se = std::sqrt(var / (means.size() - 1)) / std::sqrt(static_cast<double>(means.size()));
  // a re-paired point can land near its partner by chance, so allow that small excess
  CHECK(mu >= (1.0 - r) - 3.0 * se);
  CHECK(mu <= (1.0 - r) + 3.0 * se + 0.01);
}

TEST_CASE("augment: rigidity, returned motion, noise level") {
  std::mt19937_64 g(5);
  PointCloud c;
  c.points = oracle::random_points(50, g);
  Rng rng(6);
  const auto [moved, tf] = augment(c, rng, AugmentOptions{0.0, 1.0});
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j)
      CHECK(std::abs((moved.points.col(i) - moved.points.col(j)).norm() -
                     (c.points.col(i) - c.points.col(j)).norm()) < 1e-12);
  const auto actual = procrustes::solve(c.points, moved.points);
  CHECK(oracle::angle_between(actual.rotation, tf.rotation) < 1e-9);
  CHECK((actual.translation - tf.translation).norm() < 1e-9);
  CHECK(tf.translation.cwiseAbs().maxCoeff() <= 1.0);

  PointCloud big;
  big.points = oracle::random_points(10000, g);
  Rng rng2(7);
  const auto [noisy, tf2] = augment(big, rng2);
  const Eigen::Matrix3Xd res = noisy.points - oracle::transform(tf2, big.points);
  for (int a = 0; a < 3; ++a) {
    const double mean = res.row(a).mean();
    const double sd = std::sqrt((res.row(a).array() - mean).square().sum() / (res.cols() - 1));
    CHECK(sd >= 0.028);
    CHECK(sd <= 0.032);
  }
}

TEST_CASE("transform file round trip and format") {
  std::mt19937_64 g(8);
  const auto tf = oracle::random_tf(g);
  save_transform(tf, scratch("tf.txt"));
  const auto back = load_transform(scratch("tf.txt"));
  CHECK((back.matrix() - tf.matrix()).norm() < 1e-15);
  std::ifstream in(scratch("tf.txt"));
  std::string last, line;
  int lines = 0;
  while (std::getline(in, line)) last = line, ++lines;
  CHECK(lines == 4);
  CHECK(last == "0 0 0 1");
}
