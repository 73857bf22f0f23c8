// Writes the noise-free registration fixture shipped under data/fixtures.
#include <filesystem>
#include <iostream>
#include <random>

#include "dfc/cloud.hpp"
#include "dfc/features.hpp"
#include "dfc/geometry.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "data/fixtures";
  std::filesystem::create_directories(dir);
  dfc::Rng rng(20240601);
  constexpr Eigen::Index n = 300;
  constexpr int dim = 32;

  dfc::PointCloud src;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  src.points.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) src.points.col(i) = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
  const dfc::RigidTransform gt{dfc::random_rotation(rng), Eigen::Vector3d(0.4, -0.25, 0.1)};
  dfc::PointCloud dst;
  dst.points = (gt.rotation * src.points).colwise() + gt.translation;

  // one random unit descriptor per point, copied to its partner
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd feats(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) feats(i, d) = gauss(rng);
    feats.row(i).normalize();
  }
  dfc::save_cloud(src, dir / "src.ply");
  dfc::save_cloud(dst, dir / "dst.ply");
  dfc::save_transform(gt, dir / "gt.txt");
  dfc::save_feature_csv(feats, dir / "src_features.csv");
  dfc::save_feature_csv(feats, dir / "dst_features.csv");
  std::cout << "fixture written to " << dir << "\n";
}
