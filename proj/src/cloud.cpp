#include "dfc/cloud.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "dfc/error.hpp"

namespace dfc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool parse_double(const std::string& tok, double& out) {
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return end != tok.c_str() && *end == '\0' && std::isfinite(out);
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line,
                             const std::string& msg) {
  throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

PointCloud from_columns(const std::vector<Vec3>& pts) {
  PointCloud c;
  c.points.resize(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) c.points.col(static_cast<Eigen::Index>(i)) = pts[i];
  return c;
}

PointCloud load_ply(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    line = trim(line);
    return true;
  };

  if (!next() || line != "ply") parse_fail(path, lineno, "missing 'ply' magic");

  struct Element {
    std::string name;
    long count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false;
  bool header_done = false;
  while (next()) {
    if (line.empty() || line.rfind("comment", 0) == 0 || line.rfind("obj_info", 0) == 0) continue;
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string kind, version;
      ss >> kind >> version;
      if (kind != "ascii") parse_fail(path, lineno, "only ascii PLY is supported");
      ascii = true;
    } else if (kw == "element") {
      Element e;
      ss >> e.name >> e.count;
      if (!ss || e.count < 0) parse_fail(path, lineno, "bad element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) parse_fail(path, lineno, "property before element");
      std::string type, name;
      ss >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type;
      }
      ss >> name;
      elements.back().props.push_back(name);
    } else if (kw == "end_header") {
      header_done = true;
      break;
    } else {
      parse_fail(path, lineno, "unexpected header keyword '" + kw + "'");
    }
  }
  if (!header_done) parse_fail(path, lineno, "missing end_header");
  if (!ascii) parse_fail(path, lineno, "missing format line");

  std::vector<Vec3> pts;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (long i = 0; i < e.count; ++i) {
        if (!next()) parse_fail(path, lineno, "truncated element '" + e.name + "'");
      }
      continue;
    }
    std::array<int, 3> col{-1, -1, -1};
    for (std::size_t p = 0; p < e.props.size(); ++p) {
      if (e.props[p] == "x") col[0] = static_cast<int>(p);
      if (e.props[p] == "y") col[1] = static_cast<int>(p);
      if (e.props[p] == "z") col[2] = static_cast<int>(p);
    }
    if (std::any_of(col.begin(), col.end(), [](int c) { return c < 0; })) {
      parse_fail(path, lineno, "vertex element lacks x/y/z");
    }
    pts.reserve(static_cast<std::size_t>(e.count));
    for (long i = 0; i < e.count; ++i) {
      if (!next()) parse_fail(path, lineno, "truncated vertex list");
      const auto toks = split_tokens(line);
      if (toks.size() < e.props.size()) parse_fail(path, lineno, "too few vertex values");
      Vec3 v;
      for (int a = 0; a < 3; ++a) {
        if (!parse_double(toks[static_cast<std::size_t>(col[static_cast<std::size_t>(a)])], v(a))) {
          parse_fail(path, lineno, "bad number");
        }
      }
      pts.push_back(v);
    }
  }
  return from_columns(pts);
}

PointCloud load_delimited(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Vec3> pts;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_tokens(line);
    if (toks.size() < 3) parse_fail(path, lineno, "expected 3 coordinates");
    Vec3 v;
    for (int a = 0; a < 3; ++a) {
      if (!parse_double(toks[static_cast<std::size_t>(a)], v(a))) parse_fail(path, lineno, "bad number");
    }
    pts.push_back(v);
  }
  return from_columns(pts);
}

}  // namespace

void PointCloud::validate() const {
  if (!points.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite point");
  if (has_features()) {
    if (features.rows() != points.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "feature rows differ from point count");
    }
    if (!features.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite feature");
  }
}

CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply") return CloudFormat::ply_ascii;
  if (ext == ".csv") return CloudFormat::csv;
  return CloudFormat::xyz;
}

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  return format == CloudFormat::ply_ascii ? load_ply(path) : load_delimited(path);
}

PointCloud load_cloud(const std::filesystem::path& path) {
  return load_cloud(path, format_from_path(path));
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  auto out = open_out(path);
  const char sep = format == CloudFormat::csv ? ',' : ' ';
  if (format == CloudFormat::ply_ascii) {
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  }
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    out << cloud.points(0, i) << sep << cloud.points(1, i) << sep << cloud.points(2, i) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  save_cloud(cloud, path, format_from_path(path));
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel size must be positive");
  using Key = std::array<std::int64_t, 3>;
  struct Acc {
    Vec3 sum = Vec3::Zero();
    Eigen::VectorXd feat;
    long count = 0;
  };
  const bool with_feat = cloud.has_features();
  std::map<Key, Acc> cells;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.points.col(i);
    Key key{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
            static_cast<std::int64_t>(std::floor(p.y() / voxel)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    auto& acc = cells[key];
    acc.sum += p;
    if (with_feat) {
      if (acc.count == 0) acc.feat = Eigen::VectorXd::Zero(cloud.features.cols());
      acc.feat += cloud.features.row(i).transpose();
    }
    ++acc.count;
  }
  PointCloud out;
  out.points.resize(3, static_cast<Eigen::Index>(cells.size()));
  if (with_feat) out.features.resize(static_cast<Eigen::Index>(cells.size()), cloud.features.cols());
  Eigen::Index j = 0;
  for (const auto& [key, acc] : cells) {
    const double n = static_cast<double>(acc.count);
    out.points.col(j) = acc.sum / n;
    if (with_feat) out.features.row(j) = (acc.feat / n).transpose();
    ++j;
  }
  return out;
}

std::pair<SyntheticPair, CorrespondenceSet> make_synthetic_pair(const SyntheticOptions& opts,
                                                                 Rng& rng) {
  if (opts.n_points < 10) throw Error(ErrorCode::InvalidArgument, "need at least 10 points");
  if (!(opts.outlier_ratio >= 0.0 && opts.outlier_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "outlier ratio outside [0, 1]");
  }
  const Eigen::Index n = opts.n_points;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticPair pair;
  pair.source.points.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) pair.source.points(a, i) = unit(rng);
  }
  pair.gt.rotation = random_rotation(rng);
  for (int a = 0; a < 3; ++a) pair.gt.translation(a) = sym(rng);
  pair.target.points = apply(pair.gt, pair.source.points);
  if (opts.noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) pair.target.points(a, i) += opts.noise_sigma * noise(rng);
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_out = static_cast<std::size_t>(std::llround(opts.outlier_ratio * static_cast<double>(n)));

  CorrespondenceSet corrs;
  corrs.src = pair.source.points;
  corrs.dst = pair.target.points;
  std::uniform_int_distribution<Eigen::Index> other(0, n - 2);
  for (std::size_t r = 0; r < n_out; ++r) {
    const Eigen::Index i = order[r];
    Eigen::Index j = other(rng);
    if (j >= i) ++j;
    corrs.dst.col(i) = pair.target.points.col(j);
  }

  corrs.labels.resize(static_cast<std::size_t>(n));
  const Eigen::Matrix3Xd mapped = apply(pair.gt, corrs.src);
  for (Eigen::Index i = 0; i < n; ++i) {
    corrs.labels[static_cast<std::size_t>(i)] = (mapped.col(i) - corrs.dst.col(i)).norm() < opts.tau;
  }
  pair.gt_labels = corrs.labels;
  return {std::move(pair), std::move(corrs)};
}

std::pair<PointCloud, RigidTransform> augment(const PointCloud& cloud, Rng& rng,
                                              const AugmentOptions& opts) {
  std::uniform_real_distribution<double> sym(-opts.translation_range, opts.translation_range);
  std::normal_distribution<double> noise(0.0, 1.0);
  RigidTransform tf;
  tf.rotation = random_rotation(rng);
  for (int a = 0; a < 3; ++a) tf.translation(a) = sym(rng);
  PointCloud out = cloud;
  out.points = apply(tf, cloud.points);
  if (opts.noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      for (int a = 0; a < 3; ++a) out.points(a, i) += opts.noise_sigma * noise(rng);
    }
  }
  return {std::move(out), tf};
}

RigidTransform load_transform(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    for (const auto& tok : split_tokens(line)) {
      double v = 0.0;
      if (!parse_double(tok, v)) parse_fail(path, lineno, "bad number");
      vals.push_back(v);
    }
  }
  if (vals.size() != 16) parse_fail(path, lineno, "expected 16 values in a 4x4 transform");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = vals[static_cast<std::size_t>(4 * r + c)];
  }
  return RigidTransform::from_matrix(m);
}

void save_transform(const RigidTransform& tf, const std::filesystem::path& path) {
  auto out = open_out(path);
  const Eigen::Matrix4d m = tf.matrix();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out << (c ? " " : "") << m(r, c);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace dfc
