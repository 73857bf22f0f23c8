// Command-line driver: register, benchmark, train, selfcheck.
// Exit codes: 0 success, 1 usage error, 2 pipeline failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dfc/bench.hpp"
#include "dfc/checkpoint.hpp"
#include "dfc/config.hpp"
#include "dfc/error.hpp"
#include "dfc/selfcheck.hpp"
#include "dfc/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "dotted-key override, e.g. registration.n_s=100")
      ->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "seed for every random stream");
  cmd->add_option("--threads", c.threads, "worker cap")->check(CLI::PositiveNumber);
}

dfc::AppConfig resolve(const Common& c, const std::string& profile = {}) {
  try {
    auto cfg = dfc::load_app_config(c.config, c.overrides, profile);
    if (c.seed) {
      cfg.registration.seed = *c.seed;
      cfg.train.seed = *c.seed;
      cfg.suite.seed = *c.seed;
    }
    cfg.registration.validate();
    return cfg;
  } catch (const dfc::Error& e) {
    if (e.code() == dfc::ErrorCode::InvalidArgument || e.code() == dfc::ErrorCode::IoError) {
      throw UsageError(e.what());
    }
    throw;
  }
}

dfc::DfcModel model_for(const std::string& checkpoint) {
  return dfc::load_checkpoint(checkpoint);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw dfc::Error(dfc::ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

int cmd_register(const Common& common, const std::string& src, const std::string& dst,
                 const std::string& profile, const std::string& checkpoint,
                 const std::string& gt_path, const std::string& src_feats, const std::string& dst_feats,
                 std::optional<bool> icp, const std::string& out) {
  auto cfg = resolve(common, profile);
  if (icp) cfg.registration.icp = *icp;
  cfg.registration.threads = common.threads;
  const auto model = model_for(checkpoint);
  const auto source = dfc::load_cloud(src);
  const auto target = dfc::load_cloud(dst);
  std::optional<dfc::RigidTransform> gt;
  if (!gt_path.empty()) gt = dfc::load_transform(gt_path);
  if (!src_feats.empty()) {
    cfg.registration.features.mode = dfc::FeatureMode::precomputed;
    cfg.registration.features.source_path = src_feats;
    cfg.registration.features.target_path = dst_feats;
  }
  const auto res = dfc::register_pair(source, target, cfg.registration, model, gt ? &*gt : nullptr);

  const fs::path out_path(out);
  const fs::path tf_path = out_path.extension() == ".txt" ? out_path : out_path / "transform.txt";
  const fs::path json_path = tf_path.parent_path() / (tf_path.stem().string() + ".json");
  if (tf_path.has_parent_path()) fs::create_directories(tf_path.parent_path());
  dfc::save_transform(res.transform, tf_path);

  nlohmann::ordered_json j;
  j["schema_version"] = dfc::kReportSchemaVersion;
  j["profile"] = cfg.registration.profile;
  j["correspondences"] = res.correspondences;
  j["inliers"] = res.best.inlier_count;
  j["hypotheses"] = res.hypotheses;
  j["degenerate_subsets"] = res.degenerate_subsets;
  j["icp_applied"] = res.icp_applied;
  const Eigen::Matrix4d m = res.transform.matrix();
  auto& rows = j["transform"] = nlohmann::ordered_json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  if (res.error) {
    j["re_deg"] = res.error->re_deg();
    j["te"] = res.error->te;
    j["success"] = res.success;
  }
  j["times"] = {{"embed", res.times.embed},     {"weight", res.times.weight},
                {"sample", res.times.sample},   {"subsets", res.times.subsets},
                {"match", res.times.match},     {"verify", res.times.verify},
                {"icp", res.times.icp},         {"total", res.times.total}};
  write_text(json_path, j.dump(2) + "\n");
  std::cout << "transform written to " << tf_path.string() << '\n';
  if (res.error) {
    std::cout << "RE " << res.error->re_deg() << " deg, TE " << res.error->te
              << (res.success ? " (success)" : " (failure)") << '\n';
  }
  return 0;
}

int cmd_benchmark(const Common& common, const std::string& suite, const std::string& methods,
                  std::optional<int> pairs, std::optional<double> outliers, const std::string& checkpoint,
                  const std::string& out) {
  std::vector<dfc::Method> parsed;
  try {
    parsed = dfc::parse_methods(methods);
  } catch (const dfc::Error& e) {
    throw UsageError(e.what());
  }
  auto cfg = resolve(common);
  if (pairs) cfg.suite.pairs = *pairs;
  if (outliers) cfg.suite.data.outlier_ratio = *outliers;
  const auto model = model_for(checkpoint);

  std::vector<dfc::PairData> data;
  std::string name = suite;
  if (suite == "synthetic") {
    cfg.suite.data.tau = cfg.registration.tau;
    data = dfc::make_synthetic_suite(cfg.suite);
  } else {
    if (!fs::exists(suite)) throw UsageError("suite manifest " + suite + " does not exist");
    data = dfc::load_manifest(suite, cfg.registration);
    name = fs::path(suite).filename().string();
  }
  auto report = dfc::run_suite(data, parsed, model, cfg.registration, common.threads, name);
  report.seed = cfg.suite.seed;
  const fs::path dir(out);
  fs::create_directories(dir);
  write_text(dir / "report.json", dfc::report_json(report));
  write_text(dir / "summary.csv", dfc::report_csv(report));
  write_text(dir / "pairs.csv", dfc::report_pairs_csv(report));
  std::cout << dfc::report_table(report);
  return 0;
}

int cmd_train(const Common& common, const std::string& out) {
  auto cfg = resolve(common);
  cfg.train.threads = common.threads;
  const fs::path dir(out);
  fs::create_directories(dir);
  const auto res = dfc::train(cfg.train, [](const dfc::EpochRecord& r) {
    std::cout << "epoch " << r.epoch << "  l_c " << r.val.l_c << "  l_t " << r.val.l_t << "  total "
              << r.val.total << '\n'
              << std::flush;
  });
  dfc::save_checkpoint(res.model, dir / "checkpoint.json");
  dfc::write_trace_csv(res.trace, dir / "trace.csv");
  std::cout << "checkpoint written to " << (dir / "checkpoint.json").string() << '\n';
  return 0;
}

int cmd_selfcheck(const Common& common) {
  const auto results = dfc::run_selfcheck(common.seed.value_or(0));
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ")\n";
    all = all && r.passed;
  }
  return all ? 0 : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfc: correspondence-based point cloud registration"};
  app.require_subcommand(1);

  Common reg_common, bench_common, train_common, check_common;
  std::string src, dst, profile, checkpoint = DFC_DEFAULT_CHECKPOINT, gt_path, reg_out, src_feats, dst_feats;
  std::optional<bool> icp;
  auto* reg = app.add_subcommand("register", "register one pair of clouds");
  add_common(reg, reg_common);
  reg->add_option("--src", src, "source cloud (.ply, .xyz, .csv)")->required()->check(CLI::ExistingFile);
  reg->add_option("--dst", dst, "target cloud")->required()->check(CLI::ExistingFile);
  reg->add_option("--profile", profile, "indoor, outdoor or synthetic")
      ->check(CLI::IsMember({"indoor", "outdoor", "synthetic"}));
  reg->add_option("--checkpoint", checkpoint, "model checkpoint")->check(CLI::ExistingFile);
  reg->add_option("--gt", gt_path, "ground-truth 4x4 transform")->check(CLI::ExistingFile);
  auto* sf = reg->add_option("--src-features", src_feats, "per-point source descriptors (CSV)")
                ->check(CLI::ExistingFile);
  auto* df = reg->add_option("--dst-features", dst_feats, "per-point target descriptors (CSV)")
                ->check(CLI::ExistingFile);
  sf->needs(df);
  df->needs(sf);
  reg->add_flag("--icp,!--no-icp", icp, "refine with ICP");
  reg->add_option("--out", reg_out, "output directory or .txt transform path")->required();

  std::string suite = "synthetic", methods = "dfc,dfc_v1,ransac-1k", bench_out, bench_ck = DFC_DEFAULT_CHECKPOINT;
  std::optional<int> pairs;
  std::optional<double> outliers;
  auto* bench = app.add_subcommand("benchmark", "run a pair suite and report RR/RE/TE/time");
  add_common(bench, bench_common);
  bench->add_option("--suite", suite, "'synthetic' or a manifest CSV");
  bench->add_option("--methods", methods, "comma list: dfc, dfc_v1, icp_only, ransac-<n>");
  bench->add_option("--pairs", pairs, "synthetic pair count")->check(CLI::PositiveNumber);
  bench->add_option("--outliers", outliers, "synthetic outlier ratio")->check(CLI::Range(0.0, 1.0));
  bench->add_option("--checkpoint", bench_ck, "model checkpoint")->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "report directory")->required();

  std::string train_out;
  auto* tr = app.add_subcommand("train", "train the embedding and weighting on synthetic pairs");
  add_common(tr, train_common);
  tr->add_option("--out", train_out, "output directory")->required();

  auto* sc = app.add_subcommand("selfcheck", "run the embedded oracle checks");
  sc->add_option("--seed", check_common.seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*reg) return cmd_register(reg_common, src, dst, profile, checkpoint, gt_path, src_feats, dst_feats, icp, reg_out);
    if (*bench) return cmd_benchmark(bench_common, suite, methods, pairs, outliers, bench_ck, bench_out);
    if (*tr) return cmd_train(train_common, train_out);
    if (*sc) return cmd_selfcheck(check_common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
