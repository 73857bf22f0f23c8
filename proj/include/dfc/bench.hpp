#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfc/checkpoint.hpp"
#include "dfc/classic.hpp"
#include "dfc/cloud.hpp"
#include "dfc/correspondence.hpp"
#include "dfc/features.hpp"
#include "dfc/geometry.hpp"
#include "dfc/matching.hpp"
#include "dfc/verification.hpp"

namespace dfc {

struct RegistrationConfig {
  std::string profile = "synthetic";
  double sigma2 = 1.0;
  int n_s = 200;
  int subset_k = 40;
  double tau = 0.05;
  double voxel = 0.0;  // 0 keeps the clouds as they are
  int n_corr = 1000;   // correspondences sampled per pair
  double re_max_deg = 5.0;
  double te_max = 0.05;
  PrincipalMode principal = PrincipalMode::eigenvector;
  EmbeddingBackend backend = EmbeddingBackend::gfm;
  bool icp = true;
  int icp_iterations = 50;
  std::uint64_t seed = 0;
  int threads = 1;  // subset-level workers inside one pair
  FeatureProvider features;

  /// Throws InvalidArgument.
  void validate() const;
  /// indoor, outdoor or synthetic. Throws InvalidArgument for other names.
  static RegistrationConfig from_profile(const std::string& name);
};

struct StageTimes {
  double embed = 0.0;
  double weight = 0.0;
  double sample = 0.0;
  double subsets = 0.0;
  double match = 0.0;
  double verify = 0.0;
  double icp = 0.0;
  double total = 0.0;

  double stage_sum() const { return embed + weight + sample + subsets + match + verify + icp; }
};

struct RegistrationResult {
  RigidTransform transform;
  std::vector<std::uint8_t> inlier_mask;
  std::optional<PoseError> error;
  bool success = false;
  StageTimes times;
  Hypothesis best;
  std::size_t hypotheses = 0;
  std::size_t degenerate_subsets = 0;
  Eigen::Index correspondences = 0;
  bool icp_applied = false;
  double icp_rmse = 0.0;
  std::vector<double> icp_history;
};

/// True when re < re_max and te < te_max.
bool is_success(const PoseError& e, const RegistrationConfig& cfg);

/// GFM embedding -> confidence -> top-n_s seeds -> subsets -> spectral
/// weights -> weighted Procrustes -> verification, then ICP on the clouds
/// when cfg.icp is set and both clouds are given. Stage failures are
/// rethrown with the stage name prefixed; degenerate subsets are skipped.
RegistrationResult register_correspondences(const CorrespondenceSet& corrs, const DfcModel& model,
                                            const RegistrationConfig& cfg,
                                            const PointCloud* source = nullptr,
                                            const PointCloud* target = nullptr,
                                            const RigidTransform* gt = nullptr);

/// Clouds in, transform out: voxel_downsample -> describe -> build
/// correspondences -> register_correspondences. The oracle feature provider
/// needs gt.
RegistrationResult register_pair(const PointCloud& source, const PointCloud& target,
                                 const RegistrationConfig& cfg, const DfcModel& model,
                                 const RigidTransform* gt = nullptr);

enum class MethodKind { dfc, dfc_v1, ransac, icp_only };

struct Method {
  MethodKind kind = MethodKind::dfc;
  int ransac_iterations = 0;
  std::string name;
};

/// dfc, dfc_v1, icp_only, ransac-<n> with an optional k suffix (ransac-1k).
/// Underscores and hyphens are interchangeable. Throws InvalidArgument
/// listing the valid names.
Method parse_method(const std::string& name);
std::vector<Method> parse_methods(const std::string& comma_list);

/// One registration problem: clouds (already downsampled), putative
/// correspondences and optional ground truth.
struct PairData {
  std::string name;
  PointCloud source;
  PointCloud target;
  CorrespondenceSet corrs;
  std::optional<RigidTransform> gt;
};

struct SyntheticSuite {
  int pairs = 200;
  SyntheticOptions data;
  std::uint64_t seed = 0;
};

PairData synthetic_pair(const SyntheticSuite& suite, int index);
std::vector<PairData> make_synthetic_suite(const SyntheticSuite& suite);

/// Manifest rows are src_path,dst_path[,gt_path], relative to the manifest.
/// A header row starting with "src" is skipped.
std::vector<PairData> load_manifest(const std::filesystem::path& manifest,
                                    const RegistrationConfig& cfg);

struct PairOutcome {
  std::size_t index = 0;
  std::string name;
  bool success = false;
  bool failed = false;  // the method threw
  std::string message;
  std::optional<double> re_deg;
  std::optional<double> te;
  Eigen::Index inliers = 0;
  double time_s = 0.0;
};

struct MethodReport {
  std::string method;
  std::vector<PairOutcome> pairs;
  std::size_t successes = 0;
  double rr = 0.0;  // percent
  std::optional<double> mean_re_deg;  // over successes only
  std::optional<double> mean_te;
  double mean_time_s = 0.0;
  double median_time_s = 0.0;
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  RegistrationConfig config;
  std::vector<MethodReport> methods;
};

/// Runs one method on one pair with the pair's derived seed.
PairOutcome run_method(const Method& method, const PairData& pair, std::size_t index,
                       const DfcModel& model, const RegistrationConfig& cfg);

/// Aggregates outcomes: RR over all pairs, RE and TE over successes only.
MethodReport aggregate(const std::string& method, std::vector<PairOutcome> outcomes);

/// Pairs go to a pool of `threads` workers; the report is assembled in pair
/// order, so it does not depend on the thread count.
SuiteReport run_suite(const std::vector<PairData>& pairs, const std::vector<Method>& methods,
                      const DfcModel& model, const RegistrationConfig& cfg, int threads,
                      const std::string& suite_name = "synthetic");

inline constexpr int kReportSchemaVersion = 1;

/// Machine report. Timings are left out so equal seeds give equal bytes.
std::string report_json(const SuiteReport& report);
/// Summary table: method,pairs,rr_percent,mean_re_deg,mean_te,mean_time_s,median_time_s.
std::string report_csv(const SuiteReport& report);
/// Per-pair rows: method,index,name,success,failed,re_deg,te,inliers,time_s.
std::string report_pairs_csv(const SuiteReport& report);
/// Fixed-width table with RR(%), RE(deg), TE(cm) and Time(s) columns.
std::string report_table(const SuiteReport& report);

}  // namespace dfc
