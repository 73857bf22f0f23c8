#include "dfc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "dfc/error.hpp"
#include "dfc/parallel.hpp"

namespace dfc {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Times fn into `slot` and prefixes any library error with the stage name.
template <typename Fn>
auto stage(const char* name, double& slot, Fn&& fn) {
  const auto t0 = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      slot += seconds_since(t0);
    } else {
      auto out = fn();
      slot += seconds_since(t0);
      return out;
    }
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what());
  }
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::string fmt(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt_opt(const std::optional<double>& v, int precision) {
  return v ? fmt(*v, precision) : std::string("-");
}

}  // namespace

void RegistrationConfig::validate() const {
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be > 0");
  if (n_s < 1 || subset_k < 3 || n_corr < 3) {
    throw Error(ErrorCode::InvalidArgument, "n_s >= 1, subset_k >= 3 and n_corr >= 3 required");
  }
  if (!(tau > 0.0) || voxel < 0.0 || !(re_max_deg > 0.0) || !(te_max > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "tau and success thresholds must be > 0, voxel >= 0");
  }
  if (icp_iterations < 1 || threads < 1) {
    throw Error(ErrorCode::InvalidArgument, "icp_iterations and threads must be >= 1");
  }
  features.validate();
}

RegistrationConfig RegistrationConfig::from_profile(const std::string& name) {
  RegistrationConfig c;
  c.profile = name;
  if (name == "indoor") {
    c.voxel = 0.05;
    c.tau = 0.10;
    c.re_max_deg = 15.0;
    c.te_max = 0.30;
    c.n_corr = 5000;
  } else if (name == "outdoor") {
    c.voxel = 0.30;
    c.tau = 0.60;
    c.re_max_deg = 5.0;
    c.te_max = 0.60;
    c.n_corr = 5000;
  } else if (name == "synthetic") {
    c.voxel = 0.0;
    c.tau = 0.05;
    c.re_max_deg = 5.0;
    c.te_max = 0.05;
    c.n_corr = 1000;
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown profile '" + name + "' (valid: indoor, outdoor, synthetic)");
  }
  return c;
}

bool is_success(const PoseError& e, const RegistrationConfig& cfg) {
  return e.re_deg() < cfg.re_max_deg && e.te < cfg.te_max;
}

RegistrationResult register_correspondences(const CorrespondenceSet& corrs, const DfcModel& model,
                                            const RegistrationConfig& cfg, const PointCloud* source,
                                            const PointCloud* target, const RigidTransform* gt) {
  cfg.validate();
  if (model.gfm.config().backend != cfg.backend) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint backend " + to_string(model.gfm.config().backend) +
                                              " differs from configured " + to_string(cfg.backend));
  }
  const auto t0 = Clock::now();
  RegistrationResult res;
  res.correspondences = corrs.size();
  auto& t = res.times;

  CorrespondenceSet embedded = corrs;
  embedded.features = stage("embed", t.embed, [&] { return model.gfm.forward(corrs, Mode::eval); });
  embedded.confidences =
      stage("weight", t.weight, [&] { return model.mlp.confidence(embedded.features); });
  const auto candidates = stage("sample", t.sample, [&] {
    return sample_candidates(embedded.confidences, static_cast<Eigen::Index>(cfg.n_s));
  });
  const int k = static_cast<int>(std::min<Eigen::Index>(cfg.subset_k, corrs.size()));
  const auto subsets =
      stage("subsets", t.subsets, [&] { return build_subsets(embedded, candidates.indices, k); });
  MatchingOptions mo;
  mo.sigma2 = cfg.sigma2;
  mo.mode = cfg.principal;
  mo.threads = cfg.threads;
  const auto matched = stage("match", t.match, [&] { return match_subsets(embedded, subsets, mo); });

  stage("verify", t.verify, [&] {
    std::vector<Hypothesis> hyps;
    hyps.reserve(matched.size());
    for (std::size_t i = 0; i < matched.size(); ++i) {
      if (!matched[i].transform) {
        ++res.degenerate_subsets;
        continue;
      }
      const auto c = count_inliers(*matched[i].transform, corrs, cfg.tau);
      hyps.push_back({*matched[i].transform, c.count, c.mean_residual, subsets[i].seed});
    }
    res.hypotheses = hyps.size();
    res.best = hyps[select_best(hyps)];
    res.transform = res.best.transform;
  });

  if (cfg.icp && source != nullptr && target != nullptr) {
    stage("icp", t.icp, [&] {
      IcpConfig ic;
      ic.max_iterations = cfg.icp_iterations;
      ic.max_corr_dist = cfg.tau;
      const auto r = icp_refine(*source, *target, res.transform, ic);
      res.transform = r.transform;
      res.icp_applied = !r.no_correspondences;
      res.icp_rmse = r.final_rmse;
      res.icp_history = r.rmse_history;
    });
  }
  res.inlier_mask = count_inliers(res.transform, corrs, cfg.tau).mask;
  if (gt != nullptr) {
    res.error = pose_error(res.transform, *gt);
    res.success = is_success(*res.error, cfg);
  }
  t.total = seconds_since(t0);
  return res;
}

RegistrationResult register_pair(const PointCloud& source, const PointCloud& target,
                                 const RegistrationConfig& cfg, const DfcModel& model,
                                 const RigidTransform* gt) {
  cfg.validate();
  if (cfg.features.mode == FeatureMode::oracle && gt == nullptr) {
    throw Error(ErrorCode::MissingContext, "oracle features need the ground-truth transform");
  }
  const PointCloud src = cfg.voxel > 0.0 ? voxel_downsample(source, cfg.voxel) : source;
  const PointCloud dst = cfg.voxel > 0.0 ? voxel_downsample(target, cfg.voxel) : target;
  Rng rng(derive_seed(cfg.seed, 0x5eed));
  std::optional<PairContext> ctx;
  if (gt != nullptr) ctx = PairContext::from_transform(src, dst, *gt, cfg.tau);
  const auto [fs, fd] = describe_pair(cfg.features, src, dst, ctx ? &*ctx : nullptr, rng);
  CorrespondenceSet corrs = build_correspondences(src, fs, dst, fd, cfg.n_corr, rng);
  return register_correspondences(corrs, model, cfg, &src, &dst, gt);
}

Method parse_method(const std::string& raw) {
  std::string name = raw;
  std::replace(name.begin(), name.end(), '_', '-');
  Method m;
  m.name = raw;
  if (name == "dfc") {
    m.kind = MethodKind::dfc;
  } else if (name == "dfc-v1") {
    m.kind = MethodKind::dfc_v1;
  } else if (name == "icp-only") {
    m.kind = MethodKind::icp_only;
  } else if (name.rfind("ransac-", 0) == 0 && name.size() > 7) {
    std::string count = name.substr(7);
    long scale = 1;
    if (count.back() == 'k') {
      scale = 1000;
      count.pop_back();
    }
    std::size_t used = 0;
    long n = 0;
    try {
      n = std::stol(count, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != count.size() || n < 1 || n * scale > 100000000) {
      throw Error(ErrorCode::InvalidArgument, "bad RANSAC iteration count in '" + raw + "'");
    }
    m.kind = MethodKind::ransac;
    m.ransac_iterations = static_cast<int>(n * scale);
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown method '" + raw + "' (valid: dfc, dfc_v1, icp_only, ransac-<n>, e.g. ransac-1k)");
  }
  return m;
}

std::vector<Method> parse_methods(const std::string& comma_list) {
  std::vector<Method> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_method(item));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no methods given");
  return out;
}

PairData synthetic_pair(const SyntheticSuite& suite, int index) {
  Rng rng(derive_seed(suite.seed, static_cast<std::uint64_t>(index)));
  auto [pair, corrs] = make_synthetic_pair(suite.data, rng);
  PairData out;
  out.name = "synthetic-" + std::to_string(index);
  out.source = std::move(pair.source);
  out.target = std::move(pair.target);
  out.corrs = std::move(corrs);
  out.gt = pair.gt;
  return out;
}

std::vector<PairData> make_synthetic_suite(const SyntheticSuite& suite) {
  if (suite.pairs < 1) throw Error(ErrorCode::InvalidArgument, "a suite needs at least one pair");
  std::vector<PairData> out;
  out.reserve(static_cast<std::size_t>(suite.pairs));
  for (int i = 0; i < suite.pairs; ++i) out.push_back(synthetic_pair(suite, i));
  return out;
}

std::vector<PairData> load_manifest(const std::filesystem::path& manifest,
                                    const RegistrationConfig& cfg) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::IoError, "cannot read manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<PairData> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (out.empty() && !fields.empty() && fields[0].rfind("src", 0) == 0) continue;
    if (fields.size() < 2 || fields.size() > 3) {
      throw Error(ErrorCode::ParseError, manifest.string() + ":" + std::to_string(line_no) +
                                             ": expected src_path,dst_path[,gt_path]");
    }
    PairData p;
    p.name = fields[0] + " -> " + fields[1];
    const PointCloud src = load_cloud(base / fields[0]);
    const PointCloud dst = load_cloud(base / fields[1]);
    if (fields.size() == 3 && !fields[2].empty()) p.gt = load_transform(base / fields[2]);
    p.source = cfg.voxel > 0.0 ? voxel_downsample(src, cfg.voxel) : src;
    p.target = cfg.voxel > 0.0 ? voxel_downsample(dst, cfg.voxel) : dst;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(out.size())));
    std::optional<PairContext> ctx;
    if (p.gt) ctx = PairContext::from_transform(p.source, p.target, *p.gt, cfg.tau);
    const auto [fs, fd] = describe_pair(cfg.features, p.source, p.target, ctx ? &*ctx : nullptr, rng);
    p.corrs = build_correspondences(p.source, fs, p.target, fd, cfg.n_corr, rng);
    out.push_back(std::move(p));
  }
  if (out.empty()) throw Error(ErrorCode::ParseError, "manifest " + manifest.string() + " lists no pairs");
  return out;
}

PairOutcome run_method(const Method& method, const PairData& pair, std::size_t index,
                       const DfcModel& model, const RegistrationConfig& cfg) {
  PairOutcome o;
  o.index = index;
  o.name = pair.name;
  const RigidTransform* gt = pair.gt ? &*pair.gt : nullptr;
  const auto t0 = Clock::now();
  try {
    RigidTransform tf;
    switch (method.kind) {
      case MethodKind::dfc:
      case MethodKind::dfc_v1: {
        RegistrationConfig c = cfg;
        c.icp = method.kind == MethodKind::dfc;
        tf = register_correspondences(pair.corrs, model, c, &pair.source, &pair.target).transform;
        break;
      }
      case MethodKind::ransac: {
        RansacConfig rc;
        rc.iterations = method.ransac_iterations;
        rc.tau = cfg.tau;
        rc.seed = derive_seed(cfg.seed, index);
        tf = ransac(pair.corrs, rc).best.transform;
        break;
      }
      case MethodKind::icp_only: {
        IcpConfig ic;
        ic.max_iterations = cfg.icp_iterations;
        ic.max_corr_dist = cfg.tau;
        tf = icp_refine(pair.source, pair.target, RigidTransform::identity(), ic).transform;
        break;
      }
    }
    o.time_s = seconds_since(t0);
    o.inliers = count_inliers(tf, pair.corrs, cfg.tau).count;
    if (gt != nullptr) {
      const auto e = pose_error(tf, *gt);
      o.re_deg = e.re_deg();
      o.te = e.te;
      o.success = is_success(e, cfg);
    }
  } catch (const Error& e) {
    o.time_s = seconds_since(t0);
    o.failed = true;
    o.message = e.what();
  }
  return o;
}

MethodReport aggregate(const std::string& method, std::vector<PairOutcome> outcomes) {
  MethodReport r;
  r.method = method;
  r.pairs = std::move(outcomes);
  if (r.pairs.empty()) return r;
  double re = 0.0, te = 0.0, time = 0.0;
  std::vector<double> times;
  for (const auto& o : r.pairs) {
    time += o.time_s;
    times.push_back(o.time_s);
    if (!o.success) continue;
    ++r.successes;
    re += *o.re_deg;
    te += *o.te;
  }
  const auto n = static_cast<double>(r.pairs.size());
  r.rr = 100.0 * static_cast<double>(r.successes) / n;
  if (r.successes > 0) {
    r.mean_re_deg = re / static_cast<double>(r.successes);
    r.mean_te = te / static_cast<double>(r.successes);
  }
  r.mean_time_s = time / n;
  std::sort(times.begin(), times.end());
  const std::size_t m = times.size() / 2;
  r.median_time_s = times.size() % 2 ? times[m] : 0.5 * (times[m - 1] + times[m]);
  return r;
}

SuiteReport run_suite(const std::vector<PairData>& pairs, const std::vector<Method>& methods,
                      const DfcModel& model, const RegistrationConfig& cfg, int threads,
                      const std::string& suite_name) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "a suite needs at least one pair");
  cfg.validate();
  RegistrationConfig inner = cfg;
  inner.threads = 1;
  std::vector<std::vector<PairOutcome>> slots(methods.size(), std::vector<PairOutcome>(pairs.size()));
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      slots[m][i] = run_method(methods[m], pairs[i], i, model, inner);
    }
  });
  SuiteReport rep;
  rep.suite = suite_name;
  rep.seed = cfg.seed;
  rep.config = cfg;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    rep.methods.push_back(aggregate(methods[m].name, std::move(slots[m])));
  }
  return rep;
}

std::string report_json(const SuiteReport& report) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  const auto& c = report.config;
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["suite"] = report.suite;
  j["seed"] = report.seed;
  j["config"] = {{"profile", c.profile},       {"sigma2", c.sigma2},
                 {"n_s", c.n_s},               {"subset_k", c.subset_k},
                 {"tau", c.tau},               {"voxel", c.voxel},
                 {"n_corr", c.n_corr},         {"re_max_deg", c.re_max_deg},
                 {"te_max", c.te_max},         {"principal", to_string(c.principal)},
                 {"backend", to_string(c.backend)}, {"icp_iterations", c.icp_iterations}};
  ordered_json methods = ordered_json::array();
  for (const auto& m : report.methods) {
    ordered_json pairs = ordered_json::array();
    for (const auto& o : m.pairs) {
      pairs.push_back({{"index", o.index},
                       {"name", o.name},
                       {"success", o.success},
                       {"failed", o.failed},
                       {"message", o.message},
                       {"re_deg", opt(o.re_deg)},
                       {"te", opt(o.te)},
                       {"inliers", o.inliers}});
    }
    methods.push_back({{"method", m.method},
                       {"pairs_total", m.pairs.size()},
                       {"successes", m.successes},
                       {"rr_percent", m.rr},
                       {"mean_re_deg", opt(m.mean_re_deg)},
                       {"mean_te", opt(m.mean_te)},
                       {"pairs", std::move(pairs)}});
  }
  j["methods"] = std::move(methods);
  return j.dump(2) + "\n";
}

std::string report_csv(const SuiteReport& report) {
  std::ostringstream os;
  os << "method,pairs,rr_percent,mean_re_deg,mean_te,mean_time_s,median_time_s\n"
     << std::setprecision(10);
  for (const auto& m : report.methods) {
    os << m.method << ',' << m.pairs.size() << ',' << m.rr << ','
       << (m.mean_re_deg ? std::to_string(*m.mean_re_deg) : "") << ','
       << (m.mean_te ? std::to_string(*m.mean_te) : "") << ',' << m.mean_time_s << ','
       << m.median_time_s << '\n';
  }
  return os.str();
}

std::string report_pairs_csv(const SuiteReport& report) {
  std::ostringstream os;
  os << "method,index,name,success,failed,re_deg,te,inliers,time_s\n" << std::setprecision(10);
  for (const auto& m : report.methods) {
    for (const auto& o : m.pairs) {
      os << m.method << ',' << o.index << ",\"" << o.name << "\"," << o.success << ',' << o.failed
         << ',' << (o.re_deg ? std::to_string(*o.re_deg) : "") << ','
         << (o.te ? std::to_string(*o.te) : "") << ',' << o.inliers << ',' << o.time_s << '\n';
    }
  }
  return os.str();
}

std::string report_table(const SuiteReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "Method" << std::right << std::setw(9) << "RR(%)"
     << std::setw(10) << "RE(deg)" << std::setw(10) << "TE(cm)" << std::setw(11) << "Time(s)"
     << '\n';
  for (const auto& m : report.methods) {
    std::optional<double> te_cm;
    if (m.mean_te) te_cm = *m.mean_te * 100.0;
    os << std::left << std::setw(14) << m.method << std::right << std::setw(9) << fmt(m.rr, 2)
       << std::setw(10) << fmt_opt(m.mean_re_deg, 3) << std::setw(10) << fmt_opt(te_cm, 3)
       << std::setw(11) << fmt(m.mean_time_s, 4) << '\n';
  }
  return os.str();
}

}  // namespace dfc
