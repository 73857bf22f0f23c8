#include "dfc/config.hpp"

#include <fstream>
#include <sstream>

#include "dfc/error.hpp"

namespace dfc {
namespace {

using nlohmann::json;

json features_json(const FeatureProvider& f) {
  return {{"mode", to_string(f.mode)},  {"dim", f.dim},
          {"noise", f.noise},           {"radius", f.radius},
          {"bins", f.bins},             {"source_path", f.source_path.string()},
          {"target_path", f.target_path.string()}};
}

json gfm_json(const GfmConfig& g) {
  return {{"backend", to_string(g.backend)},
          {"graph_k", g.graph_k},
          {"edge_channels", g.edge_channels},
          {"scale_channels", g.scale_channels},
          {"out_dim", g.out_dim},
          {"multiscale_stride", g.multiscale_stride},
          {"bn_epsilon", g.bn_epsilon},
          {"bn_momentum", g.bn_momentum}};
}

json synthetic_json(const SyntheticOptions& s) {
  return {{"n_points", s.n_points},
          {"outlier_ratio", s.outlier_ratio},
          {"noise_sigma", s.noise_sigma},
          {"tau", s.tau}};
}

// Every key of `given` must exist in `known`; recurse into objects.
void check_keys(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!known.is_object() || !known.contains(it.key())) {
      throw Error(ErrorCode::InvalidArgument, "unknown config key '" + path + "'");
    }
    if (known.at(it.key()).is_object()) check_keys(it.value(), known.at(it.key()), path);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_features(const json& j, FeatureProvider& f) {
  if (j.contains("mode")) f.mode = feature_mode_from_string(j.at("mode").get<std::string>());
  read(j, "dim", f.dim);
  read(j, "noise", f.noise);
  read(j, "radius", f.radius);
  read(j, "bins", f.bins);
  if (j.contains("source_path")) f.source_path = j.at("source_path").get<std::string>();
  if (j.contains("target_path")) f.target_path = j.at("target_path").get<std::string>();
}

void read_gfm(const json& j, GfmConfig& g) {
  if (j.contains("backend")) g.backend = embedding_backend_from_string(j.at("backend").get<std::string>());
  read(j, "graph_k", g.graph_k);
  read(j, "edge_channels", g.edge_channels);
  read(j, "scale_channels", g.scale_channels);
  read(j, "out_dim", g.out_dim);
  read(j, "multiscale_stride", g.multiscale_stride);
  read(j, "bn_epsilon", g.bn_epsilon);
  read(j, "bn_momentum", g.bn_momentum);
}

void read_synthetic(const json& j, SyntheticOptions& s) {
  read(j, "n_points", s.n_points);
  read(j, "outlier_ratio", s.outlier_ratio);
  read(j, "noise_sigma", s.noise_sigma);
  read(j, "tau", s.tau);
}

}  // namespace

json to_json(const AppConfig& cfg) {
  const auto& r = cfg.registration;
  const auto& t = cfg.train;
  json j;
  j["registration"] = {{"profile", r.profile},
                       {"sigma2", r.sigma2},
                       {"n_s", r.n_s},
                       {"subset_k", r.subset_k},
                       {"tau", r.tau},
                       {"voxel", r.voxel},
                       {"n_corr", r.n_corr},
                       {"re_max_deg", r.re_max_deg},
                       {"te_max", r.te_max},
                       {"principal", to_string(r.principal)},
                       {"backend", to_string(r.backend)},
                       {"icp", r.icp},
                       {"icp_iterations", r.icp_iterations},
                       {"seed", r.seed},
                       {"features", features_json(r.features)}};
  j["train"] = {{"gfm", gfm_json(t.gfm)},
                {"mlp_hidden", t.mlp_hidden},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"lambda", t.lambda},
                {"seed", t.seed},
                {"train_pairs", t.train_pairs},
                {"val_pairs", t.val_pairs},
                {"data", synthetic_json(t.data)},
                {"early_stop_ratio", t.early_stop_ratio}};
  j["suite"] = {{"pairs", cfg.suite.pairs}, {"seed", cfg.suite.seed}, {"data", synthetic_json(cfg.suite.data)}};
  return j;
}

AppConfig from_json(const json& j, const AppConfig& base) {
  check_keys(j, to_json(base), "");
  AppConfig c = base;
  try {
    if (j.contains("registration")) {
      const auto& r = j.at("registration");
      read(r, "profile", c.registration.profile);
      read(r, "sigma2", c.registration.sigma2);
      read(r, "n_s", c.registration.n_s);
      read(r, "subset_k", c.registration.subset_k);
      read(r, "tau", c.registration.tau);
      read(r, "voxel", c.registration.voxel);
      read(r, "n_corr", c.registration.n_corr);
      read(r, "re_max_deg", c.registration.re_max_deg);
      read(r, "te_max", c.registration.te_max);
      if (r.contains("principal")) {
        c.registration.principal = principal_mode_from_string(r.at("principal").get<std::string>());
      }
      if (r.contains("backend")) {
        c.registration.backend = embedding_backend_from_string(r.at("backend").get<std::string>());
      }
      read(r, "icp", c.registration.icp);
      read(r, "icp_iterations", c.registration.icp_iterations);
      read(r, "seed", c.registration.seed);
      if (r.contains("features")) read_features(r.at("features"), c.registration.features);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      if (t.contains("gfm")) read_gfm(t.at("gfm"), c.train.gfm);
      read(t, "mlp_hidden", c.train.mlp_hidden);
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "lambda", c.train.lambda);
      read(t, "seed", c.train.seed);
      read(t, "train_pairs", c.train.train_pairs);
      read(t, "val_pairs", c.train.val_pairs);
      if (t.contains("data")) read_synthetic(t.at("data"), c.train.data);
      read(t, "early_stop_ratio", c.train.early_stop_ratio);
    }
    if (j.contains("suite")) {
      const auto& s = j.at("suite");
      read(s, "pairs", c.suite.pairs);
      read(s, "seed", c.suite.seed);
      if (s.contains("data")) read_synthetic(s.at("data"), c.suite.data);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::InvalidArgument, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) {
      throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    }
    node = &(*node)[parts[i]];
  }
  if (node->is_object()) throw Error(ErrorCode::InvalidArgument, "'" + key + "' names a section");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = std::move(value);
}

AppConfig load_app_config(const std::filesystem::path& file, const std::vector<std::string>& overrides,
                          const std::string& profile) {
  json given = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::IoError, "cannot read config " + file.string());
    try {
      given = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "config " + file.string() + ": " + e.what());
    }
  }
  // Overrides are checked against the full default document, so they are
  // applied to a merged copy first.
  AppConfig base;
  json merged = to_json(base);
  check_keys(given, merged, "");
  merged.merge_patch(given);
  for (const auto& o : overrides) apply_override(merged, o);

  std::string name = profile;
  if (name.empty()) name = merged["registration"]["profile"].get<std::string>();
  base.registration = RegistrationConfig::from_profile(name);
  // Re-apply the explicit settings over the profile defaults.
  json explicit_doc = given;
  for (const auto& o : overrides) {
    json full = to_json(base);
    full.merge_patch(explicit_doc);
    apply_override(full, o);
    explicit_doc = full;
  }
  AppConfig out = from_json(explicit_doc, base);
  out.registration.profile = name;
  return out;
}

}  // namespace dfc
