#include "dfc/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dfc/error.hpp"

namespace dfc {
namespace {

using nlohmann::json;

json tensor_json(const ConstParamBlock& b) {
  std::vector<double> row_major(b.values.size());
  for (Eigen::Index r = 0; r < b.rows; ++r) {
    for (Eigen::Index c = 0; c < b.cols; ++c) {
      row_major[static_cast<std::size_t>(r * b.cols + c)] =
          b.values[static_cast<std::size_t>(c * b.rows + r)];
    }
  }
  return {{"name", b.name}, {"shape", {b.rows, b.cols}}, {"values", row_major}};
}

void fill(const ParamBlock& b, const json& t) {
  const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2 || shape[0] != b.rows || shape[1] != b.cols) {
    throw Error(ErrorCode::CheckpointError, "tensor '" + b.name + "' has the wrong shape");
  }
  const auto& values = t.at("values");
  if (values.size() != b.values.size()) {
    throw Error(ErrorCode::CheckpointError, "tensor '" + b.name + "' has the wrong length");
  }
  for (Eigen::Index r = 0; r < b.rows; ++r) {
    for (Eigen::Index c = 0; c < b.cols; ++c) {
      b.values[static_cast<std::size_t>(c * b.rows + r)] =
          values[static_cast<std::size_t>(r * b.cols + c)].get<double>();
    }
  }
}

}  // namespace

DfcModel::DfcModel(const GfmConfig& config, std::array<int, 2> mlp_hidden, Rng& rng)
    : gfm(config, rng), mlp(config.out_dim, mlp_hidden, rng) {}

std::string checkpoint_to_json(const DfcModel& model) {
  const auto& c = model.gfm.config();
  json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["gfm"] = {{"backend", to_string(c.backend)},
              {"graph_k", c.graph_k},
              {"edge_channels", c.edge_channels},
              {"scale_channels", c.scale_channels},
              {"out_dim", c.out_dim},
              {"multiscale_stride", c.multiscale_stride},
              {"bn_epsilon", c.bn_epsilon},
              {"bn_momentum", c.bn_momentum}};
  j["mlp"] = {{"in_dim", model.mlp.in_dim()}, {"hidden", model.mlp.hidden()}};
  json tensors = json::array();
  for (const auto& b : model.gfm.state()) tensors.push_back(tensor_json(b));
  for (const auto& b : model.mlp.state()) tensors.push_back(tensor_json(b));
  j["tensors"] = std::move(tensors);
  return j.dump(1);
}

DfcModel checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
      throw Error(ErrorCode::CheckpointError, "unsupported schema_version " + std::to_string(version));
    }
    const auto& g = j.at("gfm");
    GfmConfig c;
    c.backend = embedding_backend_from_string(g.at("backend").get<std::string>());
    c.graph_k = g.at("graph_k").get<int>();
    c.edge_channels = g.at("edge_channels").get<int>();
    c.scale_channels = g.at("scale_channels").get<std::array<int, 3>>();
    c.out_dim = g.at("out_dim").get<int>();
    c.multiscale_stride = g.at("multiscale_stride").get<bool>();
    c.bn_epsilon = g.at("bn_epsilon").get<double>();
    c.bn_momentum = g.at("bn_momentum").get<double>();
    c.validate();
    const auto& m = j.at("mlp");
    if (m.at("in_dim").get<int>() != c.out_dim) {
      throw Error(ErrorCode::CheckpointError, "mlp input width disagrees with gfm out_dim");
    }
    Rng rng(0);
    DfcModel model(c, m.at("hidden").get<std::array<int, 2>>(), rng);

    std::map<std::string, const json*> by_name;
    for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
    auto blocks = model.gfm.mutable_state();
    for (auto& b : model.mlp.parameters()) blocks.push_back(b);
    for (const auto& b : blocks) {
      const auto it = by_name.find(b.name);
      if (it == by_name.end()) throw Error(ErrorCode::CheckpointError, "missing tensor '" + b.name + "'");
      fill(b, *it->second);
    }
    if (by_name.size() != blocks.size()) {
      throw Error(ErrorCode::CheckpointError, "checkpoint holds unexpected tensors");
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CheckpointError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CheckpointError) throw;
    throw Error(ErrorCode::CheckpointError, e.what());
  }
}

void save_checkpoint(const DfcModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << checkpoint_to_json(model) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

DfcModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

bool same_state(const DfcModel& a, const DfcModel& b) {
  auto sa = a.gfm.state();
  auto sb = b.gfm.state();
  for (const auto& x : a.mlp.state()) sa.push_back(x);
  for (const auto& x : b.mlp.state()) sb.push_back(x);
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].name != sb[i].name || sa[i].rows != sb[i].rows || sa[i].cols != sb[i].cols) return false;
    if (!std::equal(sa[i].values.begin(), sa[i].values.end(), sb[i].values.begin())) return false;
  }
  return true;
}

}  // namespace dfc
