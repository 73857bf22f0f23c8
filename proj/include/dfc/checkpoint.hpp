#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "dfc/geometry.hpp"
#include "dfc/gfm_net.hpp"
#include "dfc/weighting.hpp"

namespace dfc {

/// Embedding network plus the confidence head that reads its output.
struct DfcModel {
  GfmNet gfm;
  WeightMlp mlp;

  DfcModel() = default;
  DfcModel(const GfmConfig& config, std::array<int, 2> mlp_hidden, Rng& rng);

  int out_dim() const { return gfm.config().out_dim; }
};

inline constexpr int kCheckpointSchemaVersion = 1;

/// JSON container: schema_version, the GFM config, the MLP sizes and a list of
/// tensors {name, shape [rows, cols], values row-major}.
std::string checkpoint_to_json(const DfcModel& model);
DfcModel checkpoint_from_json(const std::string& text);

void save_checkpoint(const DfcModel& model, const std::filesystem::path& path);
/// Throws CheckpointError on a missing tensor, a shape that disagrees with
/// the stored config, or an unknown schema version.
DfcModel load_checkpoint(const std::filesystem::path& path);

/// True when every stored tensor is bit-identical.
bool same_state(const DfcModel& a, const DfcModel& b);

}  // namespace dfc
