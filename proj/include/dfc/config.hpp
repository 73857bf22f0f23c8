#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfc/bench.hpp"
#include "dfc/training.hpp"

namespace dfc {

/// Everything the command line can configure. The JSON form has three
/// sections, "registration", "train" and "suite", whose keys mirror the
/// struct fields.
struct AppConfig {
  RegistrationConfig registration;
  TrainConfig train;
  SyntheticSuite suite;
};

nlohmann::json to_json(const AppConfig& cfg);
/// Reads the keys present in j on top of `base`. Unknown keys throw
/// InvalidArgument naming the dotted path.
AppConfig from_json(const nlohmann::json& j, const AppConfig& base);

/// Applies "a.b.c=value" overrides. The value is parsed as JSON when it can
/// be, otherwise taken as a string. Throws InvalidArgument for keys that do
/// not exist in `doc`.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults for a registration profile, then the config file (if any), then
/// the overrides. The profile comes from `profile` when non-empty, otherwise
/// from the file or overrides, otherwise "synthetic".
AppConfig load_app_config(const std::filesystem::path& file, const std::vector<std::string>& overrides,
                          const std::string& profile = {});

}  // namespace dfc
