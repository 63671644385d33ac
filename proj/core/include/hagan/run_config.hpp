#pragma once

// Flat "key = value" run configuration. One key per line, '#' starts a
// comment, and the first key of a written file is `schema_version`. Floats
// are written with round-trip precision so a resolved config reproduces a
// run exactly.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hagan/data.hpp"
#include "hagan/train_config.hpp"

namespace hagan {

inline constexpr int kConfigSchemaVersion = 1;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct RunConfig {
  TrainConfig train;
  data::DatasetSpec data;
};

/// Throws InvalidArgument on a malformed line or a duplicated key.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

/// Every documented key with its current value, in documentation order.
KeyValues to_key_values(const RunConfig& config);

/// Applies known keys. Unknown keys go to `unknown` when given, otherwise
/// they are rejected with InvalidArgument. A `schema_version` other than the
/// current one is rejected.
void apply_key_values(RunConfig& config, const KeyValues& kv, KeyValues* unknown = nullptr);

/// Documented keys with a one-line description each.
std::vector<std::pair<std::string, std::string>> documented_keys();

std::string to_config_text(const RunConfig& config, const KeyValues& extra = {});
RunConfig parse_config_text(const std::string& text, KeyValues* unknown = nullptr);

RunConfig load_run_config(const std::filesystem::path& path, KeyValues* unknown = nullptr);
void save_run_config(const std::filesystem::path& path, const RunConfig& config,
                     const KeyValues& extra = {});

}  // namespace hagan
