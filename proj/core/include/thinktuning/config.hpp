#pragma once

#include <string>

#include "thinktuning/trainer.hpp"

namespace thinktuning {

// Strict JSON -> TrainConfig: every key is optional (defaults apply), but
// unknown keys, wrong types, and malformed JSON throw ConfigError with the
// offending path. Value ranges are checked later by TrainConfig::validate(),
// after any command-line overrides.
TrainConfig parse_config(const std::string& json_text);

// Canonical serialization: every field, fixed key order, 2-space indent,
// trailing newline. parse_config(config_to_json_text(c)) reproduces c.
std::string config_to_json_text(const TrainConfig& cfg);

TrainConfig read_config_file(const std::string& path);
void write_config_file(const std::string& path, const TrainConfig& cfg);

}  // namespace thinktuning
