#pragma once

// Experiment configuration files.
//
// Plain INI: `[section]` headers, `key = value` lines, and full-line comments
// starting with '#' or ';'. Unknown sections or keys are errors, so typos
// surface as a ConfigError naming the line and the dotted field. See
// configs/*.ini for every recognized key.

#include <filesystem>
#include <string>
#include <string_view>

#include "tdl/pipelines.hpp"

namespace tdl {

/// Defaults are taken from a default-constructed ExperimentConfig; the
/// result is validated.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical rendering listing every field; parse(format(c)) == c.
std::string format_config(const ExperimentConfig& cfg);

/// FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace tdl
