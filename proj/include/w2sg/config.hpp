#pragma once

#include "w2sg/common.hpp"
#include "w2sg/experiment.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace w2sg {

// Full config serialization, including execution fields (out_dir, jobs,
// cache_dir, save_* flags). semantic_config_json (experiment.hpp) is this
// minus those fields.
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

// Parses and validates a config object. Errors name the offending path, e.g.
// "config error at $.supervision.cardinality: expected integer >= 1".
ExperimentConfig parse_experiment_config(const nlohmann::json& j);

// Applies one "dotted.key=value" override onto a config JSON; the value parses
// as JSON when possible, else as a string.
void apply_override(nlohmann::json& j, const std::string& spec);

// Reads the file, applies overrides in order, parses.
ExperimentConfig load_experiment_config(const fs::path& path,
                                        const std::vector<std::string>& overrides = {});

} // namespace w2sg
