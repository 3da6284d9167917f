// SPDX-License-Identifier: Apache-2.0
//
// Run configuration file: a flat JSON object mixing encoder and training keys.
#pragma once

#include <filesystem>
#include <string>

#include "geomgcl/geommpnn.hpp"
#include "geomgcl/trainer.hpp"

namespace geomgcl {

struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Unknown keys and wrongly typed values are errors naming the key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key with its effective value.
std::string run_config_json(const RunConfig& config, int indent = 2);

}  // namespace geomgcl
