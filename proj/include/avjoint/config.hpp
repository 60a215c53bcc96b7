// SPDX-License-Identifier: Apache-2.0
//
// One flat `section.key = value` file drives every module. Unknown keys are
// rejected; every key has a default.
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "avjoint/data.hpp"
#include "avjoint/dsp.hpp"
#include "avjoint/model.hpp"
#include "avjoint/train.hpp"

namespace avjoint {

struct RunConfig {
  dsp::FeatureConfig features;
  model::ModelConfig model;
  train::TrainConfig train;
  data::LoadOptions data;
  data::SyntheticSpec synth;
  double val_fraction = 0.1;

  /// Keys assigned explicitly (file or override), in assignment order.
  std::set<std::string> explicit_keys;

  /// Derived fields: AE input width follows the feature kind.
  void finalize();
  void validate() const;
};

/// Every recognised key, in canonical order.
const std::vector<std::string>& config_keys();

void config_set(RunConfig& cfg, const std::string& key, const std::string& value);
std::string config_get(const RunConfig& cfg, const std::string& key);

/// Applies `key = value` lines; `#` starts a comment. Errors name the line.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Fully resolved `key = value` listing of every key.
std::string dump_config(const RunConfig& cfg);

}  // namespace avjoint
