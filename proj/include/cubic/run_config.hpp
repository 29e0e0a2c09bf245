#pragma once

// Command-line run configuration: every tunable of the tools in one schema,
// filled from a preset, then a key=value file, then command-line overrides.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cubic/dataset.hpp"
#include "cubic/geometry.hpp"
#include "cubic/network.hpp"
#include "cubic/trainer.hpp"

namespace cubic {

struct RunConfig {
  std::string preset = "desk";
  GeometryConfig geometry;
  BackboneConfig backbone;
  int64_t head_hidden = 64;
  TrainConfig pretrain;
  FinetuneConfig finetune;
  SyntheticSpec synthetic;

  std::filesystem::path data;        // dataset directory
  std::filesystem::path out;         // output directory
  std::filesystem::path checkpoint;  // input checkpoint
  std::filesystem::path resume;      // pretraining checkpoint to continue
  std::filesystem::path ensemble;    // second action checkpoint averaged in by eval
  std::string split = "test";

  int gradcheck_seeds = 20;
  int gradcheck_samples = 60;
  int export_scale = 8;

  // "desk" (56x56x32 clips, tiny backbone) or "paper" (224x224x128 clips,
  // resnet18). Throws ConfigError for other names.
  static RunConfig from_preset(const std::string& name);

  // Applies one key. Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Applies all keys; "backbone" goes first so that explicit channel
  // overrides survive it.
  void apply(const KeyValues& values);

  // Cross-field checks. Throws ConfigError.
  void validate() const;

  // Every schema key with its current value.
  KeyValues to_key_values() const;
};

// Schema keys, sorted.
std::vector<std::string> run_config_keys();

// Preset from overrides, else file, else "desk"; then file values, then
// overrides. The result is validated.
RunConfig resolve_run_config(const KeyValues& file, const KeyValues& overrides);

// "key=value" -> (key, value). Throws ConfigError.
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace cubic
