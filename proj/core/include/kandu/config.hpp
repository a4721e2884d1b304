#pragma once

// Run configuration: flat `key = value` text with `#` comments. The same key
// table backs the config file parser and the command-line overrides.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "kandu/data.hpp"
#include "kandu/model.hpp"
#include "kandu/train.hpp"

namespace kandu {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  std::string train_manifest;
  std::string val_manifest;
  std::string test_manifest;
  std::size_t image_size = 256;  // manifest images are resized to this square extent

  bool synth = false;  // train/eval on generated data instead of manifests
  std::size_t synth_count = 32;
  std::size_t synth_size = 64;

  std::string output_dir = "runs/kandu";
  std::string checkpoint;  // eval/predict input
  std::string resume;      // train: continue from this checkpoint
  Split eval_split = Split::test;
  std::string input;   // predict: image path
  std::string output;  // predict: mask path

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Every recognised key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Unknown keys and malformed values throw
/// std::invalid_argument naming the key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses config text on top of `base`. Errors name the source, line and key.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>",
                       RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key with its current value, one `key = value` line each; parsing
/// the result reproduces `cfg`.
std::string format_config(const RunConfig& cfg);

}  // namespace kandu
