#pragma once

// Flat run configuration. File syntax, one entry per line:
//
//   # comment
//   model.channels = 8
//   train.lr0 = 1e-3
//   data.chain = bicubic,blur:0.5
//
// Overrides use the same keys ("train.lr0=5e-4") and are applied after the
// file, last one wins. Unknown keys and malformed values raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ofpnet/model.h"
#include "ofpnet/training.h"

namespace ofpnet::config {

struct DataConfig {
  std::string root;
  std::string chain = "bicubic";
  double jitter = 0.0;
  std::uint64_t degrade_seed = 0;
  // Negative counts fall back to the default 63/17/15 proportions.
  int split_train = -1;
  int split_val = -1;
  int split_test = -1;
  std::uint64_t split_seed = 0;
};

struct EvalConfig {
  std::string split = "test";
  bool dump_sr = false;
};

struct AblateConfig {
  // 0 keeps the train.* value.
  int total_epochs = 0;
  int iters_per_epoch = 0;
  int halve_every = 0;
};

struct RunConfig {
  ModelConfig model;
  train::TrainConfig train;
  int checkpoint_every = 0;
  DataConfig data;
  EvalConfig eval;
  AblateConfig ablate;
};

// Applies a single key=value pair.
void apply(RunConfig& config, const std::string& key, const std::string& value);
// Parses "key=value" (whitespace around both sides is trimmed).
std::pair<std::string, std::string> split_override(const std::string& text);

RunConfig parse(const std::string& text, const std::string& origin = "<string>");
RunConfig load(const std::filesystem::path& path);
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

// Every key with its resolved value, in sorted order.
std::map<std::string, std::string> flatten(const RunConfig& config);
std::string render(const RunConfig& config);

}  // namespace ofpnet::config
