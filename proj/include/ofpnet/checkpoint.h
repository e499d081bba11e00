#pragma once

// Single-file checkpoint archive:
//
//   bytes 0..7   magic "OFPNETCK"
//   u32          format version (1)
//   u64          header length in bytes
//   header       UTF-8 JSON: {"config", "metadata", "tensors": [{name, group,
//                shape, offset, count}]}
//   payload      little-endian float32 arrays, concatenated in header order
//
// Groups are "param", "adam_m" and "adam_v". The JSON is written with sorted
// keys, so save -> load -> save reproduces the file byte for byte.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ofpnet/model.h"

namespace ofpnet {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> params;
  std::vector<NamedArray> adam_m;
  std::vector<NamedArray> adam_v;
};

Checkpoint capture_checkpoint(const Model<float>& model);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters into `model`. Throws ConfigError if the architecture or
// any parameter name/shape disagrees.
void apply_checkpoint(const Checkpoint& ck, Model<float>& model);

std::size_t stored_param_count(const Checkpoint& ck);

}  // namespace ofpnet
