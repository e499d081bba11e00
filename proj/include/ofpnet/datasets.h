#pragma once

// Dataset layout (one directory per scene, identical image size everywhere):
//
//   <root>/<scene_id>/gt/view_{u}_{v}.png
//   <root>/<scene_id>/lr_x2/view_{u}_{v}.png
//   <root>/<scene_id>/lr_x4/view_{u}_{v}.png
//
// plus index.json (written by index_dataset callers) and splits.json.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ofpnet/light_field.h"

namespace ofpnet::data {

namespace fs = std::filesystem;

std::string scale_dir(ScaleTag tag);
ScaleTag lr_tag(int scale);

struct SceneRecord {
  std::string scene_id;
  fs::path root;
  std::set<ScaleTag> available_scales;
  int height = 0;
  int width = 0;
  int ang_u = 5;
  int ang_v = 5;
};

struct DatasetIndex {
  std::vector<SceneRecord> scenes;
  // Scene directories without a complete gt/ view set, with the reason.
  std::vector<std::pair<std::string, std::string>> incomplete;
};

// Throws EmptyDataset when `root` holds no scene directories at all.
DatasetIndex index_dataset(const fs::path& root, int ang_u = 5, int ang_v = 5);
nlohmann::json to_json(const DatasetIndex& index);

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

// Counts for n scenes at the 63/17/15 train/val/test proportions.
SplitCounts default_split_counts(int n);

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

enum class Split { kTrain, kVal, kTest };
Split parse_split(const std::string& s);
std::string to_string(Split s);
const std::vector<std::string>& scenes_of(const SplitManifest& m, Split s);

// Deterministic shuffle of the scene ids by `seed`, then consecutive
// partition. Throws SplitError if the counts exceed the number of records.
SplitManifest split_scenes(const std::vector<SceneRecord>& records, SplitCounts counts,
                           std::uint64_t seed);
void save_manifest(const SplitManifest& m, const fs::path& path);
SplitManifest load_manifest(const fs::path& path);

enum class DegradationKind { kBicubicDownUp, kGaussianBlur, kGaussianNoise, kJpegLike };

struct DegradationStep {
  DegradationKind kind;
  // Resampling factor (0 = the pair's scale), blur/noise sigma, or smoothing
  // strength, depending on kind.
  double value = 0.0;
};

// Every step preserves spatial size.
struct DegradationChain {
  std::vector<DegradationStep> steps;
  std::uint64_t seed = 0;
  // Relative per-view perturbation of blur/noise/smoothing parameters.
  double view_jitter = 0.0;

  // Comma-separated: "bicubic[:factor]", "blur:sigma", "noise:sigma",
  // "jpeg:strength". Empty string = no steps.
  static DegradationChain parse(const std::string& spec, std::uint64_t seed = 0);
  std::string str() const;
};

// Returns (lr, hr) with lr at hr's resolution. scale 1 is accepted and makes
// the bicubic step an identity.
std::pair<LightField, LightField> generate_synthetic_pair(const LightField& hr, int scale,
                                                          const DegradationChain& chain);

void write_scene(const fs::path& root, const std::string& scene_id, const LightField& gt,
                 const std::map<int, LightField>& lr_by_scale);

struct PatchPair {
  LightField lr;
  LightField gt;
  std::string scene_id;
  int y0 = 0;
  int x0 = 0;
};

// Y-channel LR/GT fields of one split at one scale, loaded up front.
class SceneStore {
 public:
  SceneStore(const fs::path& root, const SplitManifest& manifest, Split split, int scale,
             int ang_u = 5, int ang_v = 5);
  struct Entry {
    std::string scene_id;
    LightField lr;
    LightField gt;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  int scale() const { return scale_; }

 private:
  std::vector<Entry> entries_;
  int scale_;
};

// Uniformly random scene and window per sample; LR and GT cut at the same
// window. Consumes `rng` deterministically.
std::vector<PatchPair> sample_batch(const SceneStore& store, int patch, int batch,
                                    std::mt19937_64& rng);

}  // namespace ofpnet::data
