#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "ofpnet/checkpoint.h"
#include "ofpnet/datasets.h"
#include "ofpnet/model.h"

namespace ofpnet::train {

namespace fs = std::filesystem;

enum class Phase { kTrain, kFinetune };
std::string to_string(Phase p);
Phase parse_phase(const std::string& s);

struct TrainConfig {
  Phase phase = Phase::kTrain;
  double lr0 = 1e-4;
  int halve_every = 2000;
  int total_epochs = 8000;
  int batch = 2;
  int patch = 72;
  int scale = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  // Optimizer steps per epoch.
  int iters_per_epoch = 1;
  // Validate every this many epochs (and after the last one).
  int val_every = 10;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  // Phase- and scale-dependent defaults: 2x72 patches for x2, 4x64 for x4;
  // halving every 2000 (train) or 1000 (finetune) epochs.
  static TrainConfig defaults(Phase phase, int scale);
  void validate() const;
  long long total_steps() const {
    return static_cast<long long>(total_epochs) * iters_per_epoch;
  }
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// lr0 * 0.5^floor(epoch / halve_every). Throws RangeError outside
// [0, total_epochs].
double lr_at(int epoch, const TrainConfig& config);

class Adam {
 public:
  Adam(const std::vector<ag::Parameter<float>*>& params, double beta1, double beta2, double eps);

  // Uses each parameter's accumulated gradient. lr = 0 leaves the
  // parameters untouched.
  void step(double lr);
  void reset();
  long long steps() const { return t_; }

  void export_state(Checkpoint& ck) const;
  // Throws ConfigError if the stored moments do not match the parameters.
  void import_state(const Checkpoint& ck, long long steps);

 private:
  std::vector<ag::Parameter<float>*> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct TrainState {
  int epoch = 0;
  long long global_step = 0;
  std::string rng_state;
  double best_val_psnr = -1.0;
  long long adam_steps = 0;
};

nlohmann::json to_json(const TrainState& s);
TrainState train_state_from_json(const nlohmann::json& j);

struct TrainOptions {
  // Continue from a checkpoint written by an earlier run with the same config.
  fs::path resume_from;
  // Stop after this many steps of this invocation (0 = run to the end). The
  // last checkpoint is written when stopping.
  long long max_steps = 0;
  // Write the last checkpoint every this many epochs (0 = only at the end).
  int checkpoint_every = 0;
};

struct TrainResult {
  fs::path last_checkpoint;
  fs::path best_checkpoint;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  long long steps_run = 0;
  double best_val_psnr = -1.0;
  std::vector<double> losses;
};

// Optimizes `model` in place with L1 loss on patches drawn from `train`.
// `val` may be null. Writes train_log.csv, last.ckpt and best.ckpt into
// out_dir. A non-finite loss writes abort_step<N>.json and throws
// AbortWithDiagnostics.
TrainResult train(Model<float>& model, const data::SceneStore& train,
                  const data::SceneStore* val, const TrainConfig& config, const fs::path& out_dir,
                  const TrainOptions& options = {});

// Loads `checkpoint` into `model` (ConfigError on mismatch) and continues
// with fresh optimizer moments. Requires config.phase == finetune.
TrainResult finetune(Model<float>& model, const fs::path& checkpoint,
                     const data::SceneStore& train, const data::SceneStore* val,
                     const TrainConfig& config, const fs::path& out_dir);

struct SmokeReport {
  double final_loss = 0.0;
  double patch_psnr = 0.0;
  std::vector<double> losses;
};

// Fits one fixed (lr, gt) patch pair with Adam at a constant learning rate.
SmokeReport overfit_smoke(Model<float>& model, const LightField& lr, const LightField& gt,
                          int steps, double lr_rate, double beta1 = 0.9, double beta2 = 0.999);

}  // namespace ofpnet::train
