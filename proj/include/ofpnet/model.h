#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "ofpnet/layers.h"
#include "ofpnet/light_field.h"

namespace ofpnet {

enum class BranchMode { kFull, kMidHigh, kHighOnly };

std::string to_string(BranchMode mode);
BranchMode parse_branch_mode(const std::string& s);

struct ModelConfig {
  int channels = 32;
  // Up/down projection pairs per frequency projection.
  int projection_depth = 2;
  int angular_u = 5;
  int angular_v = 5;
  // Spatial-angular residual blocks inside every scale-up / scale-down block
  // and inside the feature blending module.
  int fusion_blocks = 2;
  BranchMode branch_mode = BranchMode::kFull;
  bool interaction = true;
  bool use_fp = true;
  bool share_fp_instances = false;
  // Residual blocks standing in for each frequency projection when use_fp is
  // false; 0 picks the parameter-matched count.
  int fp_replacement_blocks = 0;
  // Extra residual blocks on the lowest-frequency active branch.
  int padding_blocks = 0;
  // Metadata only; not part of the architecture.
  std::string variant = "proj:full";

  void validate() const;
  // Architecture equality (ignores `variant`).
  bool same_architecture(const ModelConfig& other) const;
  int active_branches() const;
  int replacement_blocks() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Exact learnable scalar count, computed in closed form from the config.
std::size_t count_params(const ModelConfig& config);

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> kVariants = {
      "freq:h", "freq:mh", "freq:lmh", "proj:none", "proj:interact", "proj:fp", "proj:full"};
  return kVariants;
}

// Config for one ablation row, with residual blocks added so that the
// parameter count stays close to the full model's.
ModelConfig make_ablation(const ModelConfig& base, const std::string& variant);

// Feature maps at scales 1, 1/2 and 1/4. Absent branches are null.
template <typename T>
struct FrequencyTriple {
  ag::Var<T> f_high;
  ag::Var<T> f_mid;
  ag::Var<T> f_low;
  bool enhanced = false;
};

template <typename T>
class Model {
 public:
  using Var = ag::Var<T>;

  // Parameters are initialised from `seed` (see init_parameters).
  explicit Model(const ModelConfig& config, std::uint64_t seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  // Input: single-channel light-field tensor, H and W divisible by 4.
  FrequencyTriple<T> decompose(const Var& lf);
  FrequencyTriple<T> interact(const FrequencyTriple<T>& triple);
  Var reconstruct(const FrequencyTriple<T>& triple, const Var& lr);
  Var forward(const Var& lr);
  Tensor<T> forward(const Tensor<T>& lr);

  // Kaiming-uniform fan-in weights (bound 1/sqrt(fan_in)), zero biases,
  // zero output head.
  void init_parameters(std::uint64_t seed);

  // Unique parameters in a stable order with hierarchical names.
  const std::vector<ag::Parameter<T>*>& parameters() const { return params_; }
  ag::Parameter<T>* find(const std::string& name) const;
  std::size_t num_params() const;
  void zero_grad();

  nn::Conv2d<T>& conv_full() { return conv_full_; }
  nn::Conv2d<T>& conv_half() { return conv_half_; }
  nn::Conv2d<T>* conv_quarter() { return conv_quarter_.get(); }
  nn::Conv2d<T>& head() { return head_; }
  nn::Module<T>* enhancer(const std::string& slot) const;
  nn::Conv2d<T>* mid_reduce() { return mid_reduce_.get(); }
  nn::Conv2d<T>* high_reduce() { return high_reduce_.get(); }

 private:
  std::shared_ptr<nn::Module<T>> make_enhancer();
  void register_parameters();

  ModelConfig config_;
  nn::Conv2d<T> conv_full_;
  nn::Conv2d<T> conv_half_;
  std::unique_ptr<nn::Conv2d<T>> conv_quarter_;
  // Slots: low1, mid1, mid2, high1, high2, high3. Shared instances alias.
  std::vector<std::pair<std::string, std::shared_ptr<nn::Module<T>>>> enhancers_;
  std::unique_ptr<nn::Conv2d<T>> mid_reduce_;
  std::unique_ptr<nn::Conv2d<T>> high_reduce_;
  std::unique_ptr<nn::ResidualStack<T>> padding_;
  nn::Conv2d<T> blend_reduce_;
  nn::ResidualStack<T> blend_;
  nn::Conv2d<T> head_;
  std::vector<ag::Parameter<T>*> params_;
};

extern template class Model<float>;
extern template class Model<double>;

// LightField convenience: Y field in, Y field (tagged SR) out.
LightField forward(Model<float>& model, const LightField& lr_y);

}  // namespace ofpnet
