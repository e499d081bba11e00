#include "ofpnet/model.h"

#include <cmath>
#include <random>
#include <set>

#include "ofpnet/errors.h"

namespace ofpnet {

std::string to_string(BranchMode mode) {
  switch (mode) {
    case BranchMode::kFull: return "full";
    case BranchMode::kMidHigh: return "mid_high";
    case BranchMode::kHighOnly: return "high_only";
  }
  return "?";
}

BranchMode parse_branch_mode(const std::string& s) {
  if (s == "full") return BranchMode::kFull;
  if (s == "mid_high") return BranchMode::kMidHigh;
  if (s == "high_only") return BranchMode::kHighOnly;
  throw ConfigError("unknown branch mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (channels <= 0) throw ConfigError("model.channels must be > 0");
  if (projection_depth < 1) throw ConfigError("model.projection_depth must be >= 1");
  if (angular_u < 1 || angular_v < 1) throw ConfigError("model angular size must be >= 1");
  if (fusion_blocks < 0) throw ConfigError("model.fusion_blocks must be >= 0");
  if (fp_replacement_blocks < 0 || padding_blocks < 0) {
    throw ConfigError("block counts must be >= 0");
  }
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
  return channels == o.channels && projection_depth == o.projection_depth &&
         angular_u == o.angular_u && angular_v == o.angular_v &&
         fusion_blocks == o.fusion_blocks && branch_mode == o.branch_mode &&
         interaction == o.interaction && use_fp == o.use_fp &&
         share_fp_instances == o.share_fp_instances &&
         replacement_blocks() == o.replacement_blocks() && padding_blocks == o.padding_blocks;
}

int ModelConfig::active_branches() const {
  switch (branch_mode) {
    case BranchMode::kFull: return 3;
    case BranchMode::kMidHigh: return 2;
    case BranchMode::kHighOnly: return 1;
  }
  return 0;
}

int ModelConfig::replacement_blocks() const {
  if (use_fp) return 0;
  if (fp_replacement_blocks > 0) return fp_replacement_blocks;
  const std::size_t fp = nn::FrequencyProjection<float>::count(channels, projection_depth,
                                                              fusion_blocks);
  const std::size_t block = nn::SpatialAngularBlock<float>::count(channels);
  return std::max<int>(1, static_cast<int>(fp / block));
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"projection_depth", c.projection_depth},
          {"angular_u", c.angular_u},
          {"angular_v", c.angular_v},
          {"fusion_blocks", c.fusion_blocks},
          {"branch_mode", to_string(c.branch_mode)},
          {"interaction", c.interaction},
          {"use_fp", c.use_fp},
          {"share_fp_instances", c.share_fp_instances},
          {"fp_replacement_blocks", c.fp_replacement_blocks},
          {"padding_blocks", c.padding_blocks},
          {"variant", c.variant}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.channels = j.at("channels").get<int>();
    c.projection_depth = j.at("projection_depth").get<int>();
    c.angular_u = j.at("angular_u").get<int>();
    c.angular_v = j.at("angular_v").get<int>();
    c.fusion_blocks = j.at("fusion_blocks").get<int>();
    c.branch_mode = parse_branch_mode(j.at("branch_mode").get<std::string>());
    c.interaction = j.at("interaction").get<bool>();
    c.use_fp = j.at("use_fp").get<bool>();
    c.share_fp_instances = j.at("share_fp_instances").get<bool>();
    c.fp_replacement_blocks = j.at("fp_replacement_blocks").get<int>();
    c.padding_blocks = j.at("padding_blocks").get<int>();
    c.variant = j.value("variant", std::string("proj:full"));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
}

std::size_t count_params(const ModelConfig& c) {
  c.validate();
  const int ch = c.channels;
  const std::size_t block = nn::SpatialAngularBlock<float>::count(ch);
  const std::size_t enhancer =
      c.use_fp ? nn::FrequencyProjection<float>::count(ch, c.projection_depth, c.fusion_blocks)
               : c.replacement_blocks() * block;
  const std::size_t reduce = nn::Conv2d<float>::count(2 * ch, ch, 1);

  std::size_t total = nn::Conv2d<float>::count(1, ch, 3) * 2;  // full- and half-scale convs
  std::size_t slots = 0;
  std::size_t reducers = 0;
  switch (c.branch_mode) {
    case BranchMode::kFull:
      total += nn::Conv2d<float>::count(ch, ch, 3);
      slots = 6;
      reducers = c.interaction ? 2 : 0;
      break;
    case BranchMode::kMidHigh:
      slots = 5;
      reducers = c.interaction ? 1 : 0;
      break;
    case BranchMode::kHighOnly:
      slots = 3;
      break;
  }
  // Shared instances collapse to one per projection level.
  const std::size_t unique = c.share_fp_instances ? 3 : slots;
  total += unique * enhancer + reducers * reduce;
  total += c.padding_blocks * block;
  total += nn::Conv2d<float>::count(c.active_branches() * ch, ch, 1);
  total += c.fusion_blocks * block;
  total += nn::Conv2d<float>::count(ch, 1, 3);
  return total;
}

ModelConfig make_ablation(const ModelConfig& base, const std::string& variant) {
  ModelConfig full = base;
  full.branch_mode = BranchMode::kFull;
  full.interaction = true;
  full.use_fp = true;
  full.fp_replacement_blocks = 0;
  full.padding_blocks = 0;
  full.variant = "proj:full";

  ModelConfig c = full;
  c.variant = variant;
  if (variant == "freq:h") {
    c.branch_mode = BranchMode::kHighOnly;
  } else if (variant == "freq:mh") {
    c.branch_mode = BranchMode::kMidHigh;
  } else if (variant == "freq:lmh" || variant == "proj:full") {
  } else if (variant == "proj:none") {
    c.interaction = false;
    c.use_fp = false;
  } else if (variant == "proj:interact") {
    c.use_fp = false;
  } else if (variant == "proj:fp") {
    c.interaction = false;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  if (!c.use_fp) c.fp_replacement_blocks = c.replacement_blocks();

  const std::size_t target = count_params(full);
  const std::size_t current = count_params(c);
  if (current < target) {
    const double block = static_cast<double>(nn::SpatialAngularBlock<float>::count(c.channels));
    c.padding_blocks = static_cast<int>(std::lround((target - current) / block));
  }
  return c;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      conv_full_(1, config.channels, 3, 1, 1),
      conv_half_(1, config.channels, 3, 2, 1),
      blend_reduce_(config.active_branches() * config.channels, config.channels, 1, 1, 0),
      blend_(config.channels, config.fusion_blocks),
      head_(config.channels, 1, 3, 1, 1) {
  config_.validate();
  const int ch = config_.channels;
  if (config_.branch_mode == BranchMode::kFull) {
    conv_quarter_ = std::make_unique<nn::Conv2d<T>>(ch, ch, 3, 2, 1);
  }

  std::vector<std::string> slots;
  if (config_.branch_mode == BranchMode::kFull) slots.push_back("low1");
  if (config_.branch_mode != BranchMode::kHighOnly) {
    slots.insert(slots.end(), {"mid1", "mid2"});
  }
  slots.insert(slots.end(), {"high1", "high2", "high3"});
  std::shared_ptr<nn::Module<T>> shared[3];
  for (const std::string& slot : slots) {
    const int level = slot.back() - '1';
    if (config_.share_fp_instances) {
      if (!shared[level]) shared[level] = make_enhancer();
      enhancers_.emplace_back(slot, shared[level]);
    } else {
      enhancers_.emplace_back(slot, make_enhancer());
    }
  }

  if (config_.interaction) {
    if (config_.branch_mode == BranchMode::kFull) {
      mid_reduce_ = std::make_unique<nn::Conv2d<T>>(2 * ch, ch, 1, 1, 0);
    }
    if (config_.branch_mode != BranchMode::kHighOnly) {
      high_reduce_ = std::make_unique<nn::Conv2d<T>>(2 * ch, ch, 1, 1, 0);
    }
  }
  if (config_.padding_blocks > 0) {
    padding_ = std::make_unique<nn::ResidualStack<T>>(ch, config_.padding_blocks);
  }
  register_parameters();
  init_parameters(seed);
}

template <typename T>
std::shared_ptr<nn::Module<T>> Model<T>::make_enhancer() {
  if (config_.use_fp) {
    return std::make_shared<nn::FrequencyProjection<T>>(
        config_.channels, config_.projection_depth, config_.fusion_blocks);
  }
  return std::make_shared<nn::ResidualStack<T>>(config_.channels, config_.replacement_blocks());
}

template <typename T>
void Model<T>::register_parameters() {
  nn::ParamRefs<T> all;
  conv_full_.collect("decompose.full", all);
  conv_half_.collect("decompose.half", all);
  if (conv_quarter_) conv_quarter_->collect("decompose.quarter", all);
  std::set<const nn::Module<T>*> seen;
  for (auto& [slot, module] : enhancers_) {
    if (!seen.insert(module.get()).second) continue;
    const std::string name =
        config_.share_fp_instances ? "shared" + std::string(1, slot.back()) : slot;
    module->collect("enhance." + name, all);
  }
  if (mid_reduce_) mid_reduce_->collect("interact.mid_reduce", all);
  if (high_reduce_) high_reduce_->collect("interact.high_reduce", all);
  if (padding_) padding_->collect("padding", all);
  blend_reduce_.collect("reconstruct.reduce", all);
  blend_.collect("reconstruct.blend", all);
  head_.collect("reconstruct.head", all);
  params_ = std::move(all);
}

template <typename T>
void Model<T>::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (ag::Parameter<T>* p : params_) {
    const std::string& n = p->name;
    const bool is_bias = n.size() >= 5 && n.compare(n.size() - 5, 5, ".bias") == 0;
    if (is_bias || n.rfind("reconstruct.head.", 0) == 0) {
      p->value.fill(T(0));
    } else {
      const Shape& s = p->value.shape();
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.channels * s.height * s.width));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(dist(rng));
    }
    p->zero_grad();
  }
}

template <typename T>
ag::Parameter<T>* Model<T>::find(const std::string& name) const {
  for (ag::Parameter<T>* p : params_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
std::size_t Model<T>::num_params() const {
  std::size_t n = 0;
  for (const ag::Parameter<T>* p : params_) n += p->size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (ag::Parameter<T>* p : params_) p->zero_grad();
}

template <typename T>
nn::Module<T>* Model<T>::enhancer(const std::string& slot) const {
  for (const auto& [name, module] : enhancers_) {
    if (name == slot) return module.get();
  }
  return nullptr;
}

template <typename T>
FrequencyTriple<T> Model<T>::decompose(const Var& lf) {
  const Shape& s = lf->value.shape();
  if (s.channels != 1) throw SizeError("decompose expects a single-channel field: " + s.str());
  if (s.height % 4 != 0 || s.width % 4 != 0) {
    throw SizeError("decompose: H and W must be divisible by 4, got " + s.str());
  }
  FrequencyTriple<T> t;
  Var full = conv_full_.forward(lf);
  Var half = conv_half_.forward(lf);
  t.f_high = ag::sub<T>(full, ag::upsample<T>(half, 2));
  if (config_.branch_mode == BranchMode::kFull) {
    t.f_low = conv_quarter_->forward(half);
    t.f_mid = ag::sub<T>(half, ag::upsample<T>(t.f_low, 2));
  } else if (config_.branch_mode == BranchMode::kMidHigh) {
    t.f_mid = half;
  }
  return t;
}

template <typename T>
FrequencyTriple<T> Model<T>::interact(const FrequencyTriple<T>& in) {
  if (in.enhanced) throw StateError("frequency triple is already enhanced");
  auto slot = [this](const char* name) { return enhancer(name); };
  FrequencyTriple<T> t = in;
  if (padding_) {
    Var& lowest = t.f_low ? t.f_low : (t.f_mid ? t.f_mid : t.f_high);
    lowest = padding_->forward(lowest);
  }
  FrequencyTriple<T> out;
  out.enhanced = true;
  if (t.f_low) out.f_low = slot("low1")->forward(t.f_low);
  if (t.f_mid) {
    Var m = slot("mid1")->forward(t.f_mid);
    if (config_.interaction && out.f_low) {
      m = mid_reduce_->forward(ag::concat_channels<T>({m, ag::upsample<T>(out.f_low, 2)}));
    }
    out.f_mid = slot("mid2")->forward(m);
  }
  Var h = slot("high2")->forward(slot("high1")->forward(t.f_high));
  if (config_.interaction && out.f_mid) {
    h = high_reduce_->forward(ag::concat_channels<T>({h, ag::upsample<T>(out.f_mid, 2)}));
  }
  out.f_high = slot("high3")->forward(h);
  return out;
}

template <typename T>
typename Model<T>::Var Model<T>::reconstruct(const FrequencyTriple<T>& t, const Var& lr) {
  if (!t.enhanced) throw StateError("reconstruct needs an enhanced frequency triple");
  std::vector<Var> parts{t.f_high};
  if (t.f_mid) parts.push_back(ag::upsample<T>(t.f_mid, 2));
  if (t.f_low) parts.push_back(ag::upsample<T>(t.f_low, 4));
  Var x = blend_reduce_.forward(parts.size() == 1 ? parts[0] : ag::concat_channels<T>(parts));
  x = ag::add<T>(x, blend_.forward(x));
  Var residual = head_.forward(x);
  if (!(residual->value.shape() == lr->value.shape())) {
    throw SizeError("reconstruct: residual " + residual->value.shape().str() + " vs input " +
                    lr->value.shape().str());
  }
  return ag::add<T>(lr, residual);
}

template <typename T>
typename Model<T>::Var Model<T>::forward(const Var& lr) {
  return reconstruct(interact(decompose(lr)), lr);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& lr) {
  return forward(ag::constant<T>(lr))->value;
}

template class Model<float>;
template class Model<double>;

LightField forward(Model<float>& model, const LightField& lr_y) {
  Tensor<float> out = model.forward(to_tensor<float>(lr_y));
  return from_tensor<float>(out, 0, ScaleTag::kSR);
}

}  // namespace ofpnet
