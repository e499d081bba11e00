#include "ofpnet/training.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ofpnet/errors.h"
#include "ofpnet/evaluation.h"
#include "ofpnet/metrics.h"

namespace ofpnet::train {
namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("corrupt RNG state in checkpoint");
  return rng;
}

void clip_gradients(const std::vector<ag::Parameter<float>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (float g : p->grad.span()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const float s = static_cast<float>(max_norm / norm);
  for (auto* p : params) {
    for (float& g : p->grad.span()) g *= s;
  }
}

struct Batch {
  Tensor<float> lr;
  Tensor<float> gt;
  nlohmann::json provenance = nlohmann::json::array();
};

Batch make_batch(const std::vector<data::PatchPair>& pairs) {
  std::vector<LightField> lr, gt;
  Batch b;
  for (const auto& p : pairs) {
    lr.push_back(p.lr);
    gt.push_back(p.gt);
    b.provenance.push_back({{"scene", p.scene_id}, {"y0", p.y0}, {"x0", p.x0}});
  }
  b.lr = stack_tensor<float>(lr);
  b.gt = stack_tensor<float>(gt);
  return b;
}

void save_state(const fs::path& path, const Model<float>& model, const Adam& adam,
                const TrainConfig& config, const TrainState& state) {
  Checkpoint ck = capture_checkpoint(model);
  adam.export_state(ck);
  ck.metadata = {{"train_config", to_json(config)}, {"train_state", to_json(state)}};
  save_checkpoint(path, ck);
}

}  // namespace

std::string to_string(Phase p) { return p == Phase::kTrain ? "train" : "finetune"; }

Phase parse_phase(const std::string& s) {
  if (s == "train") return Phase::kTrain;
  if (s == "finetune") return Phase::kFinetune;
  throw ConfigError("unknown phase '" + s + "' (train, finetune)");
}

TrainConfig TrainConfig::defaults(Phase phase, int scale) {
  TrainConfig c;
  c.phase = phase;
  c.scale = scale;
  c.halve_every = phase == Phase::kTrain ? 2000 : 1000;
  c.total_epochs = phase == Phase::kTrain ? 8000 : 5000;
  if (scale == 2) {
    c.batch = 2;
    c.patch = 72;
  } else if (scale == 4) {
    c.batch = 4;
    c.patch = 64;
  } else {
    throw ConfigError("scale must be 2 or 4, got " + std::to_string(scale));
  }
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail("lr0 must be > 0");
  if (halve_every < 1) fail("halve_every must be >= 1");
  if (total_epochs < 1) fail("total_epochs must be >= 1");
  if (total_epochs % halve_every != 0) fail("total_epochs must be a multiple of halve_every");
  if (batch < 1) fail("batch must be >= 1");
  if (patch < 4 || patch % 4 != 0) fail("patch must be a positive multiple of 4");
  if (scale != 2 && scale != 4) fail("scale must be 2 or 4");
  if (iters_per_epoch < 1) fail("iters_per_epoch must be >= 1");
  if (val_every < 1) fail("val_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) fail("eps must be > 0");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"phase", to_string(c.phase)},
          {"lr0", c.lr0},
          {"halve_every", c.halve_every},
          {"total_epochs", c.total_epochs},
          {"batch", c.batch},
          {"patch", c.patch},
          {"scale", c.scale},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seed", c.seed},
          {"iters_per_epoch", c.iters_per_epoch},
          {"val_every", c.val_every},
          {"grad_clip", c.grad_clip}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.phase = parse_phase(j.at("phase").get<std::string>());
    c.lr0 = j.at("lr0").get<double>();
    c.halve_every = j.at("halve_every").get<int>();
    c.total_epochs = j.at("total_epochs").get<int>();
    c.batch = j.at("batch").get<int>();
    c.patch = j.at("patch").get<int>();
    c.scale = j.at("scale").get<int>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.iters_per_epoch = j.at("iters_per_epoch").get<int>();
    c.val_every = j.at("val_every").get<int>();
    c.grad_clip = j.at("grad_clip").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
}

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch > config.total_epochs) {
    throw RangeError("epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(config.total_epochs) + "]");
  }
  return std::ldexp(config.lr0, -(epoch / config.halve_every));
}

Adam::Adam(const std::vector<ag::Parameter<float>*>& params, double beta1, double beta2,
           double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  reset();
}

void Adam::reset() {
  m_.clear();
  v_.clear();
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.f);
    v_.emplace_back(p->size(), 0.f);
  }
  t_ = 0;
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    float* w = params_[i]->value.data();
    const float* g = params_[i]->grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t k = 0; k < m_[i].size(); ++k) {
      m[k] = b1 * m[k] + (1.f - b1) * g[k];
      v[k] = b2 * v[k] + (1.f - b2) * g[k] * g[k];
      if (lr != 0.0) w[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
    }
  }
}

void Adam::export_state(Checkpoint& ck) const {
  ck.adam_m.clear();
  ck.adam_v.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ck.adam_m.push_back({params_[i]->name, params_[i]->value.shape(), m_[i]});
    ck.adam_v.push_back({params_[i]->name, params_[i]->value.shape(), v_[i]});
  }
}

void Adam::import_state(const Checkpoint& ck, long long steps) {
  if (ck.adam_m.size() != params_.size() || ck.adam_v.size() != params_.size()) {
    throw ConfigError("checkpoint optimizer state does not match the parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (ck.adam_m[i].name != params_[i]->name || ck.adam_m[i].data.size() != m_[i].size() ||
        ck.adam_v[i].data.size() != v_[i].size()) {
      throw ConfigError("optimizer moment mismatch at " + params_[i]->name);
    }
    m_[i] = ck.adam_m[i].data;
    v_[i] = ck.adam_v[i].data;
  }
  t_ = steps;
}

nlohmann::json to_json(const TrainState& s) {
  return {{"epoch", s.epoch},
          {"global_step", s.global_step},
          {"rng_state", s.rng_state},
          {"best_val_psnr", s.best_val_psnr},
          {"adam_steps", s.adam_steps}};
}

TrainState train_state_from_json(const nlohmann::json& j) {
  try {
    TrainState s;
    s.epoch = j.at("epoch").get<int>();
    s.global_step = j.at("global_step").get<long long>();
    s.rng_state = j.at("rng_state").get<std::string>();
    s.best_val_psnr = j.at("best_val_psnr").get<double>();
    s.adam_steps = j.at("adam_steps").get<long long>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad training state in checkpoint: ") + e.what());
  }
}

TrainResult train(Model<float>& model, const data::SceneStore& train_store,
                  const data::SceneStore* val, const TrainConfig& config, const fs::path& out_dir,
                  const TrainOptions& options) {
  config.validate();
  if (train_store.entries().empty()) throw SplitError("training split is empty");
  fs::create_directories(out_dir);

  Adam adam(model.parameters(), config.beta1, config.beta2, config.eps);
  TrainState state;
  std::mt19937_64 rng(config.seed);
  if (!options.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(options.resume_from);
    apply_checkpoint(ck, model);
    if (!ck.metadata.contains("train_state") || !ck.metadata.contains("train_config")) {
      throw ConfigError("checkpoint " + options.resume_from.string() + " has no training state");
    }
    if (ck.metadata.at("train_config") != to_json(config)) {
      throw ConfigError("resume config differs from the checkpoint's training config");
    }
    state = train_state_from_json(ck.metadata.at("train_state"));
    adam.import_state(ck, state.adam_steps);
    rng = rng_from_string(state.rng_state);
  }

  const fs::path log_path = out_dir / "train_log.csv";
  const bool new_log = !fs::exists(log_path) || fs::file_size(log_path) == 0;
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot write " + log_path.string());
  if (new_log) log << "step,epoch,lr,train_l1,val_psnr\n";
  log.precision(9);

  TrainResult result;
  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_checkpoint = out_dir / "best.ckpt";
  result.best_val_psnr = state.best_val_psnr;
  const long long total = config.total_steps();
  const auto& params = model.parameters();

  while (state.global_step < total &&
         (options.max_steps == 0 || result.steps_run < options.max_steps)) {
    const int epoch = static_cast<int>(state.global_step / config.iters_per_epoch);
    const double lr = lr_at(epoch, config);
    const std::string rng_before = rng_to_string(rng);
    const Batch batch = make_batch(data::sample_batch(train_store, config.patch, config.batch, rng));

    ag::Tape<float> tape;
    auto pred = model.forward(tape.input(batch.lr));
    auto loss = ag::l1_loss<float>(pred, batch.gt);
    const double value = loss->value[0];
    if (!std::isfinite(value)) {
      const fs::path dump = out_dir / ("abort_step" + std::to_string(state.global_step) + ".json");
      const nlohmann::json diag = {{"step", state.global_step}, {"epoch", epoch},
                                   {"lr", lr},                   {"loss", std::to_string(value)},
                                   {"batch", batch.provenance}, {"rng_state", rng_before},
                                   {"train_config", to_json(config)}};
      std::ofstream out(dump);
      out << diag.dump(2) << '\n';
      throw AbortWithDiagnostics("non-finite training loss at step " +
                                     std::to_string(state.global_step),
                                 out ? dump.string() : std::string());
    }
    model.zero_grad();
    tape.backward(loss);
    if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
    adam.step(lr);

    ++state.global_step;
    ++result.steps_run;
    state.epoch = static_cast<int>(state.global_step / config.iters_per_epoch);
    state.adam_steps = adam.steps();
    if (result.steps_run == 1) result.initial_loss = value;
    result.final_loss = value;
    result.losses.push_back(value);

    std::string val_cell;
    const bool epoch_end = state.global_step % config.iters_per_epoch == 0;
    if (epoch_end && val && !val->entries().empty() &&
        (state.epoch % config.val_every == 0 || state.global_step == total)) {
      const double psnr = eval::mean_psnr(model, *val);
      std::ostringstream cell;
      cell.precision(9);
      cell << psnr;
      val_cell = cell.str();
      if (psnr > state.best_val_psnr) {
        state.best_val_psnr = psnr;
        state.rng_state = rng_to_string(rng);
        save_state(result.best_checkpoint, model, adam, config, state);
      }
    }
    result.best_val_psnr = state.best_val_psnr;
    log << state.global_step << ',' << epoch << ',' << lr << ',' << value << ',' << val_cell
        << '\n';
    if (epoch_end && options.checkpoint_every > 0 &&
        state.epoch % options.checkpoint_every == 0) {
      state.rng_state = rng_to_string(rng);
      save_state(result.last_checkpoint, model, adam, config, state);
    }
  }
  log.flush();
  state.rng_state = rng_to_string(rng);
  save_state(result.last_checkpoint, model, adam, config, state);
  if (!fs::exists(result.best_checkpoint)) result.best_checkpoint.clear();
  return result;
}

TrainResult finetune(Model<float>& model, const fs::path& checkpoint,
                     const data::SceneStore& train_store, const data::SceneStore* val,
                     const TrainConfig& config, const fs::path& out_dir) {
  if (config.phase != Phase::kFinetune) {
    throw ConfigError("finetune requires train.phase = finetune");
  }
  apply_checkpoint(load_checkpoint(checkpoint), model);
  return train(model, train_store, val, config, out_dir);
}

SmokeReport overfit_smoke(Model<float>& model, const LightField& lr, const LightField& gt,
                          int steps, double lr_rate, double beta1, double beta2) {
  if (steps < 1) throw ConfigError("overfit_smoke needs steps >= 1");
  if (!lr.same_geometry(gt)) throw SizeError("overfit_smoke: LR and GT patches differ in shape");
  const Tensor<float> x = to_tensor<float>(lr);
  const Tensor<float> y = to_tensor<float>(gt);
  Adam adam(model.parameters(), beta1, beta2, 1e-8);
  SmokeReport report;
  for (int s = 0; s < steps; ++s) {
    ag::Tape<float> tape;
    auto loss = ag::l1_loss<float>(model.forward(tape.input(x)), y);
    const double value = loss->value[0];
    if (!std::isfinite(value)) {
      throw AbortWithDiagnostics("non-finite loss at smoke step " + std::to_string(s), "");
    }
    report.losses.push_back(value);
    model.zero_grad();
    tape.backward(loss);
    adam.step(lr_rate);
  }
  LightField pred = from_tensor<float>(model.forward(x));
  report.final_loss = ag::l1_loss<float>(ag::constant<float>(to_tensor<float>(pred)), y)->value[0];
  pred.clamp();
  report.patch_psnr = metrics::psnr_y(pred, gt);
  return report;
}

}  // namespace ofpnet::train
