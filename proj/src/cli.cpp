#include "ofpnet/cli.h"

#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "ofpnet/checkpoint.h"
#include "ofpnet/config.h"
#include "ofpnet/datasets.h"
#include "ofpnet/errors.h"
#include "ofpnet/evaluation.h"
#include "ofpnet/fingerprint.h"
#include "ofpnet/synthetic.h"
#include "ofpnet/training.h"

namespace ofpnet::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file (dotted key = value lines)");
  cmd->add_option("--set", c.overrides, "Override a config key: --set train.lr0=1e-3");
  cmd->add_option("--seed", c.seed, "Seed for initialisation and sampling");
  cmd->add_option("--out", c.out, "Output directory (default: $OFPNET_OUT)");
}

fs::path resolve_out(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("OFPNET_OUT"); env && *env) return env;
  throw UsageError("no output directory: pass --out or set OFPNET_OUT");
}

config::RunConfig resolve_config(const Common& c) {
  config::RunConfig cfg = c.config_path.empty() ? config::RunConfig{} : config::load(c.config_path);
  config::apply_overrides(cfg, c.overrides);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.model.validate();
  return cfg;
}

fs::path resolve_data(const std::string& flag, const config::RunConfig& cfg) {
  const std::string root = flag.empty() ? cfg.data.root : flag;
  if (root.empty()) throw UsageError("no dataset: pass --data or set data.root");
  return root;
}

data::SplitCounts split_counts(const config::DataConfig& d, int n) {
  data::SplitCounts c = data::default_split_counts(n);
  if (d.split_train >= 0) c.train = d.split_train;
  if (d.split_val >= 0) c.val = d.split_val;
  if (d.split_test >= 0) c.test = d.split_test;
  return c;
}

// Reads <root>/splits.json, creating it (and index.json) on first use.
data::SplitManifest ensure_manifest(const fs::path& root, const config::RunConfig& cfg) {
  const fs::path path = root / "splits.json";
  if (fs::exists(path)) return data::load_manifest(path);
  const data::DatasetIndex index =
      data::index_dataset(root, cfg.model.angular_u, cfg.model.angular_v);
  std::ofstream(root / "index.json") << data::to_json(index).dump(2) << '\n';
  for (const auto& [id, why] : index.incomplete) {
    std::cerr << "ofpnet: warning: scene " << id << " incomplete: " << why << '\n';
  }
  const data::SplitManifest m = data::split_scenes(
      index.scenes, split_counts(cfg.data, static_cast<int>(index.scenes.size())),
      cfg.data.split_seed);
  data::save_manifest(m, path);
  return m;
}

void write_run_manifest(const fs::path& out, const std::string& command,
                        const std::vector<std::string>& argv, const config::RunConfig& cfg,
                        const Common& common, const std::vector<fs::path>& artifacts) {
  nlohmann::json arts = nlohmann::json::array();
  for (const fs::path& p : artifacts) {
    if (!fs::exists(p)) continue;
    arts.push_back({{"path", fs::relative(p, out).generic_string()},
                    {"bytes", fs::file_size(p)},
                    {"fnv1a64", file_fingerprint(p)}});
  }
  const nlohmann::json j = {{"command", command},
                            {"argv", argv},
                            {"config", config::flatten(cfg)},
                            {"config_file", common.config_path},
                            {"overrides", common.overrides},
                            {"seed", cfg.train.seed},
                            {"artifacts", arts}};
  fs::create_directories(out);
  std::ofstream(out / "run_manifest.json") << j.dump(2) << '\n';
}

std::string label_file(const std::string& label) {
  std::string s = label;
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

int cmd_degrade(const Common& common, const std::string& in, int synthetic, int size,
                std::vector<int> scales, const std::string& chain_flag,
                const std::vector<std::string>& argv) {
  config::RunConfig cfg = resolve_config(common);
  const fs::path out = resolve_out(common);
  if (in.empty() == (synthetic <= 0)) {
    throw UsageError("degrade needs exactly one of --in or --synthetic");
  }
  if (scales.empty()) scales = {2, 4};
  for (int s : scales) data::lr_tag(s);
  const std::string chain_spec = chain_flag.empty() ? cfg.data.chain : chain_flag;
  cfg.data.chain = chain_spec;
  const std::uint64_t base_seed = common.seed ? *common.seed : cfg.data.degrade_seed;
  const int U = cfg.model.angular_u, V = cfg.model.angular_v;

  std::vector<std::pair<std::string, LightField>> scenes;
  if (!in.empty()) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_directory()) dirs.push_back(e.path());
    }
    if (dirs.empty()) throw EmptyDataset("no scene directories under " + in);
    std::sort(dirs.begin(), dirs.end());
    for (const fs::path& d : dirs) {
      const fs::path views = fs::is_directory(d / "gt") ? d / "gt" : d;
      scenes.emplace_back(d.filename().string(), load_lightfield(views, Colorspace::kRGB, U, V));
    }
  } else {
    synth::SceneOptions o;
    o.ang_u = U;
    o.ang_v = V;
    o.height = o.width = size;
    for (int i = 0; i < synthetic; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%03d", i);
      scenes.emplace_back(name, synth::render_scene(o, base_seed * 7919 + i));
    }
  }

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& [id, hr] = scenes[i];
    std::map<int, LightField> lrs;
    for (int s : scales) {
      data::DegradationChain chain =
          data::DegradationChain::parse(chain_spec, fnv1a64(id, base_seed + s));
      chain.view_jitter = cfg.data.jitter;
      lrs.emplace(s, data::generate_synthetic_pair(hr, s, chain).first);
    }
    data::write_scene(out, id, hr, lrs);
  }
  const data::SplitManifest m = ensure_manifest(out, cfg);
  std::cout << "wrote " << scenes.size() << " scenes to " << out.string() << " (train "
            << m.train.size() << ", val " << m.val.size() << ", test " << m.test.size() << ")\n";
  write_run_manifest(out, "degrade", argv, cfg, common, {out / "index.json", out / "splits.json"});
  return kOk;
}

int cmd_train(const Common& common, const std::string& data_flag, const std::string& resume,
              const std::string& checkpoint, bool finetune, const std::vector<std::string>& argv) {
  config::RunConfig cfg = resolve_config(common);
  const fs::path out = resolve_out(common);
  const fs::path root = resolve_data(data_flag, cfg);
  if (finetune && cfg.train.phase != train::Phase::kFinetune) {
    throw ConfigError("finetune requires train.phase = finetune");
  }
  if (!finetune && cfg.train.phase != train::Phase::kTrain) {
    throw ConfigError("train requires train.phase = train");
  }
  cfg.train.validate();
  const data::SplitManifest m = ensure_manifest(root, cfg);
  const int U = cfg.model.angular_u, V = cfg.model.angular_v;
  data::SceneStore train_store(root, m, data::Split::kTrain, cfg.train.scale, U, V);
  std::optional<data::SceneStore> val;
  if (!m.val.empty()) val.emplace(root, m, data::Split::kVal, cfg.train.scale, U, V);

  Model<float> model(cfg.model, cfg.train.seed);
  train::TrainResult r;
  if (finetune) {
    r = train::finetune(model, checkpoint, train_store, val ? &*val : nullptr, cfg.train, out);
  } else {
    train::TrainOptions opts;
    opts.resume_from = resume;
    opts.checkpoint_every = cfg.checkpoint_every;
    r = train::train(model, train_store, val ? &*val : nullptr, cfg.train, out, opts);
  }
  std::cout << (finetune ? "finetune" : "train") << ": " << r.steps_run << " steps, loss "
            << r.initial_loss << " -> " << r.final_loss;
  if (r.best_val_psnr >= 0) std::cout << ", best val PSNR " << r.best_val_psnr << " dB";
  std::cout << "\ncheckpoint: " << r.last_checkpoint.string() << '\n';
  std::ofstream(out / "resolved.cfg") << config::render(cfg);
  write_run_manifest(out, finetune ? "finetune" : "train", argv, cfg, common,
                     {r.last_checkpoint, out / "best.ckpt", out / "train_log.csv",
                      out / "resolved.cfg"});
  return kOk;
}

int cmd_eval(const Common& common, const std::string& data_flag, const std::string& checkpoint,
             std::optional<int> scale_flag, std::string split_flag, std::string label,
             bool baseline, const std::vector<std::string>& argv) {
  config::RunConfig cfg = resolve_config(common);
  const fs::path out = resolve_out(common);
  const fs::path root = resolve_data(data_flag, cfg);
  const int scale = scale_flag.value_or(cfg.train.scale);
  const data::Split split = data::parse_split(split_flag.empty() ? cfg.eval.split : split_flag);
  const data::SplitManifest m = ensure_manifest(root, cfg);
  if (checkpoint.empty() && !baseline) throw UsageError("eval needs --checkpoint or --baseline");

  eval::EvalOptions opts;
  opts.ang_u = cfg.model.angular_u;
  opts.ang_v = cfg.model.angular_v;
  std::vector<eval::MetricsReport> reports;
  std::vector<fs::path> artifacts;
  if (baseline) {
    opts.variant_label = "identity";
    reports.push_back(eval::identity_baseline(root, m, split, scale, opts));
  }
  if (!checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (!common.config_path.empty() && !cfg.model.same_architecture(ck.config)) {
      throw ConfigError("checkpoint architecture does not match model.* in the config");
    }
    Model<float> model(ck.config);
    apply_checkpoint(ck, model);
    opts.variant_label = label.empty() ? ck.config.variant : label;
    if (cfg.eval.dump_sr) opts.sr_dir = out / "sr";
    reports.push_back(eval::evaluate(model, root, m, split, scale, opts));
  }
  for (const auto& r : reports) {
    const auto [csv, txt] = eval::write_report(r, out);
    artifacts.push_back(csv);
    artifacts.push_back(txt);
    std::cout << r.variant_label << " x" << r.scale << " " << r.split << ": PSNR "
              << r.mean_psnr << " dB, SSIM " << r.mean_ssim << '\n';
  }
  std::cout << eval::emit_table(reports, eval::TableLayout::kTable1, out / "table1");
  artifacts.push_back(out / "table1.csv");
  artifacts.push_back(out / "table1.txt");
  write_run_manifest(out, "eval", argv, cfg, common, artifacts);
  return kOk;
}

int cmd_ablate(const Common& common, const std::string& data_flag, const std::string& variants,
               int parallel, const std::vector<std::string>& argv) {
  config::RunConfig cfg = resolve_config(common);
  const fs::path out = resolve_out(common);
  const fs::path root = resolve_data(data_flag, cfg);
  std::vector<std::string> chosen;
  if (variants.empty() || variants == "all") {
    chosen = ablation_variants();
  } else {
    std::stringstream ss(variants);
    for (std::string v; std::getline(ss, v, ',');) chosen.push_back(v);
  }
  train::TrainConfig tc = cfg.train;
  if (cfg.ablate.total_epochs > 0) tc.total_epochs = cfg.ablate.total_epochs;
  if (cfg.ablate.iters_per_epoch > 0) tc.iters_per_epoch = cfg.ablate.iters_per_epoch;
  if (cfg.ablate.halve_every > 0) tc.halve_every = cfg.ablate.halve_every;
  tc.validate();
  std::vector<ModelConfig> models;
  for (const std::string& v : chosen) models.push_back(make_ablation(cfg.model, v));

  const data::SplitManifest m = ensure_manifest(root, cfg);
  const int U = cfg.model.angular_u, V = cfg.model.angular_v;
  const data::SceneStore train_store(root, m, data::Split::kTrain, tc.scale, U, V);
  const data::Split split = data::parse_split(cfg.eval.split);

  auto run_one = [&](std::size_t i) {
    Model<float> model(models[i], tc.seed);
    const fs::path dir = out / label_file(chosen[i]);
    train::train(model, train_store, nullptr, tc, dir);
    eval::EvalOptions opts;
    opts.variant_label = chosen[i];
    opts.ang_u = U;
    opts.ang_v = V;
    eval::MetricsReport r = eval::evaluate(model, root, m, split, tc.scale, opts);
    eval::write_report(r, dir);
    return r;
  };
  std::vector<eval::MetricsReport> reports(chosen.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, parallel));
  for (std::size_t start = 0; start < chosen.size(); start += width) {
    std::vector<std::future<eval::MetricsReport>> jobs;
    for (std::size_t i = start; i < std::min(chosen.size(), start + width); ++i) {
      if (width == 1) {
        reports[i] = run_one(i);
      } else {
        jobs.push_back(std::async(std::launch::async, run_one, i));
      }
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) reports[start + k] = jobs[k].get();
    for (std::size_t i = start; i < std::min(chosen.size(), start + width); ++i) {
      std::cout << chosen[i] << ": " << count_params(models[i]) << " params, PSNR "
                << reports[i].mean_psnr << " dB\n";
    }
  }
  std::cout << eval::emit_table(reports, eval::TableLayout::kTable3, out / "table3");
  write_run_manifest(out, "ablate", argv, cfg, common, {out / "table3.csv", out / "table3.txt"});
  return kOk;
}

int cmd_epi(const Common& common, const std::string& lf_dir, const std::string& rows_flag,
            const std::string& orientation_flag, const std::string& checkpoint,
            const std::vector<std::string>& argv) {
  config::RunConfig cfg = resolve_config(common);
  const fs::path out = resolve_out(common);
  if (lf_dir.empty()) throw UsageError("epi needs --lf <views directory>");
  EpiOrientation orientation;
  if (orientation_flag == "h" || orientation_flag == "horizontal") {
    orientation = EpiOrientation::kHorizontal;
  } else if (orientation_flag == "v" || orientation_flag == "vertical") {
    orientation = EpiOrientation::kVertical;
  } else {
    throw UsageError("--orientation must be h or v");
  }
  std::vector<std::pair<int, int>> rows;
  std::stringstream ss(rows_flag);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--rows entries look like view:line");
    try {
      rows.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw UsageError("bad --rows entry '" + item + "'");
    }
  }
  if (rows.empty()) throw UsageError("epi needs at least one --rows entry");

  LightField lf =
      load_lightfield(lf_dir, Colorspace::kY, cfg.model.angular_u, cfg.model.angular_v);
  if (!checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    Model<float> model(ck.config);
    apply_checkpoint(ck, model);
    lf = eval::super_resolve(model, lf);
  }
  fs::path scene = fs::path(lf_dir);
  if (scene.filename().empty()) scene = scene.parent_path();
  std::string name = scene.filename().string();
  if (name == "gt" || name.rfind("lr_x", 0) == 0) {
    name = scene.parent_path().filename().string() + "_" + name;
  }
  const auto paths = eval::export_epi_strip(lf, orientation, rows, out / "epi" / name);
  for (const auto& p : paths) std::cout << p.string() << '\n';
  write_run_manifest(out, "epi", argv, cfg, common, paths);
  return kOk;
}

int cmd_info(const std::string& checkpoint) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const nlohmann::json j = {{"config", to_json(ck.config)},
                            {"count_params", count_params(ck.config)},
                            {"stored_params", stored_param_count(ck)},
                            {"tensors", ck.params.size()},
                            {"has_optimizer_state", !ck.adam_m.empty()},
                            {"metadata", ck.metadata}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Light-field super-resolution with omni-frequency projection", "ofpnet"};
  app.require_subcommand(1);

  Common common;
  std::string data_dir, checkpoint, resume, in_dir, chain, variants = "all", split, label;
  std::string lf_dir, rows, orientation = "h";
  std::vector<int> scales;
  std::optional<int> scale;
  int synthetic = 0, size = 64, parallel = 1;
  bool baseline = false;

  auto* degrade = app.add_subcommand("degrade", "Build a paired GT/LR dataset tree");
  add_common(degrade, common);
  degrade->add_option("--in", in_dir, "Directory of HR scenes (one folder of views each)");
  degrade->add_option("--synthetic", synthetic, "Render this many procedural scenes instead");
  degrade->add_option("--size", size, "Spatial size of synthetic scenes");
  degrade->add_option("--scale", scales, "Scale factors to generate (default 2 4)");
  degrade->add_option("--chain", chain, "Degradation chain, e.g. bicubic,blur:0.8,noise:0.01");

  auto* train_cmd = app.add_subcommand("train", "Train from scratch");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data_dir, "Dataset root");
  train_cmd->add_option("--resume", resume, "Resume from a last.ckpt of the same run");

  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune a trained checkpoint");
  add_common(finetune_cmd, common);
  finetune_cmd->add_option("--data", data_dir, "Dataset root");
  finetune_cmd->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--data", data_dir, "Dataset root");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
  eval_cmd->add_option("--scale", scale, "Scale factor (default train.scale)");
  eval_cmd->add_option("--split", split, "train, val or test (default eval.split)");
  eval_cmd->add_option("--label", label, "Variant label used in reports");
  eval_cmd->add_flag("--baseline", baseline, "Also score the LR input itself");

  auto* ablate = app.add_subcommand("ablate", "Train and score the ablation variants");
  add_common(ablate, common);
  ablate->add_option("--data", data_dir, "Dataset root");
  ablate->add_option("--variants", variants, "all, or a comma list such as freq:h,proj:full");
  ablate->add_option("--parallel", parallel, "Variants trained concurrently");

  auto* epi = app.add_subcommand("epi", "Export epipolar-plane image strips");
  add_common(epi, common);
  epi->add_option("--lf", lf_dir, "Directory holding view_{u}_{v}.png");
  epi->add_option("--rows", rows, "Comma list of view:line pairs")->required();
  epi->add_option("--orientation", orientation, "h (rows follow v) or v (rows follow u)");
  epi->add_option("--checkpoint", checkpoint, "Super-resolve the field first");

  auto* info = app.add_subcommand("info", "Describe a checkpoint");
  info->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  std::vector<const char*> cargv;
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "ofpnet: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  if (degrade->parsed()) return cmd_degrade(common, in_dir, synthetic, size, scales, chain, args);
  if (train_cmd->parsed()) return cmd_train(common, data_dir, resume, "", false, args);
  if (finetune_cmd->parsed()) return cmd_train(common, data_dir, "", checkpoint, true, args);
  if (eval_cmd->parsed()) {
    return cmd_eval(common, data_dir, checkpoint, scale, split, label, baseline, args);
  }
  if (ablate->parsed()) return cmd_ablate(common, data_dir, variants, parallel, args);
  if (epi->parsed()) return cmd_epi(common, lf_dir, rows, orientation, checkpoint, args);
  if (info->parsed()) return cmd_info(checkpoint);
  std::cerr << app.help();
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& argv) {
  try {
    return dispatch(argv);
  } catch (const UsageError& e) {
    std::cerr << "ofpnet: usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "ofpnet: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "ofpnet: data error: " << e.what() << '\n';
    return kData;
  } catch (const AbortWithDiagnostics& e) {
    std::cerr << "ofpnet: aborted: " << e.what();
    if (!e.dump_path().empty()) std::cerr << " (diagnostics in " << e.dump_path() << ")";
    std::cerr << '\n';
    return kRuntime;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ofpnet: I/O error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "ofpnet: error: " << e.what() << '\n';
    return kRuntime;
  }
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace ofpnet::cli
