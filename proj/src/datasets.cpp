#include "ofpnet/datasets.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ofpnet/errors.h"
#include "ofpnet/image_io.h"

namespace ofpnet::data {
namespace {

constexpr ScaleTag kAllScales[] = {ScaleTag::kGT, ScaleTag::kLRx2, ScaleTag::kLRx4};

std::string missing_view(const fs::path& dir, int ang_u, int ang_v) {
  if (!fs::is_directory(dir)) return dir.filename().string() + "/ missing";
  for (int u = 0; u < ang_u; ++u) {
    for (int v = 0; v < ang_v; ++v) {
      if (!fs::exists(dir / view_filename(u, v))) {
        return dir.filename().string() + "/" + view_filename(u, v).string() + " missing";
      }
    }
  }
  return {};
}

std::vector<float> gaussian_taps(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * i * i / (sigma * sigma));
    taps[i + radius] = static_cast<float>(w);
    sum += w;
  }
  for (float& t : taps) t = static_cast<float>(t / sum);
  return taps;
}

// Half-sample symmetric index reflection.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

void blur_view(std::span<float> view, int h, int w, int ch, double sigma) {
  if (sigma <= 0.0) return;
  const std::vector<float> taps = gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  std::vector<float> tmp(view.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        float acc = 0.f;
        for (int k = -r; k <= r; ++k) {
          acc += taps[k + r] * view[(static_cast<std::size_t>(y) * w + reflect(x + k, w)) * ch + c];
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        float acc = 0.f;
        for (int k = -r; k <= r; ++k) {
          acc += taps[k + r] * tmp[(static_cast<std::size_t>(reflect(y + k, h)) * w + x) * ch + c];
        }
        view[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }
    }
  }
}

// 8x8 block DCT with frequency-proportional quantisation.
void jpeg_like_view(std::span<float> view, int h, int w, int ch, double strength) {
  if (strength <= 0.0) return;
  double basis[8][8];
  for (int k = 0; k < 8; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int n = 0; n < 8; ++n) basis[k][n] = a * std::cos(std::numbers::pi * (n + 0.5) * k / 8.0);
  }
  double block[8][8], coef[8][8], tmp[8][8];
  // Partial blocks at the right/bottom edges are filled by edge replication.
  for (int by = 0; by < h; by += 8) {
    for (int bx = 0; bx < w; bx += 8) {
      for (int c = 0; c < ch; ++c) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const int sy = std::min(by + y, h - 1), sx = std::min(bx + x, w - 1);
            block[y][x] = view[(static_cast<std::size_t>(sy) * w + sx) * ch + c];
          }
        for (int ky = 0; ky < 8; ++ky)
          for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += basis[ky][y] * block[y][x];
            tmp[ky][x] = s;
          }
        for (int ky = 0; ky < 8; ++ky)
          for (int kx = 0; kx < 8; ++kx) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += basis[kx][x] * tmp[ky][x];
            const double q = 0.02 * strength * (1 + ky + kx);
            coef[ky][kx] = q > 0.0 ? std::round(s / q) * q : s;
          }
        for (int y = 0; y < 8; ++y)
          for (int kx = 0; kx < 8; ++kx) {
            double s = 0.0;
            for (int ky = 0; ky < 8; ++ky) s += basis[ky][y] * coef[ky][kx];
            tmp[y][kx] = s;
          }
        for (int y = 0; y < 8 && by + y < h; ++y)
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            double s = 0.0;
            for (int kx = 0; kx < 8; ++kx) s += basis[kx][x] * tmp[y][kx];
            view[(static_cast<std::size_t>(by + y) * w + bx + x) * ch + c] =
                static_cast<float>(s);
          }
      }
    }
  }
}

double parse_number(const std::string& text, const std::string& step) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v) || v < 0.0) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad degradation parameter '" + text + "' in step '" + step + "'");
  }
}

}  // namespace

std::string scale_dir(ScaleTag tag) {
  switch (tag) {
    case ScaleTag::kGT: return "gt";
    case ScaleTag::kLRx2: return "lr_x2";
    case ScaleTag::kLRx4: return "lr_x4";
    case ScaleTag::kSR: return "sr";
  }
  return "gt";
}

ScaleTag lr_tag(int scale) {
  if (scale == 2) return ScaleTag::kLRx2;
  if (scale == 4) return ScaleTag::kLRx4;
  throw ConfigError("scale must be 2 or 4, got " + std::to_string(scale));
}

DatasetIndex index_dataset(const fs::path& root, int ang_u, int ang_v) {
  if (!fs::is_directory(root)) throw EmptyDataset("dataset root " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  if (dirs.empty()) throw EmptyDataset("no scene directories under " + root.string());
  std::sort(dirs.begin(), dirs.end());

  DatasetIndex index;
  for (const fs::path& dir : dirs) {
    const std::string id = dir.filename().string();
    if (const std::string why = missing_view(dir / "gt", ang_u, ang_v); !why.empty()) {
      index.incomplete.emplace_back(id, why);
      continue;
    }
    SceneRecord rec;
    rec.scene_id = id;
    rec.root = dir;
    rec.ang_u = ang_u;
    rec.ang_v = ang_v;
    const io::Image8 ref = io::read_png(dir / "gt" / view_filename(0, 0));
    rec.height = ref.height;
    rec.width = ref.width;
    for (ScaleTag tag : kAllScales) {
      const fs::path sdir = dir / scale_dir(tag);
      if (tag != ScaleTag::kGT) {
        if (!fs::is_directory(sdir)) continue;
        if (const std::string why = missing_view(sdir, ang_u, ang_v); !why.empty()) {
          index.incomplete.emplace_back(id, why);
          continue;
        }
        const io::Image8 img = io::read_png(sdir / view_filename(0, 0));
        if (img.height != rec.height || img.width != rec.width) {
          index.incomplete.emplace_back(id, scale_dir(tag) + "/ size differs from gt/");
          continue;
        }
      }
      rec.available_scales.insert(tag);
    }
    index.scenes.push_back(std::move(rec));
  }
  return index;
}

nlohmann::json to_json(const DatasetIndex& index) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const SceneRecord& r : index.scenes) {
    nlohmann::json scales = nlohmann::json::array();
    for (ScaleTag t : r.available_scales) scales.push_back(scale_dir(t));
    scenes.push_back({{"scene_id", r.scene_id},
                      {"scales", scales},
                      {"height", r.height},
                      {"width", r.width},
                      {"ang_u", r.ang_u},
                      {"ang_v", r.ang_v}});
  }
  nlohmann::json incomplete = nlohmann::json::array();
  for (const auto& [id, why] : index.incomplete) {
    incomplete.push_back({{"scene_id", id}, {"reason", why}});
  }
  return {{"scenes", scenes}, {"incomplete", incomplete}};
}

SplitCounts default_split_counts(int n) {
  SplitCounts c;
  c.val = static_cast<int>(std::lround(n * 17.0 / 95.0));
  c.test = static_cast<int>(std::lround(n * 15.0 / 95.0));
  c.train = n - c.val - c.test;
  return c;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (train, val, test)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

const std::vector<std::string>& scenes_of(const SplitManifest& m, Split s) {
  switch (s) {
    case Split::kTrain: return m.train;
    case Split::kVal: return m.val;
    case Split::kTest: return m.test;
  }
  return m.train;
}

SplitManifest split_scenes(const std::vector<SceneRecord>& records, SplitCounts counts,
                           std::uint64_t seed) {
  if (counts.train < 0 || counts.val < 0 || counts.test < 0) {
    throw SplitError("split counts must be non-negative");
  }
  const long long need = static_cast<long long>(counts.train) + counts.val + counts.test;
  if (need > static_cast<long long>(records.size())) {
    throw SplitError("split counts " + std::to_string(counts.train) + "+" +
                     std::to_string(counts.val) + "+" + std::to_string(counts.test) + " = " +
                     std::to_string(need) + " exceed " + std::to_string(records.size()) +
                     " scenes");
  }
  std::vector<std::string> ids;
  for (const SceneRecord& r : records) ids.push_back(r.scene_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw SplitError("duplicate scene ids in records");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  SplitManifest m;
  m.seed = seed;
  auto it = ids.begin();
  m.train.assign(it, it + counts.train);
  it += counts.train;
  m.val.assign(it, it + counts.val);
  it += counts.val;
  m.test.assign(it, it + counts.test);
  return m;
}

void save_manifest(const SplitManifest& m, const fs::path& path) {
  const nlohmann::json j = {{"train", m.train}, {"val", m.val}, {"test", m.test}, {"seed", m.seed}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SplitManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split manifest " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    SplitManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt split manifest " + path.string() + ": " + e.what());
  }
}

DegradationChain DegradationChain::parse(const std::string& spec, std::uint64_t seed) {
  DegradationChain chain;
  chain.seed = seed;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    const auto colon = item.find(':');
    const std::string name = item.substr(0, colon);
    const bool has_arg = colon != std::string::npos;
    const double arg = has_arg ? parse_number(item.substr(colon + 1), item) : 0.0;
    DegradationStep step;
    if (name == "bicubic") {
      step.kind = DegradationKind::kBicubicDownUp;
      if (has_arg && (arg < 1.0 || arg != std::floor(arg))) {
        throw ConfigError("bicubic factor must be a positive integer in '" + item + "'");
      }
    } else if (name == "blur") {
      step.kind = DegradationKind::kGaussianBlur;
    } else if (name == "noise") {
      step.kind = DegradationKind::kGaussianNoise;
    } else if (name == "jpeg") {
      step.kind = DegradationKind::kJpegLike;
    } else {
      throw ConfigError("unknown degradation step '" + name + "'");
    }
    if (!has_arg && step.kind != DegradationKind::kBicubicDownUp) {
      throw ConfigError("degradation step '" + name + "' needs a parameter");
    }
    step.value = arg;
    chain.steps.push_back(step);
  }
  return chain;
}

std::string DegradationChain::str() const {
  std::string out;
  for (const DegradationStep& s : steps) {
    if (!out.empty()) out += ',';
    std::ostringstream v;
    v << s.value;
    switch (s.kind) {
      case DegradationKind::kBicubicDownUp:
        out += s.value > 0 ? "bicubic:" + v.str() : "bicubic";
        break;
      case DegradationKind::kGaussianBlur: out += "blur:" + v.str(); break;
      case DegradationKind::kGaussianNoise: out += "noise:" + v.str(); break;
      case DegradationKind::kJpegLike: out += "jpeg:" + v.str(); break;
    }
  }
  return out;
}

std::pair<LightField, LightField> generate_synthetic_pair(const LightField& hr, int scale,
                                                          const DegradationChain& chain) {
  if (scale < 1) throw ConfigError("scale must be >= 1");
  if (hr.height() % scale != 0 || hr.width() % scale != 0) {
    throw SizeError("light field " + std::to_string(hr.height()) + "x" +
                    std::to_string(hr.width()) + " is not divisible by scale " +
                    std::to_string(scale));
  }
  LightField lr = hr;
  std::mt19937_64 noise_rng(chain.seed);
  std::mt19937_64 jitter_rng(chain.seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const int views = hr.ang_u() * hr.ang_v();

  for (const DegradationStep& step : chain.steps) {
    if (step.kind == DegradationKind::kBicubicDownUp) {
      const int f = step.value > 0 ? static_cast<int>(step.value) : scale;
      if (f == 1) continue;
      lr = bicubic_resize(bicubic_resize(lr, Rational{1, f}), Rational{f, 1});
      continue;
    }
    std::vector<double> jitter(views, 1.0);
    if (chain.view_jitter > 0.0) {
      for (double& j : jitter) j = std::max(0.0, 1.0 + chain.view_jitter * sym(jitter_rng));
    }
    for (int u = 0; u < hr.ang_u(); ++u) {
      for (int v = 0; v < hr.ang_v(); ++v) {
        const double p = step.value * jitter[u * hr.ang_v() + v];
        std::span<float> view = lr.view(u, v);
        switch (step.kind) {
          case DegradationKind::kGaussianBlur:
            blur_view(view, lr.height(), lr.width(), lr.channels(), p);
            break;
          case DegradationKind::kGaussianNoise:
            if (p > 0.0) {
              std::normal_distribution<double> noise(0.0, p);
              for (float& s : view) s = static_cast<float>(s + noise(noise_rng));
            }
            break;
          case DegradationKind::kJpegLike:
            jpeg_like_view(view, lr.height(), lr.width(), lr.channels(), p);
            break;
          case DegradationKind::kBicubicDownUp: break;
        }
      }
    }
  }
  lr.clamp();
  if (scale == 2 || scale == 4) lr.set_scale_tag(lr_tag(scale));
  LightField gt = hr;
  gt.set_scale_tag(ScaleTag::kGT);
  return {std::move(lr), std::move(gt)};
}

void write_scene(const fs::path& root, const std::string& scene_id, const LightField& gt,
                 const std::map<int, LightField>& lr_by_scale) {
  save_lightfield(gt, root / scene_id / scale_dir(ScaleTag::kGT));
  for (const auto& [scale, lr] : lr_by_scale) {
    if (!lr.same_geometry(gt)) {
      throw SizeError("LR x" + std::to_string(scale) + " of " + scene_id +
                      " does not match the GT geometry");
    }
    save_lightfield(lr, root / scene_id / scale_dir(lr_tag(scale)));
  }
}

SceneStore::SceneStore(const fs::path& root, const SplitManifest& manifest, Split split,
                       int scale, int ang_u, int ang_v)
    : scale_(scale) {
  const ScaleTag tag = lr_tag(scale);
  const auto& ids = scenes_of(manifest, split);
  if (ids.empty()) throw SplitError("split '" + to_string(split) + "' is empty");
  for (const std::string& id : ids) {
    const fs::path lr_dir = root / id / scale_dir(tag);
    if (!fs::is_directory(lr_dir)) {
      throw DataError("scene " + id + " has no " + scale_dir(tag) + "/ directory");
    }
    Entry e{id, load_lightfield(lr_dir, Colorspace::kY, ang_u, ang_v),
            load_lightfield(root / id / scale_dir(ScaleTag::kGT), Colorspace::kY, ang_u, ang_v)};
    if (!e.lr.same_geometry(e.gt)) {
      throw InconsistentViews("scene " + id + ": " + scale_dir(tag) + "/ and gt/ sizes differ");
    }
    e.lr.set_scale_tag(tag);
    entries_.push_back(std::move(e));
  }
}

std::vector<PatchPair> sample_batch(const SceneStore& store, int patch, int batch,
                                    std::mt19937_64& rng) {
  const auto& entries = store.entries();
  if (entries.empty()) throw SplitError("cannot sample from an empty split");
  if (patch < 1 || batch < 1) throw ConfigError("patch and batch must be positive");
  for (const auto& e : entries) {
    if (patch > e.gt.height() || patch > e.gt.width()) {
      throw SizeError("patch " + std::to_string(patch) + " exceeds scene " + e.scene_id + " (" +
                      std::to_string(e.gt.height()) + "x" + std::to_string(e.gt.width()) + ")");
    }
  }
  std::vector<PatchPair> out;
  out.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    std::uniform_int_distribution<std::size_t> pick(0, entries.size() - 1);
    const auto& e = entries[pick(rng)];
    std::uniform_int_distribution<int> ys(0, e.gt.height() - patch);
    std::uniform_int_distribution<int> xs(0, e.gt.width() - patch);
    const int y0 = ys(rng);
    const int x0 = xs(rng);
    out.push_back({extract_patch(e.lr, y0, x0, patch), extract_patch(e.gt, y0, x0, patch),
                   e.scene_id, y0, x0});
  }
  return out;
}

}  // namespace ofpnet::data
