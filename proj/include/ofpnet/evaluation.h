#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ofpnet/datasets.h"
#include "ofpnet/light_field.h"
#include "ofpnet/model.h"

namespace ofpnet::eval {

namespace fs = std::filesystem;

// Stated in every report.
inline constexpr const char* kConvention =
    "Y channel (BT.601 full range), metrics per view then averaged over all views, "
    "no border shave, PSNR capped at 100 dB";

struct SceneMetrics {
  int ang_u = 0;
  int ang_v = 0;
  // Row-major (u, v).
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  bool operator==(const SceneMetrics&) const = default;
};

struct MetricsReport {
  std::string variant_label;
  std::string config_fingerprint;
  int scale = 0;
  std::string split;
  std::map<std::string, SceneMetrics> per_scene;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

SceneMetrics scene_metrics(const LightField& sr_y, const LightField& gt_y);
// Recomputes the aggregate as the equal-weight mean of per-scene means.
void finalize(MetricsReport& report);

// Runs the model on a Y field of any size: the input is mirror-padded up to a
// multiple of 4, and the output is cropped back and clamped to [0, 1].
LightField super_resolve(Model<float>& model, const LightField& lr_y);

struct EvalOptions {
  std::string variant_label = "ofpnet";
  // When set, RGB SR views are written to <sr_dir>/<scene>/view_{u}_{v}.png,
  // with the LR chroma carried over.
  fs::path sr_dir;
  int ang_u = 5;
  int ang_v = 5;
};

// Throws DataError if a scene lacks the LR directory for `scale`.
MetricsReport evaluate(Model<float>& model, const fs::path& root,
                       const data::SplitManifest& manifest, data::Split split, int scale,
                       const EvalOptions& options = {});

// The LR input scored directly against GT.
MetricsReport identity_baseline(const fs::path& root, const data::SplitManifest& manifest,
                                data::Split split, int scale, const EvalOptions& options = {});

// Mean Y PSNR of the model over an in-memory store.
double mean_psnr(Model<float>& model, const data::SceneStore& store);

// Writes report_<label>.csv and report_<label>.txt; returns both paths.
std::pair<fs::path, fs::path> write_report(const MetricsReport& report, const fs::path& out_dir);

enum class TableLayout { kTable1, kTable2, kTable3 };
TableLayout parse_layout(const std::string& s);

// table1/table2: metric x scale rows, one column per report.
// table3: one row per ablation variant with component marks and PSNR.
// Writes <stem>.csv and <stem>.txt and returns the aligned text. Throws
// ReportError on an empty list or duplicate labels.
std::string emit_table(const std::vector<MetricsReport>& reports, TableLayout layout,
                       const fs::path& stem);

// One PNG per (view_index, line_index) request, named
// epi_<h|v>_<view>_<line>.png, rows repeated 8 times.
inline constexpr int kEpiMagnification = 8;
std::vector<fs::path> export_epi_strip(const LightField& lf, EpiOrientation orientation,
                                       const std::vector<std::pair<int, int>>& rows,
                                       const fs::path& out_dir);

}  // namespace ofpnet::eval
