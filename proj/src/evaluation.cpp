#include "ofpnet/evaluation.h"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "ofpnet/errors.h"
#include "ofpnet/fingerprint.h"
#include "ofpnet/image_io.h"
#include "ofpnet/metrics.h"

namespace ofpnet::eval {
namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

LightField pad_to_multiple(const LightField& lf, int m) {
  const int h = (lf.height() + m - 1) / m * m;
  const int w = (lf.width() + m - 1) / m * m;
  if (h == lf.height() && w == lf.width()) return lf;
  LightField out(lf.ang_u(), lf.ang_v(), h, w, lf.colorspace(), lf.scale_tag());
  for (int u = 0; u < lf.ang_u(); ++u)
    for (int v = 0; v < lf.ang_v(); ++v)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < lf.channels(); ++c)
            out.at(u, v, y, x, c) =
                lf.at(u, v, reflect(y, lf.height()), reflect(x, lf.width()), c);
  return out;
}

LightField crop(const LightField& lf, int h, int w) {
  if (h == lf.height() && w == lf.width()) return lf;
  LightField out(lf.ang_u(), lf.ang_v(), h, w, lf.colorspace(), lf.scale_tag());
  for (int u = 0; u < lf.ang_u(); ++u)
    for (int v = 0; v < lf.ang_v(); ++v)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < lf.channels(); ++c) out.at(u, v, y, x, c) = lf.at(u, v, y, x, c);
  return out;
}

fs::path lr_dir_of(const fs::path& root, const std::string& id, int scale) {
  const fs::path dir = root / id / data::scale_dir(data::lr_tag(scale));
  if (!fs::is_directory(dir)) {
    throw DataError("scene " + id + " has no " + dir.filename().string() + "/ directory");
  }
  return dir;
}

std::string safe_label(const std::string& label) {
  std::string out = label;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// Renders rows as CSV and as space-aligned text.
void render(const std::vector<std::vector<std::string>>& rows, const std::string& title,
            std::string& csv, std::string& text) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream c, t;
  t << title << '\n';
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& r = rows[ri];
    for (std::size_t i = 0; i < r.size(); ++i) {
      c << (i ? "," : "") << r[i];
      t << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << r[i];
    }
    c << '\n';
    t << '\n';
    if (ri == 0) {
      std::size_t total = 0;
      for (std::size_t wi : width) total += wi + 2;
      t << std::string(total > 2 ? total - 2 : total, '-') << '\n';
    }
  }
  t << "Convention: " << kConvention << '\n';
  csv = c.str();
  text = t.str();
}

struct Marks {
  std::string low, mid, high, interaction, fp;
};

Marks marks_for(const std::string& label) {
  if (label == "freq:h") return {"no", "no", "yes", "-", "-"};
  if (label == "freq:mh") return {"no", "yes", "yes", "-", "-"};
  if (label == "freq:lmh") return {"yes", "yes", "yes", "-", "-"};
  if (label == "proj:none") return {"-", "-", "-", "no", "no"};
  if (label == "proj:interact") return {"-", "-", "-", "yes", "no"};
  if (label == "proj:fp") return {"-", "-", "-", "no", "yes"};
  if (label == "proj:full") return {"-", "-", "-", "yes", "yes"};
  return {"?", "?", "?", "?", "?"};
}

}  // namespace

SceneMetrics scene_metrics(const LightField& sr_y, const LightField& gt_y) {
  SceneMetrics m;
  m.ang_u = gt_y.ang_u();
  m.ang_v = gt_y.ang_v();
  m.psnr = metrics::psnr_views(sr_y, gt_y);
  m.ssim = metrics::ssim_views(sr_y, gt_y);
  m.mean_psnr = std::accumulate(m.psnr.begin(), m.psnr.end(), 0.0) / m.psnr.size();
  m.mean_ssim = std::accumulate(m.ssim.begin(), m.ssim.end(), 0.0) / m.ssim.size();
  return m;
}

void finalize(MetricsReport& report) {
  if (report.per_scene.empty()) throw ReportError("report has no scenes");
  double p = 0.0, s = 0.0;
  for (const auto& [id, m] : report.per_scene) {
    p += m.mean_psnr;
    s += m.mean_ssim;
  }
  report.mean_psnr = p / report.per_scene.size();
  report.mean_ssim = s / report.per_scene.size();
}

LightField super_resolve(Model<float>& model, const LightField& lr_y) {
  if (lr_y.channels() != 1) throw ColorspaceError("super_resolve expects a Y light field");
  const LightField padded = pad_to_multiple(lr_y, 4);
  LightField sr = crop(forward(model, padded), lr_y.height(), lr_y.width());
  sr.clamp();
  sr.set_scale_tag(ScaleTag::kSR);
  return sr;
}

MetricsReport evaluate(Model<float>& model, const fs::path& root,
                       const data::SplitManifest& manifest, data::Split split, int scale,
                       const EvalOptions& options) {
  const auto& ids = data::scenes_of(manifest, split);
  if (ids.empty()) throw SplitError("split '" + data::to_string(split) + "' is empty");
  MetricsReport report;
  report.variant_label = options.variant_label;
  report.config_fingerprint = hex64(fnv1a64(to_json(model.config()).dump()));
  report.scale = scale;
  report.split = data::to_string(split);
  for (const std::string& id : ids) {
    const LightField lr = load_lightfield(lr_dir_of(root, id, scale), Colorspace::kYCbCr,
                                          options.ang_u, options.ang_v);
    const LightField gt = load_lightfield(root / id / "gt", Colorspace::kY, options.ang_u,
                                          options.ang_v);
    const LightField sr = super_resolve(model, extract_y(lr));
    report.per_scene[id] = scene_metrics(sr, gt);
    if (!options.sr_dir.empty()) save_lightfield(replace_y(lr, sr), options.sr_dir / id);
  }
  finalize(report);
  return report;
}

MetricsReport identity_baseline(const fs::path& root, const data::SplitManifest& manifest,
                                data::Split split, int scale, const EvalOptions& options) {
  const auto& ids = data::scenes_of(manifest, split);
  if (ids.empty()) throw SplitError("split '" + data::to_string(split) + "' is empty");
  MetricsReport report;
  report.variant_label = options.variant_label;
  report.config_fingerprint = "identity";
  report.scale = scale;
  report.split = data::to_string(split);
  for (const std::string& id : ids) {
    const LightField lr = load_lightfield(lr_dir_of(root, id, scale), Colorspace::kY,
                                          options.ang_u, options.ang_v);
    const LightField gt = load_lightfield(root / id / "gt", Colorspace::kY, options.ang_u,
                                          options.ang_v);
    report.per_scene[id] = scene_metrics(lr, gt);
  }
  finalize(report);
  return report;
}

double mean_psnr(Model<float>& model, const data::SceneStore& store) {
  const auto& entries = store.entries();
  if (entries.empty()) throw SplitError("cannot score an empty split");
  double total = 0.0;
  for (const auto& e : entries) total += metrics::psnr_y(super_resolve(model, e.lr), e.gt);
  return total / entries.size();
}

std::pair<fs::path, fs::path> write_report(const MetricsReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const std::string stem = "report_" + safe_label(report.variant_label);
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"scene", "u", "v", "psnr_db", "ssim"});
  for (const auto& [id, m] : report.per_scene) {
    for (int u = 0; u < m.ang_u; ++u) {
      for (int v = 0; v < m.ang_v; ++v) {
        const std::size_t i = static_cast<std::size_t>(u) * m.ang_v + v;
        rows.push_back({id, std::to_string(u), std::to_string(v), fixed(m.psnr[i], 4),
                        fixed(m.ssim[i], 6)});
      }
    }
    rows.push_back({id, "mean", "mean", fixed(m.mean_psnr, 4), fixed(m.mean_ssim, 6)});
  }
  rows.push_back({"aggregate", "mean", "mean", fixed(report.mean_psnr, 4),
                  fixed(report.mean_ssim, 6)});
  std::string csv, text;
  render(rows,
         "Variant " + report.variant_label + ", x" + std::to_string(report.scale) + ", split " +
             report.split + ", config " + report.config_fingerprint,
         csv, text);
  const fs::path csv_path = out_dir / (stem + ".csv");
  const fs::path txt_path = out_dir / (stem + ".txt");
  std::ofstream(csv_path) << csv;
  std::ofstream(txt_path) << text;
  return {csv_path, txt_path};
}

TableLayout parse_layout(const std::string& s) {
  if (s == "table1") return TableLayout::kTable1;
  if (s == "table2") return TableLayout::kTable2;
  if (s == "table3") return TableLayout::kTable3;
  throw ConfigError("unknown table layout '" + s + "' (table1, table2, table3)");
}

std::string emit_table(const std::vector<MetricsReport>& reports, TableLayout layout,
                       const fs::path& stem) {
  if (reports.empty()) throw ReportError("no reports to tabulate");
  std::vector<std::vector<std::string>> rows;
  std::string title;
  if (layout == TableLayout::kTable3) {
    std::set<std::string> seen;
    for (const MetricsReport& r : reports) {
      if (!seen.insert(r.variant_label).second) {
        throw ReportError("duplicate variant label '" + r.variant_label + "'");
      }
    }
    std::vector<const MetricsReport*> ordered;
    for (const std::string& v : ablation_variants()) {
      for (const MetricsReport& r : reports) {
        if (r.variant_label == v) ordered.push_back(&r);
      }
    }
    for (const MetricsReport& r : reports) {
      if (marks_for(r.variant_label).low == "?") ordered.push_back(&r);
    }
    rows.push_back({"variant", "F_l", "F_m", "F_h", "interactions", "fp", "psnr_db"});
    for (const MetricsReport* r : ordered) {
      const Marks m = marks_for(r->variant_label);
      rows.push_back({r->variant_label, m.low, m.mid, m.high, m.interaction, m.fp,
                      fixed(r->mean_psnr, 2)});
    }
    title = "Ablation, x" + std::to_string(reports.front().scale) + " mean PSNR";
  } else {
    std::vector<std::string> labels;
    std::set<int> scales;
    std::set<std::pair<std::string, int>> seen;
    for (const MetricsReport& r : reports) {
      if (!seen.insert({r.variant_label, r.scale}).second) {
        throw ReportError("duplicate variant label '" + r.variant_label + "' at x" +
                          std::to_string(r.scale));
      }
      if (std::find(labels.begin(), labels.end(), r.variant_label) == labels.end()) {
        labels.push_back(r.variant_label);
      }
      scales.insert(r.scale);
    }
    std::vector<std::string> header{"metric", "scale"};
    header.insert(header.end(), labels.begin(), labels.end());
    rows.push_back(header);
    for (const char* metric : {"PSNR", "SSIM"}) {
      const bool psnr = metric[0] == 'P';
      for (int s : scales) {
        std::vector<std::string> row{metric, "x" + std::to_string(s)};
        for (const std::string& l : labels) {
          std::string cell = "-";
          for (const MetricsReport& r : reports) {
            if (r.variant_label == l && r.scale == s) {
              cell = psnr ? fixed(r.mean_psnr, 2) : fixed(r.mean_ssim, 4);
            }
          }
          row.push_back(cell);
        }
        rows.push_back(row);
      }
    }
    title = layout == TableLayout::kTable1 ? "Average PSNR (dB) and SSIM, paired test split"
                                           : "Average PSNR (dB) and SSIM after fine-tuning";
  }
  std::string csv, text;
  render(rows, title, csv, text);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream(stem.string() + ".csv") << csv;
  std::ofstream(stem.string() + ".txt") << text;
  return text;
}

std::vector<fs::path> export_epi_strip(const LightField& lf, EpiOrientation orientation,
                                       const std::vector<std::pair<int, int>>& rows,
                                       const fs::path& out_dir) {
  std::vector<EpiImage> epis;
  for (const auto& [view, line] : rows) epis.push_back(extract_epi(lf, orientation, view, line));
  std::vector<fs::path> paths;
  const char tag = orientation == EpiOrientation::kHorizontal ? 'h' : 'v';
  for (const EpiImage& e : epis) {
    io::Image8 img{e.cols, e.rows * kEpiMagnification, 1, {}};
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < e.cols; ++c) {
        img.pixels[static_cast<std::size_t>(r) * e.cols + c] =
            io::quantize(e.at(r / kEpiMagnification, c));
      }
    }
    const fs::path path = out_dir / ("epi_" + std::string(1, tag) + "_" +
                                     std::to_string(e.view_index) + "_" +
                                     std::to_string(e.line_index) + ".png");
    io::write_png(path, img);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace ofpnet::eval
