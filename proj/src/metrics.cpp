#include "ofpnet/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ofpnet/errors.h"

namespace ofpnet::metrics {
namespace {

void check_pair(const LightField& sr, const LightField& gt) {
  if (sr.channels() != 1 || gt.channels() != 1) {
    throw ColorspaceError("metrics expect single-channel Y light fields");
  }
  if (!sr.same_geometry(gt)) throw SizeError("metric inputs differ in shape");
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double psnr_plane(const float* a, const float* b, int h, int w) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_plane(const float* a, const float* b, int h, int w, const SsimOptions& o) {
  if (h < o.window || w < o.window) {
    throw SizeError("SSIM needs at least " + std::to_string(o.window) + "x" +
                    std::to_string(o.window) + " pixels, got " + std::to_string(h) + "x" +
                    std::to_string(w));
  }
  std::vector<double> g(o.window);
  const int r = o.window / 2;
  double gs = 0.0;
  for (int i = 0; i < o.window; ++i) {
    g[i] = std::exp(-0.5 * (i - r) * (i - r) / (o.sigma * o.sigma));
    gs += g[i];
  }
  for (double& x : g) x /= gs;

  // Separable filtering of the five moment images over valid positions.
  const int oh = h - o.window + 1, ow = w - o.window + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow * 5, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double m[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < o.window; ++k) {
        const double p = a[static_cast<std::size_t>(y) * w + x + k];
        const double q = b[static_cast<std::size_t>(y) * w + x + k];
        m[0] += g[k] * p;
        m[1] += g[k] * q;
        m[2] += g[k] * p * p;
        m[3] += g[k] * q * q;
        m[4] += g[k] * p * q;
      }
      for (int c = 0; c < 5; ++c) rows[(static_cast<std::size_t>(y) * ow + x) * 5 + c] = m[c];
    }
  }
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double m[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < o.window; ++k) {
        const double* src = &rows[(static_cast<std::size_t>(y + k) * ow + x) * 5];
        for (int c = 0; c < 5; ++c) m[c] += g[k] * src[c];
      }
      const double va = m[2] - m[0] * m[0];
      const double vb = m[3] - m[1] * m[1];
      const double cov = m[4] - m[0] * m[1];
      total += ((2 * m[0] * m[1] + c1) * (2 * cov + c2)) /
               ((m[0] * m[0] + m[1] * m[1] + c1) * (va + vb + c2));
    }
  }
  return total / (static_cast<double>(oh) * ow);
}

std::vector<double> psnr_views(const LightField& sr, const LightField& gt) {
  check_pair(sr, gt);
  std::vector<double> out;
  for (int u = 0; u < sr.ang_u(); ++u) {
    for (int v = 0; v < sr.ang_v(); ++v) {
      out.push_back(psnr_plane(sr.view(u, v).data(), gt.view(u, v).data(), sr.height(),
                               sr.width()));
    }
  }
  return out;
}

std::vector<double> ssim_views(const LightField& sr, const LightField& gt,
                               const SsimOptions& options) {
  check_pair(sr, gt);
  std::vector<double> out;
  for (int u = 0; u < sr.ang_u(); ++u) {
    for (int v = 0; v < sr.ang_v(); ++v) {
      out.push_back(ssim_plane(sr.view(u, v).data(), gt.view(u, v).data(), sr.height(),
                               sr.width(), options));
    }
  }
  return out;
}

double psnr_y(const LightField& sr, const LightField& gt) { return mean(psnr_views(sr, gt)); }

double ssim_y(const LightField& sr, const LightField& gt, const SsimOptions& options) {
  return mean(ssim_views(sr, gt, options));
}

}  // namespace ofpnet::metrics
