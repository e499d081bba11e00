#include "ofpnet/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ofpnet/errors.h"

namespace ofpnet::synth {
namespace {

using Rgb = std::array<double, 3>;

struct Texture {
  Rgb base;
  Rgb tint;
  double fx, fy, phase, amplitude;

  Rgb at(double x, double y) const {
    const double s = amplitude * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
    return {base[0] + s * tint[0], base[1] + s * tint[1], base[2] + s * tint[2]};
  }
};

enum class ShapeKind { kDisc, kBox, kRing };

struct Layer {
  ShapeKind kind;
  double cx, cy, a, b, angle;
  double disparity;
  Texture texture;

  bool covers(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    switch (kind) {
      case ShapeKind::kDisc: return dx * dx + dy * dy <= a * a;
      case ShapeKind::kRing: {
        const double r2 = dx * dx + dy * dy;
        return r2 <= a * a && r2 >= b * b;
      }
      case ShapeKind::kBox: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
        return std::abs(lx) <= a && std::abs(ly) <= b;
      }
    }
    return false;
  }
};

Texture random_texture(std::mt19937_64& rng, double fmin, double fmax) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Texture t;
  for (double& c : t.base) c = 0.15 + 0.7 * unit(rng);
  for (double& c : t.tint) c = 0.5 + 0.5 * unit(rng);
  const double freq = fmin + (fmax - fmin) * unit(rng);
  const double theta = std::numbers::pi * unit(rng);
  t.fx = freq * std::cos(theta);
  t.fy = freq * std::sin(theta);
  t.phase = 2.0 * std::numbers::pi * unit(rng);
  t.amplitude = 0.05 + 0.2 * unit(rng);
  return t;
}

}  // namespace

LightField render_scene(const SceneOptions& o, std::uint64_t seed) {
  if (o.layers < 0) throw ConfigError("synthetic scene needs layers >= 0");
  if (o.min_texture_frequency < 0 || o.max_texture_frequency < o.min_texture_frequency) {
    throw ConfigError("synthetic scene needs 0 <= min_texture_frequency <= max_texture_frequency");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double extent = std::min(o.height, o.width);

  const Texture background =
      random_texture(rng, o.min_texture_frequency, o.max_texture_frequency);
  const double background_disparity = -o.max_disparity * unit(rng);
  std::vector<Layer> layers;
  for (int i = 0; i < o.layers; ++i) {
    Layer l;
    const double pick = unit(rng);
    l.kind = pick < 0.4 ? ShapeKind::kDisc : (pick < 0.8 ? ShapeKind::kBox : ShapeKind::kRing);
    l.cx = o.width * unit(rng);
    l.cy = o.height * unit(rng);
    l.a = extent * (0.08 + 0.22 * unit(rng));
    l.b = l.kind == ShapeKind::kRing ? l.a * (0.3 + 0.5 * unit(rng))
                                     : extent * (0.05 + 0.2 * unit(rng));
    l.angle = std::numbers::pi * unit(rng);
    l.disparity = o.max_disparity * (2.0 * unit(rng) - 1.0);
    l.texture = random_texture(rng, o.min_texture_frequency, o.max_texture_frequency);
    layers.push_back(l);
  }
  // Painter's order: larger disparity is nearer and drawn last.
  std::sort(layers.begin(), layers.end(),
            [](const Layer& a, const Layer& b) { return a.disparity < b.disparity; });

  LightField lf(o.ang_u, o.ang_v, o.height, o.width, Colorspace::kRGB);
  const double uc = (o.ang_u - 1) / 2.0, vc = (o.ang_v - 1) / 2.0;
  constexpr double kOffsets[2] = {-0.25, 0.25};
  for (int u = 0; u < o.ang_u; ++u) {
    for (int v = 0; v < o.ang_v; ++v) {
      for (int y = 0; y < o.height; ++y) {
        for (int x = 0; x < o.width; ++x) {
          Rgb acc{0, 0, 0};
          for (double oy : kOffsets) {
            for (double ox : kOffsets) {
              const double sx = x + 0.5 + ox, sy = y + 0.5 + oy;
              Rgb c = background.at(sx - background_disparity * (v - vc),
                                    sy - background_disparity * (u - uc));
              for (const Layer& l : layers) {
                const double px = sx - l.disparity * (v - vc);
                const double py = sy - l.disparity * (u - uc);
                if (l.covers(px, py)) c = l.texture.at(px, py);
              }
              for (int ch = 0; ch < 3; ++ch) acc[ch] += 0.25 * c[ch];
            }
          }
          for (int ch = 0; ch < 3; ++ch) {
            lf.at(u, v, y, x, ch) = static_cast<float>(std::clamp(acc[ch], 0.0, 1.0));
          }
        }
      }
    }
  }
  return lf;
}

LightField render_blobs(int ang_u, int ang_v, int height, int width, double disparity,
                        const std::vector<Blob>& blobs, double background) {
  LightField lf(ang_u, ang_v, height, width, Colorspace::kY);
  const double uc = (ang_u - 1) / 2.0, vc = (ang_v - 1) / 2.0;
  for (int u = 0; u < ang_u; ++u) {
    for (int v = 0; v < ang_v; ++v) {
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          double val = background;
          for (const Blob& b : blobs) {
            const double dx = x - (b.x + disparity * (v - vc));
            const double dy = y - (b.y + disparity * (u - uc));
            val += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
          }
          lf.at(u, v, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
  }
  return lf;
}

}  // namespace ofpnet::synth
