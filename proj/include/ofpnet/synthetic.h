#pragma once

#include <cstdint>
#include <vector>

#include "ofpnet/light_field.h"

namespace ofpnet::synth {

struct SceneOptions {
  int ang_u = 5;
  int ang_v = 5;
  int height = 64;
  int width = 64;
  // Foreground layers drawn over a textured background plane.
  int layers = 6;
  // Layer disparities are drawn from [-max_disparity, max_disparity] px/view.
  double max_disparity = 1.0;
  // Sinusoidal texture frequencies are drawn from [min, max] cycles/px.
  double min_texture_frequency = 0.04;
  double max_texture_frequency = 0.32;
};

// Procedural RGB light field: a textured background and layered shapes
// (discs, boxes, gratings) at per-layer disparities, 2x2 supersampled.
LightField render_scene(const SceneOptions& options, std::uint64_t seed);

// Y field of Gaussian blobs on a flat background, every view shifted by
// `disparity` px per view step relative to the centre view (x follows v,
// y follows u). Blob centres are given for the centre view.
struct Blob {
  double x;
  double y;
  double sigma;
  double amplitude;
};
LightField render_blobs(int ang_u, int ang_v, int height, int width, double disparity,
                        const std::vector<Blob>& blobs, double background = 0.1);

}  // namespace ofpnet::synth
