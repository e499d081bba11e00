#pragma once

#include <vector>

#include "ofpnet/light_field.h"

namespace ofpnet::metrics {

// Reported for identical views, where the MSE is zero.
inline constexpr double kPsnrCap = 100.0;

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Per-view values in row-major (u, v) order. Both fields must be
// single-channel with identical geometry.
std::vector<double> psnr_views(const LightField& sr, const LightField& gt);
std::vector<double> ssim_views(const LightField& sr, const LightField& gt,
                               const SsimOptions& options = {});

// View-averaged.
double psnr_y(const LightField& sr, const LightField& gt);
double ssim_y(const LightField& sr, const LightField& gt, const SsimOptions& options = {});

// Single 2D plane helpers (row-major h x w).
double psnr_plane(const float* a, const float* b, int h, int w);
double ssim_plane(const float* a, const float* b, int h, int w, const SsimOptions& options = {});

}  // namespace ofpnet::metrics
