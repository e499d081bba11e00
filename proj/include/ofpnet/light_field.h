#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ofpnet/tensor.h"

namespace ofpnet {

enum class Colorspace { kRGB, kYCbCr, kY };
enum class ScaleTag { kGT, kLRx2, kLRx4, kSR };

std::string to_string(Colorspace cs);
std::string to_string(ScaleTag tag);
int channels_for(Colorspace cs);

// Grid of sub-aperture views stored as float samples in [0, 1], indexed
// (u, v, y, x, c) with c fastest.
class LightField {
 public:
  LightField() = default;
  LightField(int ang_u, int ang_v, int height, int width, Colorspace colorspace,
             ScaleTag scale_tag = ScaleTag::kGT, float fill = 0.f);

  int ang_u() const { return ang_u_; }
  int ang_v() const { return ang_v_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Colorspace colorspace() const { return colorspace_; }
  ScaleTag scale_tag() const { return scale_tag_; }
  void set_scale_tag(ScaleTag tag) { scale_tag_ = tag; }
  std::size_t view_size() const {
    return static_cast<std::size_t>(height_) * width_ * channels_;
  }

  float& at(int u, int v, int y, int x, int c = 0) { return data_[index(u, v, y, x, c)]; }
  float at(int u, int v, int y, int x, int c = 0) const {
    return data_[index(u, v, y, x, c)];
  }
  std::span<float> view(int u, int v) {
    return {data_.data() + view_size() * (u * ang_v_ + v), view_size()};
  }
  std::span<const float> view(int u, int v) const {
    return {data_.data() + view_size() * (u * ang_v_ + v), view_size()};
  }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_geometry(const LightField& other) const;
  void clamp();

 private:
  std::size_t index(int u, int v, int y, int x, int c) const {
    return (((static_cast<std::size_t>(u) * ang_v_ + v) * height_ + y) * width_ + x) *
               channels_ +
           c;
  }

  int ang_u_ = 0;
  int ang_v_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Colorspace colorspace_ = Colorspace::kRGB;
  ScaleTag scale_tag_ = ScaleTag::kGT;
  std::vector<float> data_;
};

enum class EpiOrientation { kHorizontal, kVertical };

// Horizontal: rows are v (0..V-1), columns x; fixed u = view_index and
// y = line_index. Vertical: rows are u, columns y; fixed v and x.
struct EpiImage {
  EpiOrientation orientation = EpiOrientation::kHorizontal;
  int view_index = 0;
  int line_index = 0;
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct Rational {
  int num = 1;
  int den = 1;
  double value() const { return static_cast<double>(num) / den; }
};

std::filesystem::path view_filename(int u, int v);

// Reads view_{u}_{v}.png for every (u, v) in the grid and converts to the
// requested colorspace.
LightField load_lightfield(const std::filesystem::path& dir, Colorspace colorspace,
                           int ang_u = 5, int ang_v = 5);

// Writes 8-bit PNGs (RGB for RGB/YCbCr fields, gray for Y). Values are clamped.
void save_lightfield(const LightField& lf, const std::filesystem::path& dir);

LightField rgb_to_ycbcr(const LightField& lf);
LightField ycbcr_to_rgb(const LightField& lf);
LightField extract_y(const LightField& lf);
// Replaces the luma of a YCbCr field with a single-channel field.
LightField replace_y(const LightField& ycbcr, const LightField& y);

// Separable Catmull-Rom (a = -0.5) resampling with half-sample symmetric
// border extension. Downscaling widens the kernel by 1/factor (antialiased).
LightField bicubic_resize(const LightField& lf, Rational factor);

LightField extract_patch(const LightField& lf, int y0, int x0, int size);

EpiImage extract_epi(const LightField& lf, EpiOrientation orientation, int view_index,
                     int line_index);

// Single-channel field <-> (batch = 1, U, V, 1, H, W) tensor.
template <typename T>
Tensor<T> to_tensor(const LightField& y);
template <typename T>
Tensor<T> stack_tensor(std::span<const LightField> fields);
template <typename T>
LightField from_tensor(const Tensor<T>& t, int batch_index = 0,
                       ScaleTag tag = ScaleTag::kSR);

}  // namespace ofpnet
