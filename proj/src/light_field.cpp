#include "ofpnet/light_field.h"

#include <algorithm>
#include <cmath>

#include "ofpnet/errors.h"
#include "ofpnet/image_io.h"

namespace ofpnet {
namespace {

// BT.601 full-range coefficients; chroma is offset by 0.5.
constexpr double kYR = 0.299, kYG = 0.587, kYB = 0.114;
constexpr double kCbR = -0.168736, kCbG = -0.331264, kCbB = 0.5;
constexpr double kCrR = 0.5, kCrG = -0.418688, kCrB = -0.081312;
constexpr double kRCr = 1.402, kGCb = -0.344136, kGCr = -0.714136, kBCb = 1.772;

void require(const LightField& lf, Colorspace cs, const char* op) {
  if (lf.colorspace() != cs) {
    throw ColorspaceError(std::string(op) + ": expected " + to_string(cs) + ", got " +
                          to_string(lf.colorspace()));
  }
}

double catmull_rom(double t) {
  t = std::abs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

int mirror(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

std::vector<Contribution> contributions(int in, int out, double scale) {
  const double width = scale < 1.0 ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(width)) + 2;
  std::vector<Contribution> result(out);
  for (int i = 0; i < out; ++i) {
    const double x = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(x - width / 2.0));
    Contribution& c = result[i];
    double sum = 0.0;
    for (int j = 0; j < taps; ++j) {
      const int idx = left + j;
      const double d = x - idx;
      const double w = scale < 1.0 ? scale * catmull_rom(scale * d) : catmull_rom(d);
      if (w == 0.0) continue;
      c.index.push_back(mirror(idx, in));
      c.weight.push_back(w);
      sum += w;
    }
    for (double& w : c.weight) w /= sum;
  }
  return result;
}

int scaled_size(int n, Rational f) {
  const long long prod = static_cast<long long>(n) * f.num;
  if (f.num <= 0 || f.den <= 0 || prod % f.den != 0) {
    throw SizeError("bicubic_resize: " + std::to_string(n) + " * " + std::to_string(f.num) +
                    "/" + std::to_string(f.den) + " is not an integer size");
  }
  return static_cast<int>(prod / f.den);
}

}  // namespace

std::string to_string(Colorspace cs) {
  switch (cs) {
    case Colorspace::kRGB: return "RGB";
    case Colorspace::kYCbCr: return "YCbCr";
    case Colorspace::kY: return "Y";
  }
  return "?";
}

std::string to_string(ScaleTag tag) {
  switch (tag) {
    case ScaleTag::kGT: return "GT";
    case ScaleTag::kLRx2: return "LRx2";
    case ScaleTag::kLRx4: return "LRx4";
    case ScaleTag::kSR: return "SR";
  }
  return "?";
}

int channels_for(Colorspace cs) { return cs == Colorspace::kY ? 1 : 3; }

LightField::LightField(int ang_u, int ang_v, int height, int width, Colorspace colorspace,
                       ScaleTag scale_tag, float fill)
    : ang_u_(ang_u),
      ang_v_(ang_v),
      height_(height),
      width_(width),
      channels_(channels_for(colorspace)),
      colorspace_(colorspace),
      scale_tag_(scale_tag) {
  if (ang_u < 1 || ang_v < 1 || height < 1 || width < 1) {
    throw SizeError("LightField dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(ang_u) * ang_v * view_size(), fill);
}

bool LightField::same_geometry(const LightField& o) const {
  return ang_u_ == o.ang_u_ && ang_v_ == o.ang_v_ && height_ == o.height_ &&
         width_ == o.width_ && channels_ == o.channels_;
}

void LightField::clamp() {
  for (float& s : data_) s = std::clamp(s, 0.f, 1.f);
}

std::filesystem::path view_filename(int u, int v) {
  return "view_" + std::to_string(u) + "_" + std::to_string(v) + ".png";
}

LightField load_lightfield(const std::filesystem::path& dir, Colorspace colorspace,
                           int ang_u, int ang_v) {
  LightField rgb;
  for (int u = 0; u < ang_u; ++u) {
    for (int v = 0; v < ang_v; ++v) {
      const auto path = dir / view_filename(u, v);
      if (!std::filesystem::exists(path)) throw MissingView(u, v, dir.string());
      const io::Image8 img = io::read_png(path);
      if (u == 0 && v == 0) {
        rgb = LightField(ang_u, ang_v, img.height, img.width, Colorspace::kRGB);
      } else if (img.width != rgb.width() || img.height != rgb.height()) {
        throw InconsistentViews("view (" + std::to_string(u) + "," + std::to_string(v) +
                                ") in " + dir.string() + " is " + std::to_string(img.width) +
                                "x" + std::to_string(img.height) + ", expected " +
                                std::to_string(rgb.width()) + "x" +
                                std::to_string(rgb.height()));
      }
      auto dst = rgb.view(u, v);
      const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
      for (std::size_t p = 0; p < pixels; ++p) {
        for (int c = 0; c < 3; ++c) {
          const std::uint8_t s = img.channels == 3 ? img.pixels[p * 3 + c] : img.pixels[p];
          dst[p * 3 + c] = s / 255.f;
        }
      }
    }
  }
  switch (colorspace) {
    case Colorspace::kRGB: return rgb;
    case Colorspace::kYCbCr: return rgb_to_ycbcr(rgb);
    case Colorspace::kY: return extract_y(rgb_to_ycbcr(rgb));
  }
  return rgb;
}

void save_lightfield(const LightField& lf, const std::filesystem::path& dir) {
  const LightField out = lf.colorspace() == Colorspace::kYCbCr ? ycbcr_to_rgb(lf) : lf;
  std::filesystem::create_directories(dir);
  for (int u = 0; u < out.ang_u(); ++u) {
    for (int v = 0; v < out.ang_v(); ++v) {
      io::Image8 img{out.width(), out.height(), out.channels(), {}};
      auto src = out.view(u, v);
      img.pixels.resize(src.size());
      std::transform(src.begin(), src.end(), img.pixels.begin(), io::quantize);
      io::write_png(dir / view_filename(u, v), img);
    }
  }
}

LightField rgb_to_ycbcr(const LightField& lf) {
  require(lf, Colorspace::kRGB, "rgb_to_ycbcr");
  LightField out(lf.ang_u(), lf.ang_v(), lf.height(), lf.width(), Colorspace::kYCbCr,
                 lf.scale_tag());
  auto src = lf.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const double r = src[i], g = src[i + 1], b = src[i + 2];
    dst[i] = static_cast<float>(kYR * r + kYG * g + kYB * b);
    dst[i + 1] = static_cast<float>(0.5 + kCbR * r + kCbG * g + kCbB * b);
    dst[i + 2] = static_cast<float>(0.5 + kCrR * r + kCrG * g + kCrB * b);
  }
  return out;
}

LightField ycbcr_to_rgb(const LightField& lf) {
  require(lf, Colorspace::kYCbCr, "ycbcr_to_rgb");
  LightField out(lf.ang_u(), lf.ang_v(), lf.height(), lf.width(), Colorspace::kRGB,
                 lf.scale_tag());
  auto src = lf.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const double y = src[i], cb = src[i + 1] - 0.5, cr = src[i + 2] - 0.5;
    dst[i] = static_cast<float>(y + kRCr * cr);
    dst[i + 1] = static_cast<float>(y + kGCb * cb + kGCr * cr);
    dst[i + 2] = static_cast<float>(y + kBCb * cb);
  }
  return out;
}

LightField extract_y(const LightField& lf) {
  require(lf, Colorspace::kYCbCr, "extract_y");
  LightField out(lf.ang_u(), lf.ang_v(), lf.height(), lf.width(), Colorspace::kY,
                 lf.scale_tag());
  auto src = lf.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i * 3];
  return out;
}

LightField replace_y(const LightField& ycbcr, const LightField& y) {
  require(ycbcr, Colorspace::kYCbCr, "replace_y");
  require(y, Colorspace::kY, "replace_y");
  if (ycbcr.ang_u() != y.ang_u() || ycbcr.ang_v() != y.ang_v() ||
      ycbcr.height() != y.height() || ycbcr.width() != y.width()) {
    throw SizeError("replace_y: geometry mismatch");
  }
  LightField out = ycbcr;
  out.set_scale_tag(y.scale_tag());
  auto src = y.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i * 3] = src[i];
  return out;
}

LightField bicubic_resize(const LightField& lf, Rational factor) {
  const int ho = scaled_size(lf.height(), factor);
  const int wo = scaled_size(lf.width(), factor);
  const double scale = factor.value();
  const auto rows = contributions(lf.height(), ho, scale);
  const auto cols = contributions(lf.width(), wo, scale);
  LightField out(lf.ang_u(), lf.ang_v(), ho, wo, lf.colorspace(), lf.scale_tag());
  const int c = lf.channels();
  const int views = lf.ang_u() * lf.ang_v();
#pragma omp parallel
  {
    std::vector<double> tmp(static_cast<std::size_t>(lf.height()) * wo * c);
#pragma omp for schedule(static)
    for (int n = 0; n < views; ++n) {
      const int u = n / lf.ang_v(), v = n % lf.ang_v();
      auto src = lf.view(u, v);
      auto dst = out.view(u, v);
      for (int y = 0; y < lf.height(); ++y) {
        for (int x = 0; x < wo; ++x) {
          const Contribution& k = cols[x];
          for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k.index.size(); ++t) {
              acc += k.weight[t] * src[(static_cast<std::size_t>(y) * lf.width() + k.index[t]) * c + ch];
            }
            tmp[(static_cast<std::size_t>(y) * wo + x) * c + ch] = acc;
          }
        }
      }
      for (int y = 0; y < ho; ++y) {
        const Contribution& k = rows[y];
        for (int x = 0; x < wo; ++x) {
          for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k.index.size(); ++t) {
              acc += k.weight[t] * tmp[(static_cast<std::size_t>(k.index[t]) * wo + x) * c + ch];
            }
            dst[(static_cast<std::size_t>(y) * wo + x) * c + ch] = static_cast<float>(acc);
          }
        }
      }
    }
  }
  return out;
}

LightField extract_patch(const LightField& lf, int y0, int x0, int size) {
  if (size < 1 || y0 < 0 || x0 < 0 || y0 + size > lf.height() || x0 + size > lf.width()) {
    throw BoundsError("patch (" + std::to_string(y0) + "," + std::to_string(x0) + ") size " +
                      std::to_string(size) + " outside " + std::to_string(lf.height()) + "x" +
                      std::to_string(lf.width()));
  }
  LightField out(lf.ang_u(), lf.ang_v(), size, size, lf.colorspace(), lf.scale_tag());
  const int c = lf.channels();
  for (int u = 0; u < lf.ang_u(); ++u) {
    for (int v = 0; v < lf.ang_v(); ++v) {
      auto src = lf.view(u, v);
      auto dst = out.view(u, v);
      for (int y = 0; y < size; ++y) {
        const auto first = src.begin() +
                           (static_cast<std::ptrdiff_t>(y0 + y) * lf.width() + x0) * c;
        std::copy(first, first + static_cast<std::ptrdiff_t>(size) * c,
                  dst.begin() + static_cast<std::ptrdiff_t>(y) * size * c);
      }
    }
  }
  return out;
}

EpiImage extract_epi(const LightField& lf, EpiOrientation orientation, int view_index,
                     int line_index) {
  if (lf.channels() != 1) {
    throw ColorspaceError("extract_epi needs a single-channel field, got " +
                          to_string(lf.colorspace()));
  }
  EpiImage epi;
  epi.orientation = orientation;
  epi.view_index = view_index;
  epi.line_index = line_index;
  const bool horizontal = orientation == EpiOrientation::kHorizontal;
  const int view_limit = horizontal ? lf.ang_u() : lf.ang_v();
  const int line_limit = horizontal ? lf.height() : lf.width();
  if (view_index < 0 || view_index >= view_limit || line_index < 0 ||
      line_index >= line_limit) {
    throw BoundsError("EPI index (" + std::to_string(view_index) + "," +
                      std::to_string(line_index) + ") out of range");
  }
  epi.rows = horizontal ? lf.ang_v() : lf.ang_u();
  epi.cols = horizontal ? lf.width() : lf.height();
  epi.data.resize(static_cast<std::size_t>(epi.rows) * epi.cols);
  for (int r = 0; r < epi.rows; ++r) {
    for (int c = 0; c < epi.cols; ++c) {
      epi.data[static_cast<std::size_t>(r) * epi.cols + c] =
          horizontal ? lf.at(view_index, r, line_index, c) : lf.at(r, view_index, c, line_index);
    }
  }
  return epi;
}

template <typename T>
Tensor<T> to_tensor(const LightField& y) {
  const LightField* one = &y;
  return stack_tensor<T>(std::span<const LightField>(one, 1));
}

template <typename T>
Tensor<T> stack_tensor(std::span<const LightField> fields) {
  if (fields.empty()) throw SizeError("stack_tensor: no fields");
  const LightField& first = fields.front();
  for (const LightField& f : fields) {
    if (f.channels() != 1) throw ColorspaceError("stack_tensor needs single-channel fields");
    if (!f.same_geometry(first)) throw SizeError("stack_tensor: geometry mismatch");
  }
  Shape s{static_cast<int>(fields.size()), first.ang_u(), first.ang_v(), 1, first.height(),
          first.width()};
  Tensor<T> t(s);
  std::size_t offset = 0;
  for (const LightField& f : fields) {
    for (float x : f.data()) t[offset++] = static_cast<T>(x);
  }
  return t;
}

template <typename T>
LightField from_tensor(const Tensor<T>& t, int batch_index, ScaleTag tag) {
  const Shape& s = t.shape();
  if (s.channels != 1) throw SizeError("from_tensor: expected one channel, got " + s.str());
  if (batch_index < 0 || batch_index >= s.batch) throw BoundsError("from_tensor: batch index");
  LightField lf(s.ang_u, s.ang_v, s.height, s.width, Colorspace::kY, tag);
  const std::size_t len = lf.data().size();
  const T* src = t.data() + len * batch_index;
  auto dst = lf.data();
  for (std::size_t i = 0; i < len; ++i) dst[i] = static_cast<float>(src[i]);
  return lf;
}

template Tensor<float> to_tensor<float>(const LightField&);
template Tensor<double> to_tensor<double>(const LightField&);
template Tensor<float> stack_tensor<float>(std::span<const LightField>);
template Tensor<double> stack_tensor<double>(std::span<const LightField>);
template LightField from_tensor<float>(const Tensor<float>&, int, ScaleTag);
template LightField from_tensor<double>(const Tensor<double>&, int, ScaleTag);

}  // namespace ofpnet
