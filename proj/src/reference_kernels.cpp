#include "ofpnet/reference_kernels.h"

#include <algorithm>
#include <cmath>

#include "ofpnet/errors.h"

namespace ofpnet::reference {
namespace {

void check_conv_args(const Shape& in, std::size_t weight_size, int out_channels,
                     const ConvGeometry& g) {
  const std::size_t expected = static_cast<std::size_t>(out_channels) *
                               in.channels * g.kernel * g.kernel;
  if (weight_size != expected) {
    throw SizeError("conv weight size mismatch for input " + in.str());
  }
}

// Source coordinate of output sample `o` for half-pixel bilinear resampling.
void bilinear_tap(int o, int factor, int n, int& i0, int& i1, double& frac) {
  double src = (o + 0.5) / factor - 0.5;
  if (src < 0) src = 0;
  i0 = static_cast<int>(std::floor(src));
  i1 = std::min(i0 + 1, n - 1);
  frac = src - i0;
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight,
                    std::span<const T> bias, int out_channels,
                    const ConvGeometry& g, Tensor<T>& out) {
  const Shape& s = in.shape();
  check_conv_args(s, weight.size(), out_channels, g);
  const int ho = kernels::conv_out_size(s.height, g);
  const int wo = kernels::conv_out_size(s.width, g);
  out = Tensor<T>(s.with_channels(out_channels).with_spatial(ho, wo));
  const int k = g.kernel;
  for (int n = 0; n < s.views(); ++n) {
    for (int co = 0; co < out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (int ci = 0; ci < s.channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= s.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= s.width) continue;
                acc += weight[((co * s.channels + ci) * k + ky) * k + kx] *
                       in.plane(n, ci)[iy * s.width + ix];
              }
            }
          }
          out.plane(n, co)[oy * wo + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight,
                     int out_channels, const ConvGeometry& g,
                     const Tensor<T>& dout, Tensor<T>* din,
                     std::span<T> dweight, std::span<T> dbias) {
  const Shape& s = in.shape();
  check_conv_args(s, weight.size(), out_channels, g);
  const int ho = dout.shape().height;
  const int wo = dout.shape().width;
  const int k = g.kernel;
  for (int n = 0; n < s.views(); ++n) {
    for (int co = 0; co < out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const T grad = dout.plane(n, co)[oy * wo + ox];
          if (!dbias.empty()) dbias[co] += grad;
          for (int ci = 0; ci < s.channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= s.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= s.width) continue;
                const std::size_t wi = ((co * s.channels + ci) * k + ky) * k + kx;
                dweight[wi] += grad * in.plane(n, ci)[iy * s.width + ix];
                if (din) din->plane(n, ci)[iy * s.width + ix] += grad * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void angular_conv_forward(const Tensor<T>& in, std::span<const T> weight,
                          std::span<const T> bias, int out_channels,
                          Tensor<T>& out) {
  const Shape& s = in.shape();
  check_conv_args(s, weight.size(), out_channels, ConvGeometry{3, 1, 1});
  out = Tensor<T>(s.with_channels(out_channels));
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.batch; ++b) {
    for (int u = 0; u < s.ang_u; ++u) {
      for (int v = 0; v < s.ang_v; ++v) {
        const int n = (b * s.ang_u + u) * s.ang_v + v;
        for (int co = 0; co < out_channels; ++co) {
          for (std::size_t p = 0; p < plane; ++p) {
            T acc = bias.empty() ? T(0) : bias[co];
            for (int ci = 0; ci < s.channels; ++ci) {
              for (int du = 0; du < 3; ++du) {
                const int nu = u + du - 1;
                if (nu < 0 || nu >= s.ang_u) continue;
                for (int dv = 0; dv < 3; ++dv) {
                  const int nv = v + dv - 1;
                  if (nv < 0 || nv >= s.ang_v) continue;
                  const int m = (b * s.ang_u + nu) * s.ang_v + nv;
                  acc += weight[((co * s.channels + ci) * 3 + du) * 3 + dv] *
                         in.plane(m, ci)[p];
                }
              }
            }
            out.plane(n, co)[p] = acc;
          }
        }
      }
    }
  }
}

template <typename T>
void angular_conv_backward(const Tensor<T>& in, std::span<const T> weight,
                           int out_channels, const Tensor<T>& dout,
                           Tensor<T>* din, std::span<T> dweight,
                           std::span<T> dbias) {
  const Shape& s = in.shape();
  check_conv_args(s, weight.size(), out_channels, ConvGeometry{3, 1, 1});
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.batch; ++b) {
    for (int u = 0; u < s.ang_u; ++u) {
      for (int v = 0; v < s.ang_v; ++v) {
        const int n = (b * s.ang_u + u) * s.ang_v + v;
        for (int co = 0; co < out_channels; ++co) {
          for (std::size_t p = 0; p < plane; ++p) {
            const T grad = dout.plane(n, co)[p];
            if (!dbias.empty()) dbias[co] += grad;
            for (int ci = 0; ci < s.channels; ++ci) {
              for (int du = 0; du < 3; ++du) {
                const int nu = u + du - 1;
                if (nu < 0 || nu >= s.ang_u) continue;
                for (int dv = 0; dv < 3; ++dv) {
                  const int nv = v + dv - 1;
                  if (nv < 0 || nv >= s.ang_v) continue;
                  const int m = (b * s.ang_u + nu) * s.ang_v + nv;
                  const std::size_t wi = ((co * s.channels + ci) * 3 + du) * 3 + dv;
                  dweight[wi] += grad * in.plane(m, ci)[p];
                  if (din) din->plane(m, ci)[p] += grad * weight[wi];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void upsample_bilinear_forward(const Tensor<T>& in, int factor, Tensor<T>& out) {
  const Shape& s = in.shape();
  const int ho = s.height * factor;
  const int wo = s.width * factor;
  out = Tensor<T>(s.with_spatial(ho, wo));
  for (int n = 0; n < s.views(); ++n) {
    for (int c = 0; c < s.channels; ++c) {
      const T* src = in.plane(n, c);
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < ho; ++oy) {
        int y0, y1;
        double fy;
        bilinear_tap(oy, factor, s.height, y0, y1, fy);
        for (int ox = 0; ox < wo; ++ox) {
          int x0, x1;
          double fx;
          bilinear_tap(ox, factor, s.width, x0, x1, fx);
          const T ly = static_cast<T>(fy);
          const T lx = static_cast<T>(fx);
          const T top = (T(1) - lx) * src[y0 * s.width + x0] + lx * src[y0 * s.width + x1];
          const T bot = (T(1) - lx) * src[y1 * s.width + x0] + lx * src[y1 * s.width + x1];
          dst[oy * wo + ox] = (T(1) - ly) * top + ly * bot;
        }
      }
    }
  }
}

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& dout, int factor, Tensor<T>& din) {
  const Shape& s = din.shape();
  const int ho = s.height * factor;
  const int wo = s.width * factor;
  for (int n = 0; n < s.views(); ++n) {
    for (int c = 0; c < s.channels; ++c) {
      const T* g = dout.plane(n, c);
      T* dst = din.plane(n, c);
      for (int oy = 0; oy < ho; ++oy) {
        int y0, y1;
        double fy;
        bilinear_tap(oy, factor, s.height, y0, y1, fy);
        for (int ox = 0; ox < wo; ++ox) {
          int x0, x1;
          double fx;
          bilinear_tap(ox, factor, s.width, x0, x1, fx);
          const T ly = static_cast<T>(fy);
          const T lx = static_cast<T>(fx);
          const T v = g[oy * wo + ox];
          dst[y0 * s.width + x0] += (T(1) - ly) * (T(1) - lx) * v;
          dst[y0 * s.width + x1] += (T(1) - ly) * lx * v;
          dst[y1 * s.width + x0] += ly * (T(1) - lx) * v;
          dst[y1 * s.width + x1] += ly * lx * v;
        }
      }
    }
  }
}

#define OFPNET_INSTANTIATE(T)                                                    \
  template void conv2d_forward<T>(const Tensor<T>&, std::span<const T>,          \
                                  std::span<const T>, int, const ConvGeometry&,  \
                                  Tensor<T>&);                                   \
  template void conv2d_backward<T>(const Tensor<T>&, std::span<const T>, int,    \
                                   const ConvGeometry&, const Tensor<T>&,        \
                                   Tensor<T>*, std::span<T>, std::span<T>);      \
  template void angular_conv_forward<T>(const Tensor<T>&, std::span<const T>,    \
                                        std::span<const T>, int, Tensor<T>&);    \
  template void angular_conv_backward<T>(const Tensor<T>&, std::span<const T>,   \
                                         int, const Tensor<T>&, Tensor<T>*,      \
                                         std::span<T>, std::span<T>);            \
  template void upsample_bilinear_forward<T>(const Tensor<T>&, int, Tensor<T>&); \
  template void upsample_bilinear_backward<T>(const Tensor<T>&, int, Tensor<T>&);

OFPNET_INSTANTIATE(float)
OFPNET_INSTANTIATE(double)
#undef OFPNET_INSTANTIATE

}  // namespace ofpnet::reference
