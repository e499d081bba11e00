#include "ofpnet/kernels.h"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ofpnet/errors.h"

namespace ofpnet::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvDims {
  int in_c, in_h, in_w, out_c, out_h, out_w, k, stride, pad;
  int patch() const { return in_c * k * k; }
  int out_plane() const { return out_h * out_w; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvDims conv_dims(const Shape& s, std::size_t weight_size, int out_channels,
                   const ConvGeometry& g) {
  ConvDims d{s.channels, s.height, s.width, out_channels,
             conv_out_size(s.height, g), conv_out_size(s.width, g),
             g.kernel, g.stride, g.pad};
  if (weight_size != static_cast<std::size_t>(out_channels) * d.patch()) {
    throw SizeError("conv weight size mismatch for input " + s.str());
  }
  return d;
}

// Output columns [lo, hi) whose input column ox*stride - pad + kx is in range.
inline void valid_range(int kx, const ConvDims& d, int& lo, int& hi) {
  const int off = kx - d.pad;
  lo = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  hi = d.in_w - off <= 0 ? 0 : std::min(d.out_w, (d.in_w - off + d.stride - 1) / d.stride);
  lo = std::min(lo, hi);
}

// Unfolds one view into a [in_c*k*k][out_h*out_w] matrix.
template <typename T>
void im2col(const T* in, const ConvDims& d, T* col) {
  const int op = d.out_plane();
  for (int ci = 0; ci < d.in_c; ++ci) {
    const T* src = in + static_cast<std::size_t>(ci) * d.in_h * d.in_w;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        T* row = col + static_cast<std::size_t>((ci * d.k + ky) * d.k + kx) * op;
        int lo, hi;
        valid_range(kx, d, lo, hi);
        const int off = kx - d.pad;
        for (int oy = 0; oy < d.out_h; ++oy) {
          T* dst = row + oy * d.out_w;
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* line = src + iy * d.in_w + off;
          std::fill(dst, dst + lo, T(0));
          if (d.stride == 1) {
            std::copy(line + lo, line + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * d.stride];
          }
          std::fill(dst + hi, dst + d.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* in) {
  const int op = d.out_plane();
  for (int ci = 0; ci < d.in_c; ++ci) {
    T* dst = in + static_cast<std::size_t>(ci) * d.in_h * d.in_w;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((ci * d.k + ky) * d.k + kx) * op;
        int lo, hi;
        valid_range(kx, d, lo, hi);
        const int off = kx - d.pad;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) continue;
          const T* src = row + oy * d.out_w;
          T* line = dst + iy * d.in_w + off;
          if (d.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) line[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) line[ox * d.stride] += src[ox];
          }
        }
      }
    }
  }
}

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int n, int factor) {
  std::vector<Tap> taps(static_cast<std::size_t>(n) * factor);
  for (int o = 0; o < n * factor; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    const int i0 = static_cast<int>(std::floor(src));
    taps[o] = {i0, std::min(i0 + 1, n - 1), src - i0};
  }
  return taps;
}

// Repacks [out][in][3][3] angular weights into nine contiguous [out][in]
// matrices, one per (du, dv) offset.
template <typename T>
AlignedBuffer<T> split_angular_weights(std::span<const T> weight, int out_c, int in_c) {
  AlignedBuffer<T> packed(weight.size());
  for (int co = 0; co < out_c; ++co)
    for (int ci = 0; ci < in_c; ++ci)
      for (int t = 0; t < 9; ++t)
        packed[(static_cast<std::size_t>(t) * out_c + co) * in_c + ci] =
            weight[(static_cast<std::size_t>(co) * in_c + ci) * 9 + t];
  return packed;
}

}  // namespace

int conv_out_size(int in, const ConvGeometry& g) {
  const int span = in + 2 * g.pad - g.kernel;
  if (g.stride <= 0 || span < 0) {
    throw SizeError("conv window (k=" + std::to_string(g.kernel) + ", s=" +
                    std::to_string(g.stride) + ", p=" + std::to_string(g.pad) +
                    ") does not fit input size " + std::to_string(in));
  }
  return span / g.stride + 1;
}

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight,
                    std::span<const T> bias, int out_channels,
                    const ConvGeometry& g, Tensor<T>& out) {
  const Shape& s = in.shape();
  const ConvDims d = conv_dims(s, weight.size(), out_channels, g);
  out = Tensor<T>::uninitialized(s.with_channels(out_channels).with_spatial(d.out_h, d.out_w));
  const ConstMapMat<T> w(weight.data(), d.out_c, d.patch());
  const int views = s.views();
#pragma omp parallel
  {
    AlignedBuffer<T> col(d.pointwise() ? 0 : static_cast<std::size_t>(d.patch()) * d.out_plane());
#pragma omp for schedule(static)
    for (int n = 0; n < views; ++n) {
      const T* src = in.view(n);
      if (!d.pointwise()) {
        im2col(src, d, col.data());
        src = col.data();
      }
      MapMat<T> o(out.view(n), d.out_c, d.out_plane());
      o.noalias() = w * ConstMapMat<T>(src, d.patch(), d.out_plane());
      if (!bias.empty()) {
        for (int co = 0; co < d.out_c; ++co) o.row(co).array() += bias[co];
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
  const ConvDims d = conv_dims(s, weight.size(), out_channels, g);
  const ConstMapMat<T> w(weight.data(), d.out_c, d.patch());
  const int views = s.views();
  const std::size_t wsize = weight.size();
  // Per-view partial weight gradients, reduced in view order afterwards so the
  // result does not depend on the thread count.
  AlignedBuffer<T> partial(wsize * views);
  AlignedBuffer<T> partial_bias(static_cast<std::size_t>(d.out_c) * views);
#pragma omp parallel
  {
    const std::size_t col_size = static_cast<std::size_t>(d.patch()) * d.out_plane();
    AlignedBuffer<T> col(d.pointwise() ? 0 : col_size);
    AlignedBuffer<T> dcol(din && !d.pointwise() ? col_size : 0);
#pragma omp for schedule(static)
    for (int n = 0; n < views; ++n) {
      const T* src = in.view(n);
      if (!d.pointwise()) {
        im2col(src, d, col.data());
        src = col.data();
      }
      const ConstMapMat<T> go(dout.view(n), d.out_c, d.out_plane());
      MapMat<T> pw(partial.data() + wsize * n, d.out_c, d.patch());
      pw.noalias() = go * ConstMapMat<T>(src, d.patch(), d.out_plane()).transpose();
      for (int co = 0; co < d.out_c; ++co) {
        partial_bias[static_cast<std::size_t>(n) * d.out_c + co] = go.row(co).sum();
      }
      if (din) {
        if (d.pointwise()) {
          MapMat<T> gi(din->view(n), d.in_c, d.out_plane());
          gi.noalias() += w.transpose() * go;
        } else {
          MapMat<T> gc(dcol.data(), d.patch(), d.out_plane());
          gc.noalias() = w.transpose() * go;
          col2im_add(dcol.data(), d, din->view(n));
        }
      }
    }
  }
  for (int n = 0; n < views; ++n) {
    const T* pw = partial.data() + wsize * n;
    for (std::size_t i = 0; i < wsize; ++i) dweight[i] += pw[i];
    if (!dbias.empty()) {
      for (int co = 0; co < d.out_c; ++co) {
        dbias[co] += partial_bias[static_cast<std::size_t>(n) * d.out_c + co];
      }
    }
  }
}

template <typename T>
void angular_conv_forward(const Tensor<T>& in, std::span<const T> weight,
                          std::span<const T> bias, int out_channels,
                          Tensor<T>& out) {
  const Shape& s = in.shape();
  const int in_c = s.channels;
  if (weight.size() != static_cast<std::size_t>(out_channels) * in_c * 9) {
    throw SizeError("angular conv weight size mismatch for input " + s.str());
  }
  out = Tensor<T>::uninitialized(s.with_channels(out_channels));
  const AlignedBuffer<T> packed = split_angular_weights(weight, out_channels, in_c);
  const int plane = static_cast<int>(s.plane());
  const int views = s.views();
#pragma omp parallel for schedule(static)
  for (int n = 0; n < views; ++n) {
    const int b = n / (s.ang_u * s.ang_v);
    const int u = (n / s.ang_v) % s.ang_u;
    const int v = n % s.ang_v;
    MapMat<T> o(out.view(n), out_channels, plane);
    if (bias.empty()) {
      o.setZero();
    } else {
      for (int co = 0; co < out_channels; ++co) o.row(co).setConstant(bias[co]);
    }
    for (int t = 0; t < 9; ++t) {
      const int nu = u + t / 3 - 1;
      const int nv = v + t % 3 - 1;
      if (nu < 0 || nu >= s.ang_u || nv < 0 || nv >= s.ang_v) continue;
      const int m = (b * s.ang_u + nu) * s.ang_v + nv;
      const ConstMapMat<T> wt(packed.data() + static_cast<std::size_t>(t) * out_channels * in_c,
                              out_channels, in_c);
      o.noalias() += wt * ConstMapMat<T>(in.view(m), in_c, plane);
    }
  }
}

template <typename T>
void angular_conv_backward(const Tensor<T>& in, std::span<const T> weight,
                           int out_channels, const Tensor<T>& dout,
                           Tensor<T>* din, std::span<T> dweight,
                           std::span<T> dbias) {
  const Shape& s = in.shape();
  const int in_c = s.channels;
  if (weight.size() != static_cast<std::size_t>(out_channels) * in_c * 9) {
    throw SizeError("angular conv weight size mismatch for input " + s.str());
  }
  const AlignedBuffer<T> packed = split_angular_weights(weight, out_channels, in_c);
  const int plane = static_cast<int>(s.plane());
  const int views = s.views();
  auto coords = [&](int n, int& b, int& u, int& v) {
    b = n / (s.ang_u * s.ang_v);
    u = (n / s.ang_v) % s.ang_u;
    v = n % s.ang_v;
  };

  if (din) {
    // Gather form: view m receives from every output view that used it.
#pragma omp parallel for schedule(static)
    for (int m = 0; m < views; ++m) {
      int b, u, v;
      coords(m, b, u, v);
      MapMat<T> gi(din->view(m), in_c, plane);
      for (int t = 0; t < 9; ++t) {
        const int ou = u - (t / 3 - 1);
        const int ov = v - (t % 3 - 1);
        if (ou < 0 || ou >= s.ang_u || ov < 0 || ov >= s.ang_v) continue;
        const int n = (b * s.ang_u + ou) * s.ang_v + ov;
        const ConstMapMat<T> wt(packed.data() + static_cast<std::size_t>(t) * out_channels * in_c,
                                out_channels, in_c);
        gi.noalias() += wt.transpose() * ConstMapMat<T>(dout.view(n), out_channels, plane);
      }
    }
  }

  AlignedBuffer<T> dpacked(packed.size(), T(0));
#pragma omp parallel for schedule(static)
  for (int t = 0; t < 9; ++t) {
    MapMat<T> gw(dpacked.data() + static_cast<std::size_t>(t) * out_channels * in_c,
                 out_channels, in_c);
    for (int n = 0; n < views; ++n) {
      int b, u, v;
      coords(n, b, u, v);
      const int nu = u + t / 3 - 1;
      const int nv = v + t % 3 - 1;
      if (nu < 0 || nu >= s.ang_u || nv < 0 || nv >= s.ang_v) continue;
      const int m = (b * s.ang_u + nu) * s.ang_v + nv;
      gw.noalias() += ConstMapMat<T>(dout.view(n), out_channels, plane) *
                      ConstMapMat<T>(in.view(m), in_c, plane).transpose();
    }
  }
  for (int co = 0; co < out_channels; ++co)
    for (int ci = 0; ci < in_c; ++ci)
      for (int t = 0; t < 9; ++t)
        dweight[(static_cast<std::size_t>(co) * in_c + ci) * 9 + t] +=
            dpacked[(static_cast<std::size_t>(t) * out_channels + co) * in_c + ci];

  if (!dbias.empty()) {
    for (int n = 0; n < views; ++n) {
      const ConstMapMat<T> go(dout.view(n), out_channels, plane);
      for (int co = 0; co < out_channels; ++co) dbias[co] += go.row(co).sum();
    }
  }
}

template <typename T>
void upsample_bilinear_forward(const Tensor<T>& in, int factor, Tensor<T>& out) {
  const Shape& s = in.shape();
  const int ho = s.height * factor;
  const int wo = s.width * factor;
  out = Tensor<T>::uninitialized(s.with_spatial(ho, wo));
  const std::vector<Tap> ty = bilinear_taps(s.height, factor);
  const std::vector<Tap> tx = bilinear_taps(s.width, factor);
  const int planes = s.views() * s.channels;
#pragma omp parallel
  {
    AlignedBuffer<T> rows(static_cast<std::size_t>(s.height) * wo);
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const T* src = in.data() + s.plane() * p;
      T* dst = out.data() + static_cast<std::size_t>(ho) * wo * p;
      // Horizontal pass into `rows`, then vertical.
      for (int y = 0; y < s.height; ++y) {
        const T* line = src + y * s.width;
        T* r = rows.data() + static_cast<std::size_t>(y) * wo;
        for (int ox = 0; ox < wo; ++ox) {
          const T lx = static_cast<T>(tx[ox].frac);
          r[ox] = (T(1) - lx) * line[tx[ox].i0] + lx * line[tx[ox].i1];
        }
      }
      for (int oy = 0; oy < ho; ++oy) {
        const T ly = static_cast<T>(ty[oy].frac);
        const T* r0 = rows.data() + static_cast<std::size_t>(ty[oy].i0) * wo;
        const T* r1 = rows.data() + static_cast<std::size_t>(ty[oy].i1) * wo;
        T* d = dst + static_cast<std::size_t>(oy) * wo;
        for (int ox = 0; ox < wo; ++ox) d[ox] = (T(1) - ly) * r0[ox] + ly * r1[ox];
      }
    }
  }
}

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& dout, int factor, Tensor<T>& din) {
  const Shape& s = din.shape();
  const int ho = s.height * factor;
  const int wo = s.width * factor;
  const std::vector<Tap> ty = bilinear_taps(s.height, factor);
  const std::vector<Tap> tx = bilinear_taps(s.width, factor);
  const int planes = s.views() * s.channels;
#pragma omp parallel
  {
    AlignedBuffer<T> rows(static_cast<std::size_t>(s.height) * wo);
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const T* g = dout.data() + static_cast<std::size_t>(ho) * wo * p;
      T* dst = din.data() + s.plane() * p;
      std::fill(rows.begin(), rows.end(), T(0));
      for (int oy = 0; oy < ho; ++oy) {
        const T ly = static_cast<T>(ty[oy].frac);
        T* r0 = rows.data() + static_cast<std::size_t>(ty[oy].i0) * wo;
        T* r1 = rows.data() + static_cast<std::size_t>(ty[oy].i1) * wo;
        const T* gl = g + static_cast<std::size_t>(oy) * wo;
        for (int ox = 0; ox < wo; ++ox) {
          r0[ox] += (T(1) - ly) * gl[ox];
          r1[ox] += ly * gl[ox];
        }
      }
      for (int y = 0; y < s.height; ++y) {
        const T* r = rows.data() + static_cast<std::size_t>(y) * wo;
        T* line = dst + y * s.width;
        for (int ox = 0; ox < wo; ++ox) {
          const T lx = static_cast<T>(tx[ox].frac);
          line[tx[ox].i0] += (T(1) - lx) * r[ox];
          line[tx[ox].i1] += lx * r[ox];
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

}  // namespace ofpnet::kernels
