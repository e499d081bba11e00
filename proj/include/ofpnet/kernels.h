#pragma once

// Data-parallel compute kernels used by the autograd ops. Every kernel here
// has a serial twin in reference_kernels.h with the same signature; the tests
// check one against the other and bench/kernels_bench.cpp times both.
//
// Conventions:
//  - spatial conv weights are [out_c][in_c][k][k], bias is [out_c]
//  - angular conv weights are [out_c][in_c][3][3] over the (u, v) view grid,
//    zero padded by one view on each side
//  - *_backward functions ACCUMULATE into every gradient they are handed;
//    a null input-gradient pointer skips that computation

#include <span>

#include "ofpnet/tensor.h"

namespace ofpnet::kernels {

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

// floor((in + 2*pad - kernel) / stride) + 1; throws SizeError when the window
// does not fit at all.
int conv_out_size(int in, const ConvGeometry& g);

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight,
                    std::span<const T> bias, int out_channels,
                    const ConvGeometry& g, Tensor<T>& out);

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight,
                     int out_channels, const ConvGeometry& g,
                     const Tensor<T>& dout, Tensor<T>* din,
                     std::span<T> dweight, std::span<T> dbias);

template <typename T>
void angular_conv_forward(const Tensor<T>& in, std::span<const T> weight,
                          std::span<const T> bias, int out_channels,
                          Tensor<T>& out);

template <typename T>
void angular_conv_backward(const Tensor<T>& in, std::span<const T> weight,
                           int out_channels, const Tensor<T>& dout,
                           Tensor<T>* din, std::span<T> dweight,
                           std::span<T> dbias);

// Bilinear resampling by an integer factor with half-pixel centres and edge
// clamping (the align_corners = false convention).
template <typename T>
void upsample_bilinear_forward(const Tensor<T>& in, int factor, Tensor<T>& out);

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& dout, int factor,
                                Tensor<T>& din);

}  // namespace ofpnet::kernels
