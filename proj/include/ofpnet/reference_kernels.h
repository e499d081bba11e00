#pragma once

// Serial, loop-for-loop implementations of the kernels in kernels.h. They
// follow the textbook definitions directly and exist to be compared against.

#include <span>

#include "ofpnet/kernels.h"
#include "ofpnet/tensor.h"

namespace ofpnet::reference {

using kernels::ConvGeometry;

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

template <typename T>
void upsample_bilinear_forward(const Tensor<T>& in, int factor, Tensor<T>& out);

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& dout, int factor,
                                Tensor<T>& din);

}  // namespace ofpnet::reference
