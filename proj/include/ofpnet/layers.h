#pragma once

// Building blocks of the network. Every module owns its parameters and can
// report them under a dotted hierarchical name (see README, "Parameter
// names"). Modules are non-copyable because recorded backward closures hold
// references to their parameters.

#include <memory>
#include <string>
#include <vector>

#include "ofpnet/autograd.h"

namespace ofpnet::nn {

template <typename T>
using Param = ag::Parameter<T>;
template <typename T>
using Var = ag::Var<T>;

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

inline constexpr double kLeakySlope = 0.1;

template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  virtual Var<T> forward(const Var<T>& x) = 0;
  // Appends parameters and (re)assigns their names under `prefix`.
  virtual void collect(const std::string& prefix, ParamRefs<T>& out) = 0;
};

// Weight shape is encoded as Shape{batch = out, channels = in, height = width = k}.
template <typename T>
class Conv2d final : public Module<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;
  static std::size_t count(int in_channels, int out_channels, int kernel) {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel +
           out_channels;
  }

  int in_channels;
  int out_channels;
  kernels::ConvGeometry geometry;
  Param<T> weight;
  Param<T> bias;
};

// 3x3 convolution across the (u, v) view grid at every pixel.
template <typename T>
class AngularConv final : public Module<T> {
 public:
  AngularConv(int in_channels, int out_channels);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;

  int in_channels;
  int out_channels;
  Param<T> weight;
  Param<T> bias;
};

// x + angular(leaky_relu(spatial(x))): per-view 3x3 spatial conv followed by
// a 3x3 conv over the view grid.
template <typename T>
class SpatialAngularBlock final : public Module<T> {
 public:
  explicit SpatialAngularBlock(int channels);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;
  static std::size_t count(int c) { return 18 * static_cast<std::size_t>(c) * c + 2 * c; }

  Conv2d<T> spatial;
  AngularConv<T> angular;
};

template <typename T>
class ResidualStack final : public Module<T> {
 public:
  ResidualStack(int channels, int blocks);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;
  std::size_t size() const { return blocks.size(); }

  std::vector<std::unique_ptr<SpatialAngularBlock<T>>> blocks;
};

// Multi-view fusion, bilinear x2, then a 1x1 conv.
template <typename T>
class ScaleUp final : public Module<T> {
 public:
  ScaleUp(int channels, int fusion_blocks);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;
  static std::size_t count(int c, int fusion_blocks) {
    return fusion_blocks * SpatialAngularBlock<T>::count(c) + Conv2d<T>::count(c, c, 1);
  }

  ResidualStack<T> fusion;
  Conv2d<T> project;
};

// 4x4 stride-2 conv, then multi-view fusion.
template <typename T>
class ScaleDown final : public Module<T> {
 public:
  ScaleDown(int channels, int fusion_blocks);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;
  static std::size_t count(int c, int fusion_blocks) {
    return Conv2d<T>::count(c, c, 4) + fusion_blocks * SpatialAngularBlock<T>::count(c);
  }

  Conv2d<T> reduce;
  ResidualStack<T> fusion;
};

// lr_feature: base-scale feature, hr_feature: 2x feature, residual: the
// back-projection error measured by the unit.
template <typename T>
struct ProjectionState {
  Var<T> lr_feature;
  Var<T> hr_feature;
  Var<T> residual;
};

// Up-projection: U_a = Up(f); e = Down(U_a) - f; U = Up(e) + U_a.
template <typename T>
class UpProjection {
 public:
  UpProjection(int channels, int fusion_blocks);
  UpProjection(const UpProjection&) = delete;
  UpProjection& operator=(const UpProjection&) = delete;
  ProjectionState<T> forward(const Var<T>& f);
  void collect(const std::string& prefix, ParamRefs<T>& out);

  ScaleUp<T> up;
  ScaleDown<T> down;
  ScaleUp<T> up_residual;
};

// Down-projection (mirror): L_a = Down(u); e = Up(L_a) - u; L = Down(e) + L_a.
template <typename T>
class DownProjection {
 public:
  DownProjection(int channels, int fusion_blocks);
  DownProjection(const DownProjection&) = delete;
  DownProjection& operator=(const DownProjection&) = delete;
  ProjectionState<T> forward(const Var<T>& u);
  void collect(const std::string& prefix, ParamRefs<T>& out);

  ScaleDown<T> down;
  ScaleUp<T> up;
  ScaleDown<T> down_residual;
};

// Resolution-preserving frequency projection: `depth` rounds of
// up-projection followed by down-projection.
template <typename T>
class FrequencyProjection final : public Module<T> {
 public:
  FrequencyProjection(int channels, int depth, int fusion_blocks);
  Var<T> forward(const Var<T>& x) override;
  void collect(const std::string& prefix, ParamRefs<T>& out) override;
  static std::size_t count(int c, int depth, int fusion_blocks) {
    return depth * 3 * (ScaleUp<T>::count(c, fusion_blocks) + ScaleDown<T>::count(c, fusion_blocks));
  }

  std::vector<std::unique_ptr<UpProjection<T>>> up_units;
  std::vector<std::unique_ptr<DownProjection<T>>> down_units;
};

// Requires even spatial dimensions; throws SizeError otherwise.
template <typename T>
void require_even(const Var<T>& x, const char* where);

}  // namespace ofpnet::nn
