#include "ofpnet/layers.h"

#include "ofpnet/errors.h"

namespace ofpnet::nn {

template <typename T>
void require_even(const Var<T>& x, const char* where) {
  const Shape& s = x->value.shape();
  if (s.height % 2 != 0 || s.width % 2 != 0) {
    throw SizeError(std::string(where) + ": spatial dims must be even, got " + s.str());
  }
}

template <typename T>
Conv2d<T>::Conv2d(int in_c, int out_c, int kernel, int stride, int pad)
    : in_channels(in_c),
      out_channels(out_c),
      geometry{kernel, stride, pad},
      weight(Shape{out_c, 1, 1, in_c, kernel, kernel}),
      bias(Shape{1, 1, 1, out_c, 1, 1}) {}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) {
  if (x->value.shape().channels != in_channels) {
    throw SizeError("conv expects " + std::to_string(in_channels) + " channels, got " +
                    x->value.shape().str());
  }
  return ag::conv2d<T>(x, weight, &bias, out_channels, geometry);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  weight.name = prefix + ".weight";
  bias.name = prefix + ".bias";
  out.push_back(&weight);
  out.push_back(&bias);
}

template <typename T>
AngularConv<T>::AngularConv(int in_c, int out_c)
    : in_channels(in_c),
      out_channels(out_c),
      weight(Shape{out_c, 1, 1, in_c, 3, 3}),
      bias(Shape{1, 1, 1, out_c, 1, 1}) {}

template <typename T>
Var<T> AngularConv<T>::forward(const Var<T>& x) {
  if (x->value.shape().channels != in_channels) {
    throw SizeError("angular conv expects " + std::to_string(in_channels) +
                    " channels, got " + x->value.shape().str());
  }
  return ag::angular_conv<T>(x, weight, &bias, out_channels);
}

template <typename T>
void AngularConv<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  weight.name = prefix + ".weight";
  bias.name = prefix + ".bias";
  out.push_back(&weight);
  out.push_back(&bias);
}

template <typename T>
SpatialAngularBlock<T>::SpatialAngularBlock(int channels)
    : spatial(channels, channels, 3, 1, 1), angular(channels, channels) {}

template <typename T>
Var<T> SpatialAngularBlock<T>::forward(const Var<T>& x) {
  Var<T> h = ag::leaky_relu<T>(spatial.forward(x), static_cast<T>(kLeakySlope));
  return ag::add<T>(x, angular.forward(h));
}

template <typename T>
void SpatialAngularBlock<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  spatial.collect(prefix + ".spatial", out);
  angular.collect(prefix + ".angular", out);
}

template <typename T>
ResidualStack<T>::ResidualStack(int channels, int count) {
  if (count < 0) throw ConfigError("negative block count");
  for (int i = 0; i < count; ++i) {
    blocks.push_back(std::make_unique<SpatialAngularBlock<T>>(channels));
  }
}

template <typename T>
Var<T> ResidualStack<T>::forward(const Var<T>& x) {
  Var<T> h = x;
  for (auto& b : blocks) h = b->forward(h);
  return h;
}

template <typename T>
void ResidualStack<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i]->collect(prefix + ".block" + std::to_string(i), out);
  }
}

template <typename T>
ScaleUp<T>::ScaleUp(int channels, int fusion_blocks)
    : fusion(channels, fusion_blocks), project(channels, channels, 1, 1, 0) {}

template <typename T>
Var<T> ScaleUp<T>::forward(const Var<T>& x) {
  return project.forward(ag::upsample<T>(fusion.forward(x), 2));
}

template <typename T>
void ScaleUp<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  fusion.collect(prefix + ".fusion", out);
  project.collect(prefix + ".project", out);
}

template <typename T>
ScaleDown<T>::ScaleDown(int channels, int fusion_blocks)
    : reduce(channels, channels, 4, 2, 1), fusion(channels, fusion_blocks) {}

template <typename T>
Var<T> ScaleDown<T>::forward(const Var<T>& x) {
  require_even(x, "scale-down");
  return fusion.forward(reduce.forward(x));
}

template <typename T>
void ScaleDown<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  reduce.collect(prefix + ".reduce", out);
  fusion.collect(prefix + ".fusion", out);
}

template <typename T>
UpProjection<T>::UpProjection(int channels, int fusion_blocks)
    : up(channels, fusion_blocks),
      down(channels, fusion_blocks),
      up_residual(channels, fusion_blocks) {}

template <typename T>
ProjectionState<T> UpProjection<T>::forward(const Var<T>& f) {
  Var<T> lifted = up.forward(f);
  Var<T> residual = ag::sub<T>(down.forward(lifted), f);
  Var<T> corrected = ag::add<T>(up_residual.forward(residual), lifted);
  return {f, corrected, residual};
}

template <typename T>
void UpProjection<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
  up_residual.collect(prefix + ".up_residual", out);
}

template <typename T>
DownProjection<T>::DownProjection(int channels, int fusion_blocks)
    : down(channels, fusion_blocks),
      up(channels, fusion_blocks),
      down_residual(channels, fusion_blocks) {}

template <typename T>
ProjectionState<T> DownProjection<T>::forward(const Var<T>& u) {
  require_even(u, "down-projection");
  Var<T> lowered = down.forward(u);
  Var<T> residual = ag::sub<T>(up.forward(lowered), u);
  Var<T> corrected = ag::add<T>(down_residual.forward(residual), lowered);
  return {corrected, u, residual};
}

template <typename T>
void DownProjection<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  down.collect(prefix + ".down", out);
  up.collect(prefix + ".up", out);
  down_residual.collect(prefix + ".down_residual", out);
}

template <typename T>
FrequencyProjection<T>::FrequencyProjection(int channels, int depth, int fusion_blocks) {
  if (depth < 1) throw ConfigError("projection depth must be >= 1");
  for (int i = 0; i < depth; ++i) {
    up_units.push_back(std::make_unique<UpProjection<T>>(channels, fusion_blocks));
    down_units.push_back(std::make_unique<DownProjection<T>>(channels, fusion_blocks));
  }
}

template <typename T>
Var<T> FrequencyProjection<T>::forward(const Var<T>& x) {
  Var<T> f = x;
  for (std::size_t i = 0; i < up_units.size(); ++i) {
    const ProjectionState<T> lifted = up_units[i]->forward(f);
    f = down_units[i]->forward(lifted.hr_feature).lr_feature;
  }
  return f;
}

template <typename T>
void FrequencyProjection<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  for (std::size_t i = 0; i < up_units.size(); ++i) {
    up_units[i]->collect(prefix + ".stage" + std::to_string(i) + ".fupu", out);
    down_units[i]->collect(prefix + ".stage" + std::to_string(i) + ".fdpu", out);
  }
}

#define OFPNET_INSTANTIATE(T)                                     \
  template void require_even<T>(const Var<T>&, const char*);      \
  template class Conv2d<T>;                                       \
  template class AngularConv<T>;                                  \
  template class SpatialAngularBlock<T>;                          \
  template class ResidualStack<T>;                                \
  template class ScaleUp<T>;                                      \
  template class ScaleDown<T>;                                    \
  template class UpProjection<T>;                                 \
  template class DownProjection<T>;                               \
  template class FrequencyProjection<T>;

OFPNET_INSTANTIATE(float)
OFPNET_INSTANTIATE(double)
#undef OFPNET_INSTANTIATE

}  // namespace ofpnet::nn
