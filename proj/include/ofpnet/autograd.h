#pragma once

// Minimal reverse-mode differentiation over feature-map tensors.
//
// A Var is a shared handle to a Node holding a value. Ops executed on Vars
// that belong to a Tape record a backward closure on that tape; ops on
// untaped Vars only compute values, so intermediates are released as soon as
// their handles go out of scope (inference mode).

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ofpnet/kernels.h"
#include "ofpnet/tensor.h"

namespace ofpnet::ag {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(const Shape& shape) : value(shape), grad(shape) {}
  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  Tape<T>* tape = nullptr;
  std::function<void(Node&)> backward;

  // Zero-filled on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> input(Tensor<T> value);
  void record(const Var<T>& node) { nodes_.push_back(node); }
  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  // Parameter gradients are accumulated; the tape is cleared afterwards.
  void backward(const Var<T>& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Var<T>> nodes_;
};

// Untaped constant.
template <typename T>
Var<T> constant(Tensor<T> value);

template <typename T>
Var<T> conv2d(const Var<T>& x, Parameter<T>& weight, Parameter<T>* bias,
              int out_channels, const kernels::ConvGeometry& g);

template <typename T>
Var<T> angular_conv(const Var<T>& x, Parameter<T>& weight, Parameter<T>* bias,
                    int out_channels);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> upsample(const Var<T>& x, int factor);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

// Mean absolute difference, returned as a one-element Var. `target` is
// treated as a constant.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target);

}  // namespace ofpnet::ag
