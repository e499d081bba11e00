#include "ofpnet/autograd.h"

#include <cmath>

#include "ofpnet/errors.h"

namespace ofpnet::ag {
namespace {

template <typename T>
Tape<T>* tape_of(std::initializer_list<const Var<T>*> inputs) {
  for (const Var<T>* v : inputs) {
    if ((*v)->tape) return (*v)->tape;
  }
  return nullptr;
}

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> inputs) {
  for (const Var<T>* v : inputs) {
    if ((*v)->requires_grad) return true;
  }
  return false;
}

// Wraps `value` into a node; the backward closure is attached (and the node
// recorded) only when a tape is present and a gradient can flow.
template <typename T>
Var<T> make_node(Tensor<T> value, Tape<T>* tape, bool requires_grad,
                 std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->tape = tape;
  if (tape && requires_grad) {
    node->backward = std::move(backward);
    tape->record(node);
  }
  return node;
}

void check_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw SizeError(std::string(op) + ": " + a.str() + " vs " + b.str());
}

}  // namespace

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->tape = this;
  return node;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss->value.size() != 1) throw SizeError("backward: loss must be a scalar");
  loss->grad_buffer()[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node);
    // Every consumer of this node has already run.
    node.backward = nullptr;
    node.grad = Tensor<T>();
  }
  nodes_.clear();
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, Parameter<T>& weight, Parameter<T>* bias,
              int out_channels, const kernels::ConvGeometry& g) {
  Tensor<T> out;
  std::span<const T> b = bias ? bias->value.span() : std::span<const T>();
  kernels::conv2d_forward<T>(x->value, weight.value.span(), b, out_channels, g, out);
  return make_node<T>(std::move(out), tape_of<T>({&x}), true,
                      [x, &weight, bias, out_channels, g](Node<T>& self) {
                        Tensor<T>* din = x->requires_grad ? &x->grad_buffer() : nullptr;
                        kernels::conv2d_backward<T>(
                            x->value, weight.value.span(), out_channels, g, self.grad, din,
                            weight.grad.span(), bias ? bias->grad.span() : std::span<T>());
                      });
}

template <typename T>
Var<T> angular_conv(const Var<T>& x, Parameter<T>& weight, Parameter<T>* bias,
                    int out_channels) {
  Tensor<T> out;
  std::span<const T> b = bias ? bias->value.span() : std::span<const T>();
  kernels::angular_conv_forward<T>(x->value, weight.value.span(), b, out_channels, out);
  return make_node<T>(std::move(out), tape_of<T>({&x}), true,
                      [x, &weight, bias, out_channels](Node<T>& self) {
                        Tensor<T>* din = x->requires_grad ? &x->grad_buffer() : nullptr;
                        kernels::angular_conv_backward<T>(
                            x->value, weight.value.span(), out_channels, self.grad, din,
                            weight.grad.span(), bias ? bias->grad.span() : std::span<T>());
                      });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = Tensor<T>::uninitialized(x->value.shape());
  const T* in = x->value.data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = in[i] > T(0) ? in[i] : slope * in[i];
  return make_node<T>(std::move(out), tape_of<T>({&x}), any_requires_grad<T>({&x}),
                      [x, slope](Node<T>& self) {
                        Tensor<T>& g = x->grad_buffer();
                        const T* in = x->value.data();
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          g[i] += in[i] > T(0) ? self.grad[i] : slope * self.grad[i];
                        }
                      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out = a->value;
  out.add_inplace(b->value);
  return make_node<T>(std::move(out), tape_of<T>({&a, &b}), any_requires_grad<T>({&a, &b}),
                      [a, b](Node<T>& self) {
                        if (a->requires_grad) a->grad_buffer().add_inplace(self.grad);
                        if (b->requires_grad) b->grad_buffer().add_inplace(self.grad);
                      });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same(a->value.shape(), b->value.shape(), "sub");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_node<T>(std::move(out), tape_of<T>({&a, &b}), any_requires_grad<T>({&a, &b}),
                      [a, b](Node<T>& self) {
                        if (a->requires_grad) a->grad_buffer().add_inplace(self.grad);
                        if (b->requires_grad) {
                          Tensor<T>& g = b->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                        }
                      });
}

template <typename T>
Var<T> upsample(const Var<T>& x, int factor) {
  Tensor<T> out;
  kernels::upsample_bilinear_forward<T>(x->value, factor, out);
  return make_node<T>(std::move(out), tape_of<T>({&x}), any_requires_grad<T>({&x}),
                      [x, factor](Node<T>& self) {
                        kernels::upsample_bilinear_backward<T>(self.grad, factor,
                                                               x->grad_buffer());
                      });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw SizeError("concat_channels: no inputs");
  Shape s = parts.front()->value.shape();
  int channels = 0;
  Tape<T>* tape = nullptr;
  bool requires_grad = false;
  for (const Var<T>& p : parts) {
    if (!(p->value.shape().with_channels(s.channels) == s)) {
      throw SizeError("concat_channels: " + s.str() + " vs " + p->value.shape().str());
    }
    channels += p->value.shape().channels;
    if (!tape) tape = p->tape;
    requires_grad = requires_grad || p->requires_grad;
  }
  Tensor<T> out(s.with_channels(channels));
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.views(); ++n) {
    T* dst = out.view(n);
    for (const Var<T>& p : parts) {
      const std::size_t len = plane * p->value.shape().channels;
      std::copy_n(p->value.view(n), len, dst);
      dst += len;
    }
  }
  return make_node<T>(std::move(out), tape, requires_grad, [parts](Node<T>& self) {
    const Shape& os = self.value.shape();
    for (int n = 0; n < os.views(); ++n) {
      const T* src = self.grad.view(n);
      for (const Var<T>& p : parts) {
        const std::size_t len = os.plane() * p->value.shape().channels;
        if (p->requires_grad) {
          T* dst = p->grad_buffer().view(n);
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        src += len;
      }
    }
  });
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  check_same(pred->value.shape(), target.shape(), "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    acc += std::abs(static_cast<double>(pred->value[i]) - static_cast<double>(target[i]));
  }
  Tensor<T> out(Shape{});
  out[0] = static_cast<T>(acc / static_cast<double>(target.size()));
  return make_node<T>(std::move(out), tape_of<T>({&pred}), any_requires_grad<T>({&pred}),
                      [pred, target](Node<T>& self) {
                        Tensor<T>& g = pred->grad_buffer();
                        const T scale = self.grad[0] / static_cast<T>(target.size());
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          const T d = pred->value[i] - target[i];
                          g[i] += d > T(0) ? scale : (d < T(0) ? -scale : T(0));
                        }
                      });
}

#define OFPNET_INSTANTIATE(T)                                                       \
  template class Tape<T>;                                                           \
  template Var<T> constant<T>(Tensor<T>);                                           \
  template Var<T> conv2d<T>(const Var<T>&, Parameter<T>&, Parameter<T>*, int,       \
                            const kernels::ConvGeometry&);                          \
  template Var<T> angular_conv<T>(const Var<T>&, Parameter<T>&, Parameter<T>*, int); \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                  \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> upsample<T>(const Var<T>&, int);                                  \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                   \
  template Var<T> l1_loss<T>(const Var<T>&, const Tensor<T>&);

OFPNET_INSTANTIATE(float)
OFPNET_INSTANTIATE(double)
#undef OFPNET_INSTANTIATE

}  // namespace ofpnet::ag
