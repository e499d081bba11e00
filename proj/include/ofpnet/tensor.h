#pragma once

#include <cstddef>
#include <memory>
#include <new>
#include <utility>
#include <span>
#include <string>
#include <vector>

namespace ofpnet {

// Feature-map shape. Storage order is batch, ang_u, ang_v, channels,
// height, width (row-major). A "view" is one (batch, u, v) triple, so a
// view is a contiguous channels x height x width block.
struct Shape {
  int batch = 1;
  int ang_u = 1;
  int ang_v = 1;
  int channels = 1;
  int height = 1;
  int width = 1;

  int views() const { return batch * ang_u * ang_v; }
  std::size_t plane() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t view_size() const { return plane() * channels; }
  std::size_t numel() const { return view_size() * views(); }

  Shape with_channels(int c) const {
    Shape s = *this;
    s.channels = c;
    return s;
  }
  Shape with_spatial(int h, int w) const {
    Shape s = *this;
    s.height = h;
    s.width = w;
    return s;
  }

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// 64-byte aligned storage that leaves trivially constructible elements
// uninitialised on resize, so kernel outputs that are fully overwritten skip
// the zero fill. The fixed alignment keeps Eigen's vectorised reductions on
// the same code path for every allocation, which makes results independent
// of heap state.
inline constexpr std::size_t kTensorAlignment = 64;

template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t{kTensorAlignment}));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t{kTensorAlignment});
  }
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Scratch buffer with tensor alignment; contents start unspecified.
template <typename T>
using AlignedBuffer = std::vector<T, DefaultInitAllocator<T>>;

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {}

  // Contents are unspecified; the caller must write every element.
  static Tensor uninitialized(const Shape& shape) {
    Tensor t;
    t.shape_ = shape;
    t.data_.resize(shape.numel());
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* view(int n) { return data_.data() + shape_.view_size() * n; }
  const T* view(int n) const { return data_.data() + shape_.view_size() * n; }
  T* plane(int n, int c) { return view(n) + shape_.plane() * c; }
  const T* plane(int n, int c) const { return view(n) + shape_.plane() * c; }

  void fill(T value);
  void add_inplace(const Tensor& other);
  // Reinterprets the layout; numel must not change.
  void reshape(const Shape& shape);

 private:
  Shape shape_;
  AlignedBuffer<T> data_;
};

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T, typename U>
Tensor<U> tensor_cast(const Tensor<T>& src);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ofpnet
