#include "ofpnet/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ofpnet/errors.h"

namespace ofpnet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << batch << "," << ang_u << "," << ang_v << "," << channels << ","
     << height << "," << width << ")";
  return os.str();
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::add_inplace(const Tensor& other) {
  if (!(other.shape_ == shape_)) {
    throw SizeError("add_inplace: " + shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

template <typename T>
void Tensor<T>::reshape(const Shape& shape) {
  if (shape.numel() != data_.size()) {
    throw SizeError("reshape: " + shape_.str() + " -> " + shape.str());
  }
  shape_ = shape;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw SizeError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  }
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T, typename U>
Tensor<U> tensor_cast(const Tensor<T>& src) {
  Tensor<U> out(src.shape());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<U>(src[i]);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);
template Tensor<double> tensor_cast(const Tensor<float>&);
template Tensor<float> tensor_cast(const Tensor<double>&);
template Tensor<float> tensor_cast(const Tensor<float>&);
template Tensor<double> tensor_cast(const Tensor<double>&);

}  // namespace ofpnet
