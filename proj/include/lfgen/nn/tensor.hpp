#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfgen::nn {

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

/// Dense row-major tensor.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw std::invalid_argument("tensor data does not match shape " + shape_string(shape_));
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  /// Elements per leading-axis entry (per sample for batched tensors).
  std::size_t stride0() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

  void reshape(std::vector<int> shape) {
    if (shape_size(shape) != data_.size())
      throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }
  /// Elementwise +=, same size.
  void add(const BasicTensor& other) {
    if (other.size() != size()) throw std::invalid_argument("tensor add size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <class To, class From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  return BasicTensor<To>(t.shape(), std::vector<To>(t.values().begin(), t.values().end()));
}

/// Concatenate 5D (B, C, D, H, W) tensors along the channel axis.
template <class T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>& parts);
template <class T>
BasicTensor<T> concat_channels(std::initializer_list<const BasicTensor<T>*> parts) {
  return concat_channels(std::vector<const BasicTensor<T>*>(parts));
}
/// Inverse of concat_channels: slice channels [c0, c0 + count).
template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, int c0, int count);
/// Swap axes 1 and 2 of a 5D tensor.
template <class T>
BasicTensor<T> swap_axes12(const BasicTensor<T>& t);

/// Trainable tensor with its gradient accumulator.
template <class T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParam() = default;
  BasicParam(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
};

using Param = BasicParam<float>;

}  // namespace lfgen::nn
