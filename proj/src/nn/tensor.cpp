#include "lfgen/nn/tensor.hpp"

namespace lfgen::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <class T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T>*>& parts) {
  const BasicTensor<T>& first = *parts.front();
  const int batch = first.dim(0);
  const std::size_t inner = first.size() / (static_cast<std::size_t>(batch) * first.dim(1));
  int channels = 0;
  for (const BasicTensor<T>* p : parts) {
    if (p->rank() != first.rank() || p->dim(0) != batch ||
        p->size() / (static_cast<std::size_t>(batch) * p->dim(1)) != inner)
      throw std::invalid_argument("concat_channels shape mismatch: " + shape_string(p->shape()) + " vs " +
                                  shape_string(first.shape()));
    channels += p->dim(1);
  }
  std::vector<int> shape = first.shape();
  shape[1] = channels;
  BasicTensor<T> out(shape);
  T* dst = out.data();
  for (int b = 0; b < batch; ++b)
    for (const BasicTensor<T>* p : parts) {
      const std::size_t n = p->stride0();
      std::copy_n(p->data() + b * n, n, dst);
      dst += n;
    }
  return out;
}

template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, int c0, int count) {
  const int batch = t.dim(0);
  const std::size_t inner = t.stride0() / t.dim(1);
  std::vector<int> shape = t.shape();
  shape[1] = count;
  BasicTensor<T> out(shape);
  for (int b = 0; b < batch; ++b)
    std::copy_n(t.data() + b * t.stride0() + c0 * inner, count * inner, out.data() + b * out.stride0());
  return out;
}

template <class T>
BasicTensor<T> swap_axes12(const BasicTensor<T>& t) {
  const int b = t.dim(0), a1 = t.dim(1), a2 = t.dim(2);
  const std::size_t inner = t.stride0() / (static_cast<std::size_t>(a1) * a2);
  std::vector<int> shape = t.shape();
  std::swap(shape[1], shape[2]);
  BasicTensor<T> out(shape);
  for (int n = 0; n < b; ++n)
    for (int i = 0; i < a1; ++i)
      for (int j = 0; j < a2; ++j)
        std::copy_n(t.data() + n * t.stride0() + (static_cast<std::size_t>(i) * a2 + j) * inner, inner,
                    out.data() + n * t.stride0() + (static_cast<std::size_t>(j) * a1 + i) * inner);
  return out;
}

#define LFGEN_INSTANTIATE(T)                                                                      \
  template BasicTensor<T> concat_channels<T>(const std::vector<const BasicTensor<T>*>&);         \
  template BasicTensor<T> slice_channels<T>(const BasicTensor<T>&, int, int);                    \
  template BasicTensor<T> swap_axes12<T>(const BasicTensor<T>&);
LFGEN_INSTANTIATE(float)
LFGEN_INSTANTIATE(double)
#undef LFGEN_INSTANTIATE

}  // namespace lfgen::nn
