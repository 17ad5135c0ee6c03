#include "lfgen/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lfgen::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Dims3 spatial_dims(const BasicTensor<T>& t) {
  if (t.rank() != 5) throw std::invalid_argument("expected a 5D tensor, got " + shape_string(t.shape()));
  return {t.dim(2), t.dim(3), t.dim(4)};
}

int volume(Dims3 d) { return d[0] * d[1] * d[2]; }

template <class T>
void uniform_init(BasicTensor<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : t.values()) v = static_cast<T>(dist(rng));
}

template <class T>
void add_bias(T* y, const T* bias, int channels, int spatial) {
  for (int c = 0; c < channels; ++c) {
    T* row = y + static_cast<std::size_t>(c) * spatial;
    for (int i = 0; i < spatial; ++i) row[i] += bias[c];
  }
}

template <class T>
void accumulate_bias_grad(const T* gy, T* gb, int channels, int spatial) {
  for (int c = 0; c < channels; ++c) {
    const T* row = gy + static_cast<std::size_t>(c) * spatial;
    double s = 0.0;
    for (int i = 0; i < spatial; ++i) s += row[i];
    gb[c] += static_cast<T>(s);
  }
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  Eigen::Map<RowMat<T>> cm(c, m, n);
  Eigen::Map<const RowMat<T>> am(a, trans_a ? k : m, trans_a ? m : k);
  Eigen::Map<const RowMat<T>> bm(b, trans_b ? n : k, trans_b ? k : n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate)
      cm.noalias() += lhs * rhs;
    else
      cm.noalias() = lhs * rhs;
  };
  if (trans_a && trans_b)
    run(am.transpose(), bm.transpose());
  else if (trans_a)
    run(am.transpose(), bm);
  else if (trans_b)
    run(am, bm.transpose());
  else
    run(am, bm);
}

namespace {

// Output positions [lo, hi) whose input index o * stride - pad + k lies in [0, size).
inline void valid_range(int out, int stride, int pad, int k, int size, int& lo, int& hi) {
  const int off = k - pad;  // input index = o * stride + off
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = size - off <= 0 ? 0 : (size - off - 1) / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
}

}  // namespace

template <class T>
void im2col(const T* image, int channels, Dims3 image_dims, Dims3 kernel, Dims3 stride, Dims3 pad,
            Dims3 grid, T* col) {
  const auto [D, H, W] = image_dims;
  const auto [gd, gh, gw] = grid;
  const std::size_t grid_volume = static_cast<std::size_t>(gd) * gh * gw;
  T* row = col;
  for (int c = 0; c < channels; ++c)
    for (int kd = 0; kd < kernel[0]; ++kd)
      for (int kh = 0; kh < kernel[1]; ++kh)
        for (int kw = 0; kw < kernel[2]; ++kw, row += grid_volume) {
          int x0, x1;
          valid_range(gw, stride[2], pad[2], kw, W, x0, x1);
          T* dst = row;
          for (int od = 0; od < gd; ++od) {
            const int id = od * stride[0] - pad[0] + kd;
            if (id < 0 || id >= D) {
              std::fill_n(dst, gh * gw, T(0));
              dst += gh * gw;
              continue;
            }
            for (int oh = 0; oh < gh; ++oh, dst += gw) {
              const int ih = oh * stride[1] - pad[1] + kh;
              if (ih < 0 || ih >= H) {
                std::fill_n(dst, gw, T(0));
                continue;
              }
              const T* src = image + ((static_cast<std::size_t>(c) * D + id) * H + ih) * W + (kw - pad[2]);
              std::fill(dst, dst + x0, T(0));
              if (stride[2] == 1) {
                std::copy(src + x0, src + x1, dst + x0);
              } else {
                for (int ow = x0; ow < x1; ++ow) dst[ow] = src[ow * stride[2]];
              }
              std::fill(dst + x1, dst + gw, T(0));
            }
          }
        }
}

template <class T>
void col2im(const T* col, int channels, Dims3 image_dims, Dims3 kernel, Dims3 stride, Dims3 pad,
            Dims3 grid, T* image) {
  const auto [D, H, W] = image_dims;
  const auto [gd, gh, gw] = grid;
  const std::size_t grid_volume = static_cast<std::size_t>(gd) * gh * gw;
  const T* row = col;
  for (int c = 0; c < channels; ++c)
    for (int kd = 0; kd < kernel[0]; ++kd)
      for (int kh = 0; kh < kernel[1]; ++kh)
        for (int kw = 0; kw < kernel[2]; ++kw, row += grid_volume) {
          int x0, x1;
          valid_range(gw, stride[2], pad[2], kw, W, x0, x1);
          const T* src = row;
          for (int od = 0; od < gd; ++od) {
            const int id = od * stride[0] - pad[0] + kd;
            if (id < 0 || id >= D) {
              src += gh * gw;
              continue;
            }
            for (int oh = 0; oh < gh; ++oh, src += gw) {
              const int ih = oh * stride[1] - pad[1] + kh;
              if (ih < 0 || ih >= H) continue;
              T* dst = image + ((static_cast<std::size_t>(c) * D + id) * H + ih) * W + (kw - pad[2]);
              if (stride[2] == 1) {
                for (int ow = x0; ow < x1; ++ow) dst[ow] += src[ow];
              } else {
                for (int ow = x0; ow < x1; ++ow) dst[ow * stride[2]] += src[ow];
              }
            }
          }
        }
}

// ---------------------------------------------------------------- Conv

template <class T>
BasicConv<T>::BasicConv(std::string name, ConvSpec spec) : spec_(spec) {
  const auto& k = spec.kernel;
  if (spec.transposed)
    weight = BasicParam<T>(name + ".weight", {spec.in_channels, spec.out_channels, k[0], k[1], k[2]});
  else
    weight = BasicParam<T>(name + ".weight", {spec.out_channels, spec.in_channels, k[0], k[1], k[2]});
  bias = BasicParam<T>(name + ".bias", {spec.out_channels});
}

template <class T>
Dims3 BasicConv<T>::output_dims(Dims3 in) const {
  Dims3 out{};
  for (int i = 0; i < 3; ++i) {
    if (spec_.transposed)
      out[i] = (in[i] - 1) * spec_.stride[i] - 2 * spec_.pad[i] + spec_.kernel[i];
    else
      out[i] = (in[i] + 2 * spec_.pad[i] - spec_.kernel[i]) / spec_.stride[i] + 1;
    if (out[i] <= 0) throw std::invalid_argument("convolution output collapses to zero size");
  }
  return out;
}

template <class T>
void BasicConv<T>::init(std::mt19937_64& rng) {
  const int fan_in = (spec_.transposed ? spec_.out_channels : spec_.in_channels) * kernel_volume();
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  uniform_init(weight.value, bound, rng);
  uniform_init(bias.value, bound, rng);
}

template <class T>
BasicTensor<T> BasicConv<T>::forward(const BasicTensor<T>& x) const {
  const Dims3 in = spatial_dims(x);
  if (x.dim(1) != spec_.in_channels)
    throw std::invalid_argument(weight.name + ": expected " + std::to_string(spec_.in_channels) +
                                " input channels, got " + std::to_string(x.dim(1)));
  const Dims3 out = output_dims(in);
  const int batch = x.dim(0);
  const int cin = spec_.in_channels, cout = spec_.out_channels, kv = kernel_volume();
  const int nin = volume(in), nout = volume(out);
  BasicTensor<T> y({batch, cout, out[0], out[1], out[2]});
  std::vector<T> col;
  for (int b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * x.stride0();
    T* yb = y.data() + b * y.stride0();
    if (!spec_.transposed) {
      col.resize(static_cast<std::size_t>(cin) * kv * nout);
      im2col(xb, cin, in, spec_.kernel, spec_.stride, spec_.pad, out, col.data());
      gemm(false, false, cout, nout, cin * kv, weight.value.data(), col.data(), yb, false);
    } else {
      col.resize(static_cast<std::size_t>(cout) * kv * nin);
      gemm(true, false, cout * kv, nin, cin, weight.value.data(), xb, col.data(), false);
      col2im(col.data(), cout, out, spec_.kernel, spec_.stride, spec_.pad, in, yb);
    }
    add_bias(yb, bias.value.data(), cout, nout);
  }
  return y;
}

template <class T>
void BasicConv<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& gy, BasicTensor<T>* gx, bool param_grads) {
  const Dims3 in = spatial_dims(x);
  const Dims3 out = spatial_dims(gy);
  const int batch = x.dim(0);
  const int cin = spec_.in_channels, cout = spec_.out_channels, kv = kernel_volume();
  const int nin = volume(in), nout = volume(out);
  if (gx) *gx = BasicTensor<T>(x.shape());
  std::vector<T> col;
  for (int b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * x.stride0();
    const T* gyb = gy.data() + b * gy.stride0();
    if (param_grads) accumulate_bias_grad(gyb, bias.grad.data(), cout, nout);
    if (!spec_.transposed) {
      col.resize(static_cast<std::size_t>(cin) * kv * nout);
      if (param_grads) {
        im2col(xb, cin, in, spec_.kernel, spec_.stride, spec_.pad, out, col.data());
        gemm(false, true, cout, cin * kv, nout, gyb, col.data(), weight.grad.data(), true);
      }
      if (gx) {
        gemm(true, false, cin * kv, nout, cout, weight.value.data(), gyb, col.data(), false);
        col2im(col.data(), cin, in, spec_.kernel, spec_.stride, spec_.pad, out, gx->data() + b * gx->stride0());
      }
    } else {
      col.resize(static_cast<std::size_t>(cout) * kv * nin);
      im2col(gyb, cout, out, spec_.kernel, spec_.stride, spec_.pad, in, col.data());
      if (param_grads) gemm(false, true, cin, cout * kv, nin, xb, col.data(), weight.grad.data(), true);
      if (gx)
        gemm(false, false, cin, nin, cout * kv, weight.value.data(), col.data(), gx->data() + b * gx->stride0(),
             false);
    }
  }
}

// ----------------------------------------------------------- BatchNorm

template <class T>
BasicBatchNorm<T>::BasicBatchNorm(std::string n, int channels)
    : gamma(n + ".gamma", {channels}),
      beta(n + ".beta", {channels}),
      running_mean({channels}, T(0)),
      running_var({channels}, T(1)),
      name(std::move(n)) {
  gamma.value.fill(T(1));
}

template <class T>
BasicTensor<T> BasicBatchNorm<T>::forward(const BasicTensor<T>& x, Mode mode, Cache& cache) {
  const int batch = x.dim(0), channels = x.dim(1);
  if (channels != gamma.value.dim(0)) throw std::invalid_argument(name + ": channel mismatch");
  const std::size_t spatial = x.stride0() / channels;
  cache.mean.assign(channels, T(0));
  cache.invstd.assign(channels, T(0));
  for (int c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0, s2 = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* p = x.data() + b * x.stride0() + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double count = static_cast<double>(batch) * spatial;
      mean = s / count;
      for (int b = 0; b < batch; ++b) {
        const T* p = x.data() + b * x.stride0() + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s2 += (p[i] - mean) * (p[i] - mean);
      }
      var = s2 / count;
      const double unbiased = count > 1 ? s2 / (count - 1) : var;
      running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mean);
      running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    cache.mean[c] = static_cast<T>(mean);
    cache.invstd[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
  }
  BasicTensor<T> y(x.shape());
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const T scale = gamma.value[c] * cache.invstd[c];
      const T shift = beta.value[c] - cache.mean[c] * scale;
      const T* p = x.data() + b * x.stride0() + c * spatial;
      T* q = y.data() + b * y.stride0() + c * spatial;
      for (std::size_t i = 0; i < spatial; ++i) q[i] = p[i] * scale + shift;
    }
  return y;
}

template <class T>
BasicTensor<T> BasicBatchNorm<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& gy, const Cache& cache,
                                           Mode mode, bool param_grads) {
  const int batch = x.dim(0), channels = x.dim(1);
  const std::size_t spatial = x.stride0() / channels;
  const double count = static_cast<double>(batch) * spatial;
  BasicTensor<T> gx(x.shape());
  for (int c = 0; c < channels; ++c) {
    const T mean = cache.mean[c], invstd = cache.invstd[c];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < batch; ++b) {
      const T* p = x.data() + b * x.stride0() + c * spatial;
      const T* g = gy.data() + b * gy.stride0() + c * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * ((p[i] - mean) * invstd);
      }
    }
    if (param_grads) {
      beta.grad[c] += static_cast<T>(sum_g);
      gamma.grad[c] += static_cast<T>(sum_gx);
    }
    const T k = gamma.value[c] * invstd;
    const T mg = static_cast<T>(sum_g / count), mgx = static_cast<T>(sum_gx / count);
    for (int b = 0; b < batch; ++b) {
      const T* p = x.data() + b * x.stride0() + c * spatial;
      const T* g = gy.data() + b * gy.stride0() + c * spatial;
      T* q = gx.data() + b * gx.stride0() + c * spatial;
      if (mode == Mode::Train) {
        for (std::size_t i = 0; i < spatial; ++i) q[i] = k * (g[i] - mg - (p[i] - mean) * invstd * mgx);
      } else {
        for (std::size_t i = 0; i < spatial; ++i) q[i] = k * g[i];
      }
    }
  }
  return gx;
}

// ----------------------------------------------------------- ConvBlock

template <class T>
BasicConvBlock<T>::BasicConvBlock(const std::string& name, ConvSpec spec)
    : conv(name + ".conv", spec), bn(name + ".bn", spec.out_channels) {}

template <class T>
const BasicTensor<T>& BasicConvBlock<T>::forward(const BasicTensor<T>& x, Mode mode, Tape& tape) {
  tape.pre = conv.forward(x);
  tape.out = bn.forward(tape.pre, mode, tape.bn);
  for (T& v : tape.out.values()) v = std::max(v, T(0));
  return tape.out;
}

template <class T>
void BasicConvBlock<T>::backward(const BasicTensor<T>& x, const Tape& tape, const BasicTensor<T>& gy, Mode mode,
                                 BasicTensor<T>* gx, bool param_grads) {
  BasicTensor<T> g(gy.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = tape.out[i] > T(0) ? gy[i] : T(0);
  const BasicTensor<T> gpre = bn.backward(tape.pre, g, tape.bn, mode, param_grads);
  conv.backward(x, gpre, gx, param_grads);
}

template <class T>
BasicBlockStack<T>::BasicBlockStack(const std::string& name, const std::vector<ConvSpec>& specs, int first_index) {
  for (std::size_t i = 0; i < specs.size(); ++i)
    blocks.emplace_back(name + "." + std::to_string(first_index + i), specs[i]);
}

template <class T>
const BasicTensor<T>& BasicBlockStack<T>::forward(const BasicTensor<T>& x, Mode mode, Tape& tape) {
  tape.resize(blocks.size());
  const BasicTensor<T>* in = &x;
  for (std::size_t i = 0; i < blocks.size(); ++i) in = &blocks[i].forward(*in, mode, tape[i]);
  return *in;
}

template <class T>
void BasicBlockStack<T>::backward(const BasicTensor<T>& x, const Tape& tape, const BasicTensor<T>& gy, Mode mode,
                                  BasicTensor<T>* gx, bool param_grads) {
  BasicTensor<T> g = gy;
  for (std::size_t i = blocks.size(); i-- > 0;) {
    const BasicTensor<T>& in = i == 0 ? x : tape[i - 1].out;
    if (i == 0) {
      if (gx || param_grads) blocks[0].backward(in, tape[0], g, mode, gx, param_grads);
    } else {
      BasicTensor<T> gin;
      blocks[i].backward(in, tape[i], g, mode, &gin, param_grads);
      g = std::move(gin);
    }
  }
}

// -------------------------------------------------------------- Linear

template <class T>
BasicLinear<T>::BasicLinear(std::string name, int in, int out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

template <class T>
void BasicLinear<T>::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features()));
  uniform_init(weight.value, bound, rng);
  uniform_init(bias.value, bound, rng);
}

template <class T>
BasicTensor<T> BasicLinear<T>::forward(const BasicTensor<T>& x) const {
  const int batch = x.dim(0);
  if (x.stride0() != static_cast<std::size_t>(in_features()))
    throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_features()) + " features");
  BasicTensor<T> y({batch, out_features()});
  gemm(false, true, batch, out_features(), in_features(), x.data(), weight.value.data(), y.data(), false);
  for (int b = 0; b < batch; ++b)
    for (int o = 0; o < out_features(); ++o) y[b * out_features() + o] += bias.value[o];
  return y;
}

template <class T>
void BasicLinear<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& gy, BasicTensor<T>* gx, bool param_grads) {
  const int batch = x.dim(0), in = in_features(), out = out_features();
  if (param_grads) {
    gemm(true, false, out, in, batch, gy.data(), x.data(), weight.grad.data(), true);
    for (int b = 0; b < batch; ++b)
      for (int o = 0; o < out; ++o) bias.grad[o] += gy[b * out + o];
  }
  if (gx) {
    *gx = BasicTensor<T>(x.shape());
    gemm(false, false, batch, in, out, gy.data(), weight.value.data(), gx->data(), false);
  }
}

// ------------------------------------------------------- AngularFusion

namespace {

constexpr Dims3 kK2{1, 3, 3};
constexpr Dims3 kS1{1, 1, 1};
constexpr Dims3 kP2{0, 1, 1};

// Rearranges weights into two (9 x C*9) matrices: rows (drow, dcol), columns (channel, dy, dx).
template <class T>
void split_fusion_weights(const BasicTensor<T>& w, int channels, std::vector<T>& wr, std::vector<T>& wc) {
  const int cols = channels * 9;
  wr.assign(9 * cols, T(0));
  wc.assign(9 * cols, T(0));
  for (int ch = 0; ch < 2 * channels; ++ch)
    for (int ang = 0; ang < 9; ++ang)
      for (int sp = 0; sp < 9; ++sp) {
        const T v = w[(static_cast<std::size_t>(ch) * 9 + ang) * 9 + sp];
        auto& dst = ch < channels ? wr : wc;
        dst[ang * cols + (ch % channels) * 9 + sp] = v;
      }
}

template <class T>
void merge_fusion_grads(const std::vector<T>& gr, const std::vector<T>& gc, int channels, BasicTensor<T>& gw) {
  const int cols = channels * 9;
  for (int ch = 0; ch < 2 * channels; ++ch)
    for (int ang = 0; ang < 9; ++ang)
      for (int sp = 0; sp < 9; ++sp) {
        const auto& src = ch < channels ? gr : gc;
        gw[(static_cast<std::size_t>(ch) * 9 + ang) * 9 + sp] += src[ang * cols + (ch % channels) * 9 + sp];
      }
}

// Copies angular slice a of a (C, A, H, W) sample into (C, 1, H, W).
template <class T>
void gather_slice(const T* src, int channels, int angular, int hw, int a, T* dst) {
  for (int c = 0; c < channels; ++c)
    std::copy_n(src + (static_cast<std::size_t>(c) * angular + a) * hw, hw, dst + static_cast<std::size_t>(c) * hw);
}

template <class T>
void scatter_slice(const T* src, int channels, int angular, int hw, int a, T* dst) {
  for (int c = 0; c < channels; ++c) {
    const T* s = src + static_cast<std::size_t>(c) * hw;
    T* d = dst + (static_cast<std::size_t>(c) * angular + a) * hw;
    for (int i = 0; i < hw; ++i) d[i] += s[i];
  }
}

}  // namespace

template <class T>
BasicAngularFusion<T>::BasicAngularFusion(std::string name, int channels_per_stack)
    : weight(name + ".weight", {2 * channels_per_stack, 3, 3, 3, 3}),
      bias(name + ".bias", {1}),
      channels_(channels_per_stack) {}

template <class T>
void BasicAngularFusion<T>::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(2.0 * channels_ * 81.0);
  uniform_init(weight.value, bound, rng);
  uniform_init(bias.value, bound, rng);
}

template <class T>
BasicTensor<T> BasicAngularFusion<T>::forward(const BasicTensor<T>& rows, const BasicTensor<T>& cols) const {
  if (rows.shape() != cols.shape() || rows.rank() != 5 || rows.dim(1) != channels_)
    throw std::invalid_argument("angular fusion expects matching (B, C, A, H, W) stacks");
  const int batch = rows.dim(0), A = rows.dim(2), H = rows.dim(3), W = rows.dim(4), hw = H * W;
  const int k = channels_ * 9;
  std::vector<T> wr, wc;
  split_fusion_weights(weight.value, channels_, wr, wc);
  BasicTensor<T> y({batch, A, A, H, W});
  std::vector<T> slice(static_cast<std::size_t>(channels_) * hw), col(static_cast<std::size_t>(k) * hw);
  std::vector<T> pr(static_cast<std::size_t>(A) * 9 * hw), pc(pr.size());
  for (int b = 0; b < batch; ++b) {
    for (int a = 0; a < A; ++a) {
      gather_slice(rows.data() + b * rows.stride0(), channels_, A, hw, a, slice.data());
      im2col(slice.data(), channels_, {1, H, W}, kK2, kS1, kP2, {1, H, W}, col.data());
      gemm(false, false, 9, hw, k, wr.data(), col.data(), pr.data() + static_cast<std::size_t>(a) * 9 * hw, false);
      gather_slice(cols.data() + b * cols.stride0(), channels_, A, hw, a, slice.data());
      im2col(slice.data(), channels_, {1, H, W}, kK2, kS1, kP2, {1, H, W}, col.data());
      gemm(false, false, 9, hw, k, wc.data(), col.data(), pc.data() + static_cast<std::size_t>(a) * 9 * hw, false);
    }
    for (int r = 0; r < A; ++r)
      for (int c = 0; c < A; ++c) {
        T* out = y.data() + b * y.stride0() + (static_cast<std::size_t>(r) * A + c) * hw;
        std::fill_n(out, hw, bias.value[0]);
        for (int dr = 0; dr < 3; ++dr) {
          const int rr = r + dr - 1;
          if (rr < 0 || rr >= A) continue;
          for (int dc = 0; dc < 3; ++dc) {
            const int cc = c + dc - 1;
            if (cc < 0 || cc >= A) continue;
            const T* a1 = pr.data() + (static_cast<std::size_t>(rr) * 9 + dr * 3 + dc) * hw;
            const T* a2 = pc.data() + (static_cast<std::size_t>(cc) * 9 + dr * 3 + dc) * hw;
            for (int i = 0; i < hw; ++i) out[i] += a1[i] + a2[i];
          }
        }
      }
  }
  return y;
}

template <class T>
void BasicAngularFusion<T>::backward(const BasicTensor<T>& rows, const BasicTensor<T>& cols, const BasicTensor<T>& gy,
                                     BasicTensor<T>* g_rows, BasicTensor<T>* g_cols, bool param_grads) {
  const int batch = rows.dim(0), A = rows.dim(2), H = rows.dim(3), W = rows.dim(4), hw = H * W;
  const int k = channels_ * 9;
  std::vector<T> wr, wc;
  split_fusion_weights(weight.value, channels_, wr, wc);
  std::vector<T> gwr(wr.size(), T(0)), gwc(wc.size(), T(0));
  if (g_rows) *g_rows = BasicTensor<T>(rows.shape());
  if (g_cols) *g_cols = BasicTensor<T>(cols.shape());
  std::vector<T> slice(static_cast<std::size_t>(channels_) * hw), col(static_cast<std::size_t>(k) * hw);
  std::vector<T> gpr(static_cast<std::size_t>(A) * 9 * hw), gpc(gpr.size());
  for (int b = 0; b < batch; ++b) {
    std::fill(gpr.begin(), gpr.end(), T(0));
    std::fill(gpc.begin(), gpc.end(), T(0));
    double gb = 0.0;
    for (int r = 0; r < A; ++r)
      for (int c = 0; c < A; ++c) {
        const T* g = gy.data() + b * gy.stride0() + (static_cast<std::size_t>(r) * A + c) * hw;
        for (int i = 0; i < hw; ++i) gb += g[i];
        for (int dr = 0; dr < 3; ++dr) {
          const int rr = r + dr - 1;
          if (rr < 0 || rr >= A) continue;
          for (int dc = 0; dc < 3; ++dc) {
            const int cc = c + dc - 1;
            if (cc < 0 || cc >= A) continue;
            T* a1 = gpr.data() + (static_cast<std::size_t>(rr) * 9 + dr * 3 + dc) * hw;
            T* a2 = gpc.data() + (static_cast<std::size_t>(cc) * 9 + dr * 3 + dc) * hw;
            for (int i = 0; i < hw; ++i) {
              a1[i] += g[i];
              a2[i] += g[i];
            }
          }
        }
      }
    if (param_grads) bias.grad[0] += static_cast<T>(gb);
    for (int side = 0; side < 2; ++side) {
      const BasicTensor<T>& in = side == 0 ? rows : cols;
      BasicTensor<T>* gin = side == 0 ? g_rows : g_cols;
      const std::vector<T>& wm = side == 0 ? wr : wc;
      std::vector<T>& gw = side == 0 ? gwr : gwc;
      const std::vector<T>& gp = side == 0 ? gpr : gpc;
      for (int a = 0; a < A; ++a) {
        const T* gpa = gp.data() + static_cast<std::size_t>(a) * 9 * hw;
        if (param_grads) {
          gather_slice(in.data() + b * in.stride0(), channels_, A, hw, a, slice.data());
          im2col(slice.data(), channels_, {1, H, W}, kK2, kS1, kP2, {1, H, W}, col.data());
          gemm(false, true, 9, k, hw, gpa, col.data(), gw.data(), true);
        }
        if (gin) {
          gemm(true, false, k, hw, 9, wm.data(), gpa, col.data(), false);
          std::fill(slice.begin(), slice.end(), T(0));
          col2im(col.data(), channels_, {1, H, W}, kK2, kS1, kP2, {1, H, W}, slice.data());
          scatter_slice(slice.data(), channels_, A, hw, a, gin->data() + b * gin->stride0());
        }
      }
    }
  }
  if (param_grads) merge_fusion_grads(gwr, gwc, channels_, weight.grad);
}

#define LFGEN_INSTANTIATE(T)                                                                            \
  template void gemm<T>(bool, bool, int, int, int, const T*, const T*, T*, bool);                       \
  template void im2col<T>(const T*, int, Dims3, Dims3, Dims3, Dims3, Dims3, T*);                        \
  template void col2im<T>(const T*, int, Dims3, Dims3, Dims3, Dims3, Dims3, T*);                        \
  template class BasicConv<T>;                                                                          \
  template class BasicBatchNorm<T>;                                                                     \
  template class BasicConvBlock<T>;                                                                     \
  template class BasicBlockStack<T>;                                                                    \
  template class BasicLinear<T>;                                                                        \
  template class BasicAngularFusion<T>;
LFGEN_INSTANTIATE(float)
LFGEN_INSTANTIATE(double)
#undef LFGEN_INSTANTIATE

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<Param*> params, Options options) : params_(std::move(params)), options_(options) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->grad.zero();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(options_.beta1), b2 = static_cast<float>(options_.beta2);
  const float step = static_cast<float>(options_.lr / bc1);
  const float root_bc2 = static_cast<float>(std::sqrt(bc2));
  const float eps = static_cast<float>(options_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    float* p = params_[i]->value.data();
    const float* g = params_[i]->grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const std::size_t n = params_[i]->value.size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1 - b1) * g[j];
      v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j]) / root_bc2 + eps);
    }
  }
}

}  // namespace lfgen::nn
