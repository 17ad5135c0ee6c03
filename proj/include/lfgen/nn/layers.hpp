#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lfgen/nn/tensor.hpp"

namespace lfgen::nn {

enum class Mode { Train, Eval };

using Dims3 = std::array<int, 3>;

/// C (M x N) = op(A) * op(B) (+ C when accumulate), all row-major and contiguous.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

/// Column buffer for a kernel sliding over an image of `channels` x `image`
/// producing `grid` positions. Rows index (channel, kd, kh, kw).
template <class T>
void im2col(const T* image, int channels, Dims3 image_dims, Dims3 kernel, Dims3 stride, Dims3 pad,
            Dims3 grid, T* col);
/// Scatter-add adjoint of im2col.
template <class T>
void col2im(const T* col, int channels, Dims3 image_dims, Dims3 kernel, Dims3 stride, Dims3 pad,
            Dims3 grid, T* image);

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  Dims3 kernel{1, 3, 3};
  Dims3 stride{1, 1, 1};
  Dims3 pad{0, 1, 1};
  bool transposed = false;
};

/// 3D convolution or transposed convolution over (B, C, D, H, W) with bias.
/// Regular weights are (Cout, Cin, kd, kh, kw); transposed weights are (Cin, Cout, kd, kh, kw).
template <class T>
class BasicConv {
 public:
  BasicConv() = default;
  BasicConv(std::string name, ConvSpec spec);

  const ConvSpec& spec() const { return spec_; }
  Dims3 output_dims(Dims3 in) const;
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  /// Accumulates parameter gradients when param_grads is set; writes the input gradient when gx is non-null.
  void backward(const BasicTensor<T>& x, const BasicTensor<T>& gy, BasicTensor<T>* gx, bool param_grads);
  void init(std::mt19937_64& rng);

  BasicParam<T> weight;
  BasicParam<T> bias;

 private:
  int kernel_volume() const { return spec_.kernel[0] * spec_.kernel[1] * spec_.kernel[2]; }
  ConvSpec spec_;
};

/// Per-channel batch normalisation over (B, C, ...).
template <class T>
class BasicBatchNorm {
 public:
  struct Cache {
    std::vector<T> mean;
    std::vector<T> invstd;
  };

  BasicBatchNorm() = default;
  BasicBatchNorm(std::string name, int channels);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Cache& cache);
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& gy, const Cache& cache, Mode mode,
                          bool param_grads);

  BasicParam<T> gamma;
  BasicParam<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  std::string name;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

/// Convolution followed by batch norm and ReLU.
template <class T>
class BasicConvBlock {
 public:
  struct Tape {
    BasicTensor<T> pre;  // convolution output
    BasicTensor<T> out;
    typename BasicBatchNorm<T>::Cache bn;
  };

  BasicConvBlock() = default;
  BasicConvBlock(const std::string& name, ConvSpec spec);

  const BasicTensor<T>& forward(const BasicTensor<T>& x, Mode mode, Tape& tape);
  void backward(const BasicTensor<T>& x, const Tape& tape, const BasicTensor<T>& gy, Mode mode, BasicTensor<T>* gx,
                bool param_grads);

  BasicConv<T> conv;
  BasicBatchNorm<T> bn;
};

/// Chain of ConvBlocks with a shared tape.
template <class T>
class BasicBlockStack {
 public:
  using Tape = std::vector<typename BasicConvBlock<T>::Tape>;

  BasicBlockStack() = default;
  /// Blocks are named <name>.<first_index>, <name>.<first_index + 1>, ...
  BasicBlockStack(const std::string& name, const std::vector<ConvSpec>& specs, int first_index = 0);

  const BasicTensor<T>& forward(const BasicTensor<T>& x, Mode mode, Tape& tape);
  void backward(const BasicTensor<T>& x, const Tape& tape, const BasicTensor<T>& gy, Mode mode, BasicTensor<T>* gx,
                bool param_grads);

  std::vector<BasicConvBlock<T>> blocks;
};

/// y = x W^T + b over (B, in).
template <class T>
class BasicLinear {
 public:
  BasicLinear() = default;
  BasicLinear(std::string name, int in, int out);

  int in_features() const { return weight.value.dim(1); }
  int out_features() const { return weight.value.dim(0); }
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  void backward(const BasicTensor<T>& x, const BasicTensor<T>& gy, BasicTensor<T>* gx, bool param_grads);
  void init(std::mt19937_64& rng);

  BasicParam<T> weight;
  BasicParam<T> bias;
};

/// 4D convolution (kernel 3^4, padding 1, single output channel, with bias) over a
/// volume whose channels are two angular feature stacks: the first broadcast along
/// the column axis, the second along the row axis. Row features are (B, C, A, H, W)
/// indexed by row; column features likewise indexed by column. Output is (B, A, A, H, W).
/// Weights are (2C, 3, 3, 3, 3) ordered (channel, drow, dcol, dy, dx).
template <class T>
class BasicAngularFusion {
 public:
  BasicAngularFusion() = default;
  BasicAngularFusion(std::string name, int channels_per_stack);

  int channels() const { return channels_; }
  BasicTensor<T> forward(const BasicTensor<T>& rows, const BasicTensor<T>& cols) const;
  void backward(const BasicTensor<T>& rows, const BasicTensor<T>& cols, const BasicTensor<T>& gy,
                BasicTensor<T>* g_rows, BasicTensor<T>* g_cols, bool param_grads);
  void init(std::mt19937_64& rng);

  BasicParam<T> weight;
  BasicParam<T> bias;

 private:
  int channels_ = 0;
};

using Conv = BasicConv<float>;
using BatchNorm = BasicBatchNorm<float>;
using ConvBlock = BasicConvBlock<float>;
using BlockStack = BasicBlockStack<float>;
using Linear = BasicLinear<float>;
using AngularFusion = BasicAngularFusion<float>;

/// Adam with per-parameter moments.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(std::vector<Param*> params, Options options);

  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::int64_t steps() const { return t_; }

  // State access for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  Options options_;
  std::int64_t t_ = 0;
};

}  // namespace lfgen::nn
