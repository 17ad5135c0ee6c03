#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lfgen/nn/layers.hpp"
#include "lfgen/nn/tensor.hpp"
#include "lfgen/patches.hpp"

namespace lfgen {

/// Central-view-conditioned autoencoder configuration. The convolution
/// schedules are fixed; only the angular size and the latent/loss settings vary.
struct CvaeConfig {
  int angular = 5;  // N_v, 5 or 7
  int latent_dim = 160;
  double prior_variance = 2.0;
  double lambda_mmd = 100.0;
  int fc_hidden = 1024;

  // Feature extractor: 2D convolutions, kernel 3, padding 1.
  static constexpr std::array<int, 7> kFeatureChannels = {1, 6, 10, 20, 40, 50, 60};
  static constexpr std::array<int, 6> kFeatureStrides = {1, 2, 1, 1, 2, 1};
  static constexpr int kCvf1Layers = 3;  // CVF1 is the output of the third layer
  // Enc1 / Enc2: 3D convolutions from N_v input channels.
  static constexpr std::array<int, 3> kEncChannels = {20, 40, 60};
  static constexpr std::array<int, 4> kEnc3Channels = {140, 200, 250, 300};
  static constexpr std::array<int, 4> kDec1Channels = {300, 250, 200, 120};
  static constexpr std::array<int, 4> kDec23Channels = {140, 80, 40, 20};
  static constexpr std::array<int, 3> kStrides = {1, 2, 1};  // shared by Enc*/Dec* spatial axes

  static constexpr int kCvf1Channels = 20;
  static constexpr int kCvf1Size = 13;
  static constexpr int kCvf2Channels = 60;
  static constexpr int kCvf2Size = 7;

  /// Angular-depth padding of the first Enc1/Enc2 and Dec2/Dec3 layer.
  int first_depth_pad() const { return angular == 5 ? 1 : 0; }
  int encoder_features() const { return (kEnc3Channels.back() + kCvf2Channels) * kCvf2Size * kCvf2Size; }
  int generator_inputs() const { return latent_dim + kCvf2Channels * kCvf2Size * kCvf2Size; }
  int generator_head() const { return kDec1Channels.front() * kCvf2Size * kCvf2Size; }
  /// MMD kernel constant 2 * d * prior variance.
  double mmd_scale() const { return 2.0 * latent_dim * prior_variance; }

  void validate() const;
  /// Canonical text form; also stored in weight files.
  std::string describe() const;
  static CvaeConfig parse(const std::string& description);
  /// FNV-1a 64 of describe().
  std::uint64_t fingerprint() const;

  bool operator==(const CvaeConfig&) const = default;
};

/// Feature maps of a batch of central views: CVF1 (B, 20, 1, 13, 13) and CVF2 (B, 60, 1, 7, 7).
template <class T>
struct BasicCentralViewFeatures {
  nn::BasicTensor<T> cvf1;
  nn::BasicTensor<T> cvf2;
};
using CentralViewFeatures = BasicCentralViewFeatures<float>;

/// Batched tensors: patches are (B, N_v, N_v, 25, 25), central views (B, 1, 1, 25, 25),
/// latent codes (B, latent_dim).
nn::Tensor pack_patches(const std::vector<LFPatch>& patches);
nn::Tensor pack_central_views(const std::vector<LFPatch>& patches);
nn::Tensor pack_central_view(std::span<const float> central);
std::vector<LFPatch> unpack_patches(const nn::Tensor& t);
LFPatch unpack_patch(const nn::Tensor& t, int index);

/// The model over scalar type T. Training and reconstruction use float; the
/// double instantiation serves precision-sensitive checks.
template <class T>
class BasicCvae {
 public:
  using Tensor = nn::BasicTensor<T>;
  using Stack = nn::BasicBlockStack<T>;

  struct FeatureTape {
    typename Stack::Tape low;   // layers producing CVF1
    typename Stack::Tape high;  // layers producing CVF2
    const Tensor& cvf1() const { return low.back().out; }
    const Tensor& cvf2() const { return high.back().out; }
  };
  struct EncoderTape {
    Tensor swapped;  // Enc2 input
    typename Stack::Tape enc1, enc2, enc3;
    Tensor enc3_in, fc_in, hidden;
  };
  struct GeneratorTape {
    Tensor fc_in, hidden, head, dec23_in;
    typename Stack::Tape dec1, dec2, dec3;
  };
  struct FeatureGrads {
    Tensor cvf1;
    Tensor cvf2;
  };

  explicit BasicCvae(const CvaeConfig& config, std::uint64_t init_seed = 0);

  const CvaeConfig& config() const { return config_; }

  // Differentiable batched passes. Train mode uses batch statistics and
  // updates the running statistics of every batch norm layer.
  void features_forward(const Tensor& central, nn::Mode mode, FeatureTape& tape);
  Tensor encoder_forward(const Tensor& patches, const FeatureTape& features, nn::Mode mode, EncoderTape& tape);
  Tensor generator_forward(const Tensor& z, const FeatureTape& features, nn::Mode mode, GeneratorTape& tape);

  FeatureGrads zero_feature_grads(int batch) const;
  /// Accumulates into g_features; writes g_z if non-null.
  void generator_backward(const Tensor& z, const FeatureTape& features, const GeneratorTape& tape,
                          const Tensor& g_out, nn::Mode mode, Tensor* g_z, FeatureGrads& g_features,
                          bool param_grads);
  void encoder_backward(const Tensor& patches, const FeatureTape& features, const EncoderTape& tape,
                        const Tensor& g_z, nn::Mode mode, FeatureGrads& g_features, bool param_grads);
  void features_backward(const Tensor& central, const FeatureTape& tape, const FeatureGrads& g_features,
                         nn::Mode mode, Tensor* g_central, bool param_grads);

  // Inference in eval mode.
  BasicCentralViewFeatures<T> extract_cvf(const Tensor& central);
  Tensor encode(const Tensor& patches);
  Tensor generate(const Tensor& z, const Tensor& central);
  std::vector<float> encode(const LFPatch& patch);
  LFPatch generate(std::span<const float> z, std::span<const float> central);

  std::vector<nn::BasicParam<T>*> parameters();
  /// Parameters and batch-norm running statistics, keyed by layer name.
  std::vector<std::pair<std::string, Tensor*>> state();
  std::size_t parameter_count();
  void zero_grad();
  std::vector<nn::BasicBatchNorm<T>*> batch_norms();

 private:
  void check_patches(const Tensor& patches) const;
  void check_central(const Tensor& central) const;

  CvaeConfig config_;
  Stack fe_low_, fe_high_;
  Stack enc1_, enc2_, enc3_;
  nn::BasicLinear<T> enc_fc1_, enc_fc2_;
  nn::BasicLinear<T> gen_fc1_, gen_fc2_;
  Stack dec1_, dec2_, dec3_;
  nn::BasicAngularFusion<T> fusion_;
};

using Cvae = BasicCvae<float>;
using CvaeD = BasicCvae<double>;

/// Copy of a model with every parameter and running statistic converted to To.
template <class To, class From>
BasicCvae<To> cvae_cast(BasicCvae<From>& model);

/// Biased V-statistic MMD^2 with the inverse multiquadric kernel
/// k(x, y) = C / (C + |x - y|^2). Rows are samples. When grad_a is given it
/// receives d mmd / d a. Throws if either batch has fewer than two rows.
double mmd(const nn::Tensor& a, const nn::Tensor& b, double kernel_scale, nn::Tensor* grad_a = nullptr);
/// Same estimator with C = 2 * dim * prior_variance.
double mmd(const std::vector<std::vector<float>>& a, const std::vector<std::vector<float>>& b,
           double prior_variance = 2.0);

/// n iid draws from N(0, variance * I_dim) as an (n, dim) tensor.
nn::Tensor sample_prior(int n, std::uint64_t seed, int dim = 160, double variance = 2.0);

struct LossTerms {
  double total = 0.0;
  double mse = 0.0;
  double mmd = 0.0;
};

/// Loss terms for one batch against the given prior sample. With `backward`
/// set, parameter gradients are accumulated into the model.
LossTerms loss_and_gradients(Cvae& model, const nn::Tensor& patches, const nn::Tensor& prior, nn::Mode mode,
                             bool backward);
/// total = mse + lambda * mmd with a fresh prior sample drawn under `seed`.
LossTerms loss_batch(Cvae& model, const std::vector<LFPatch>& patches, std::uint64_t seed,
                     nn::Mode mode = nn::Mode::Eval);

/// Replaces every batch-norm running statistic by the statistics of one
/// train-mode pass over `patches` (encoder codes feed the generator).
/// Parameters are left untouched.
template <class T>
void calibrate_batch_norm(BasicCvae<T>& model, const nn::BasicTensor<T>& patches);

void save_weights(Cvae& model, const std::filesystem::path& path);
/// Throws DataError when the file was written for a different configuration.
Cvae load_weights(const std::filesystem::path& path, const CvaeConfig& config);
/// Configuration recorded in a weight or checkpoint file.
CvaeConfig read_weights_config(const std::filesystem::path& path);
/// Copies named tensors into the model; every model tensor must be present.
void assign_state(Cvae& model, const std::vector<std::pair<std::string, nn::Tensor>>& tensors);

}  // namespace lfgen
