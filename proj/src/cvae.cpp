#include "lfgen/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "lfgen/error.hpp"
#include "lfgen/nn/serialize.hpp"

namespace lfgen {

using nn::ConvSpec;
using nn::Mode;
using nn::Tensor;

// ------------------------------------------------------------------ config

void CvaeConfig::validate() const {
  if (angular != 5 && angular != 7)
    throw UsageError("angular resolution must be 5 or 7, got " + std::to_string(angular));
  if (latent_dim <= 0) throw UsageError("latent dimension must be positive");
  if (!(prior_variance > 0.0)) throw UsageError("prior variance must be positive");
  if (!(lambda_mmd >= 0.0)) throw UsageError("MMD weight must be non-negative");
  if (fc_hidden <= 0) throw UsageError("fully connected width must be positive");
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string CvaeConfig::describe() const {
  return "arch=cvae-v1;angular=" + std::to_string(angular) + ";latent_dim=" + std::to_string(latent_dim) +
         ";prior_variance=" + format_double(prior_variance) + ";lambda_mmd=" + format_double(lambda_mmd) +
         ";fc_hidden=" + std::to_string(fc_hidden);
}

CvaeConfig CvaeConfig::parse(const std::string& description) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(description);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("malformed model description '" + description + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  if (kv["arch"] != "cvae-v1") throw DataError("unknown model architecture '" + kv["arch"] + "'");
  CvaeConfig c;
  try {
    c.angular = std::stoi(kv.at("angular"));
    c.latent_dim = std::stoi(kv.at("latent_dim"));
    c.prior_variance = std::stod(kv.at("prior_variance"));
    c.lambda_mmd = std::stod(kv.at("lambda_mmd"));
    c.fc_hidden = std::stoi(kv.at("fc_hidden"));
  } catch (const std::exception&) {
    throw DataError("malformed model description '" + description + "'");
  }
  return c;
}

std::uint64_t CvaeConfig::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : describe()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ----------------------------------------------------------------- packing

Tensor pack_patches(const std::vector<LFPatch>& patches) {
  if (patches.empty()) throw DataError("empty patch batch");
  const int a = patches.front().angular;
  Tensor t({static_cast<int>(patches.size()), a, a, kPatchSize, kPatchSize});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].angular != a) throw DataError("patches in a batch must share the angular size");
    std::copy(patches[i].data.begin(), patches[i].data.end(), t.data() + i * t.stride0());
  }
  return t;
}

namespace {

template <class T>
nn::BasicTensor<T> central_views_of(const nn::BasicTensor<T>& patches) {
  const int b = patches.dim(0), a = patches.dim(1);
  const std::size_t vs = LFPatch::view_size();
  nn::BasicTensor<T> t({b, 1, 1, kPatchSize, kPatchSize});
  const std::size_t offset = (static_cast<std::size_t>(a / 2) * a + a / 2) * vs;
  for (int i = 0; i < b; ++i) std::copy_n(patches.data() + i * patches.stride0() + offset, vs, t.data() + i * vs);
  return t;
}

}  // namespace

Tensor pack_central_views(const std::vector<LFPatch>& patches) { return central_views_of(pack_patches(patches)); }

Tensor pack_central_view(std::span<const float> central) {
  if (central.size() != LFPatch::view_size()) throw DataError("central patch must be 25x25");
  return Tensor({1, 1, 1, kPatchSize, kPatchSize}, std::vector<float>(central.begin(), central.end()));
}

LFPatch unpack_patch(const Tensor& t, int index) {
  LFPatch p(t.dim(1));
  std::copy_n(t.data() + index * t.stride0(), t.stride0(), p.data.begin());
  return p;
}

std::vector<LFPatch> unpack_patches(const Tensor& t) {
  std::vector<LFPatch> out;
  for (int i = 0; i < t.dim(0); ++i) out.push_back(unpack_patch(t, i));
  return out;
}

// ------------------------------------------------------------------- model

namespace {

ConvSpec conv2d(int cin, int cout, int stride, bool transposed = false) {
  return {cin, cout, {1, 3, 3}, {1, stride, stride}, {0, 1, 1}, transposed};
}

ConvSpec conv3d(int cin, int cout, int stride, int depth_pad, bool transposed = false) {
  return {cin, cout, {3, 3, 3}, {1, stride, stride}, {depth_pad, 1, 1}, transposed};
}

std::vector<ConvSpec> feature_specs(int first, int last) {
  std::vector<ConvSpec> s;
  for (int i = first; i < last; ++i)
    s.push_back(conv2d(CvaeConfig::kFeatureChannels[i], CvaeConfig::kFeatureChannels[i + 1],
                       CvaeConfig::kFeatureStrides[i]));
  return s;
}

std::vector<ConvSpec> encoder3d_specs(const CvaeConfig& c) {
  const auto& ch = CvaeConfig::kEncChannels;
  return {conv3d(c.angular, ch[0], CvaeConfig::kStrides[0], c.first_depth_pad()),
          conv3d(ch[0], ch[1], CvaeConfig::kStrides[1], 0), conv3d(ch[1], ch[2], CvaeConfig::kStrides[2], 0)};
}

std::vector<ConvSpec> chain2d(const std::array<int, 4>& ch, bool transposed) {
  std::vector<ConvSpec> s;
  for (int i = 0; i < 3; ++i) s.push_back(conv2d(ch[i], ch[i + 1], CvaeConfig::kStrides[i], transposed));
  return s;
}

std::vector<ConvSpec> decoder3d_specs(const CvaeConfig& c) {
  const auto& ch = CvaeConfig::kDec23Channels;
  std::vector<ConvSpec> s;
  for (int i = 0; i < 3; ++i)
    s.push_back(conv3d(ch[i], ch[i + 1], CvaeConfig::kStrides[i], i == 0 ? c.first_depth_pad() : 0, true));
  return s;
}

template <class T>
void init_stack(nn::BasicBlockStack<T>& s, std::mt19937_64& rng) {
  for (auto& b : s.blocks) b.conv.init(rng);
}

template <class T>
void add_scaled(nn::BasicTensor<T>& dst, const nn::BasicTensor<T>& src, int c0) {
  // dst (B, C, ...) += channels [c0, c0 + dst.C) of src
  const int b = dst.dim(0);
  const std::size_t inner = dst.stride0() / dst.dim(1);
  for (int n = 0; n < b; ++n) {
    T* d = dst.data() + n * dst.stride0();
    const T* s = src.data() + n * src.stride0() + c0 * inner;
    for (std::size_t i = 0; i < dst.stride0(); ++i) d[i] += s[i];
  }
}

}  // namespace

template <class T>
BasicCvae<T>::BasicCvae(const CvaeConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const int f = CvaeConfig::kCvf1Layers;
  fe_low_ = Stack("fe", feature_specs(0, f), 0);
  fe_high_ = Stack("fe", feature_specs(f, 6), f);
  enc1_ = Stack("enc1", encoder3d_specs(config_));
  enc2_ = Stack("enc2", encoder3d_specs(config_));
  enc3_ = Stack("enc3", chain2d(CvaeConfig::kEnc3Channels, false));
  enc_fc1_ = nn::BasicLinear<T>("enc_fc1", config_.encoder_features(), config_.fc_hidden);
  enc_fc2_ = nn::BasicLinear<T>("enc_fc2", config_.fc_hidden, config_.latent_dim);
  gen_fc1_ = nn::BasicLinear<T>("gen_fc1", config_.generator_inputs(), config_.fc_hidden);
  gen_fc2_ = nn::BasicLinear<T>("gen_fc2", config_.fc_hidden, config_.generator_head());
  dec1_ = Stack("dec1", chain2d(CvaeConfig::kDec1Channels, true));
  dec2_ = Stack("dec2", decoder3d_specs(config_));
  dec3_ = Stack("dec3", decoder3d_specs(config_));
  fusion_ = nn::BasicAngularFusion<T>("fusion", CvaeConfig::kDec23Channels.back());

  std::mt19937_64 rng(init_seed);
  for (auto* s : {&fe_low_, &fe_high_, &enc1_, &enc2_, &enc3_}) init_stack(*s, rng);
  enc_fc1_.init(rng);
  enc_fc2_.init(rng);
  gen_fc1_.init(rng);
  gen_fc2_.init(rng);
  for (auto* s : {&dec1_, &dec2_, &dec3_}) init_stack(*s, rng);
  fusion_.init(rng);
}

template <class T>
void BasicCvae<T>::check_patches(const Tensor& patches) const {
  const int a = config_.angular;
  if (patches.rank() != 5 || patches.dim(1) != a || patches.dim(2) != a || patches.dim(3) != kPatchSize ||
      patches.dim(4) != kPatchSize)
    throw DataError("expected patches of shape (B, " + std::to_string(a) + ", " + std::to_string(a) +
                    ", 25, 25), got " + nn::shape_string(patches.shape()));
}

template <class T>
void BasicCvae<T>::check_central(const Tensor& central) const {
  if (central.rank() != 5 || central.dim(1) != 1 || central.dim(2) != 1 || central.dim(3) != kPatchSize ||
      central.dim(4) != kPatchSize)
    throw DataError("expected central views of shape (B, 1, 1, 25, 25), got " + nn::shape_string(central.shape()));
}

template <class T>
void BasicCvae<T>::features_forward(const Tensor& central, Mode mode, FeatureTape& tape) {
  check_central(central);
  const Tensor& cvf1 = fe_low_.forward(central, mode, tape.low);
  fe_high_.forward(cvf1, mode, tape.high);
}

template <class T>
typename BasicCvae<T>::Tensor BasicCvae<T>::encoder_forward(const Tensor& patches, const FeatureTape& features,
                                                            Mode mode, EncoderTape& tape) {
  check_patches(patches);
  const int b = patches.dim(0);
  // Enc1 sees angular rows as channels and columns as depth; Enc2 the transpose.
  const Tensor& e1 = enc1_.forward(patches, mode, tape.enc1);
  tape.swapped = nn::swap_axes12(patches);
  const Tensor& e2 = enc2_.forward(tape.swapped, mode, tape.enc2);
  tape.enc3_in = nn::concat_channels({&e1, &e2, &features.cvf1()});
  const Tensor& e3 = enc3_.forward(tape.enc3_in, mode, tape.enc3);
  tape.fc_in = nn::concat_channels({&e3, &features.cvf2()});
  tape.fc_in.reshape({b, config_.encoder_features()});
  tape.hidden = enc_fc1_.forward(tape.fc_in);
  return enc_fc2_.forward(tape.hidden);
}

template <class T>
typename BasicCvae<T>::Tensor BasicCvae<T>::generator_forward(const Tensor& z, const FeatureTape& features, Mode mode,
                                                              GeneratorTape& tape) {
  const int b = z.dim(0);
  if (z.rank() != 2 || z.dim(1) != config_.latent_dim)
    throw DataError("expected latent codes of shape (B, " + std::to_string(config_.latent_dim) + "), got " +
                    nn::shape_string(z.shape()));
  const Tensor& cvf2 = features.cvf2();
  if (cvf2.dim(0) != b) throw DataError("latent batch does not match central view batch");
  const int flat = static_cast<int>(cvf2.stride0());
  tape.fc_in = Tensor({b, config_.latent_dim + flat});
  for (int n = 0; n < b; ++n) {
    T* dst = tape.fc_in.data() + n * tape.fc_in.stride0();
    std::copy_n(z.data() + n * z.stride0(), config_.latent_dim, dst);
    std::copy_n(cvf2.data() + n * cvf2.stride0(), flat, dst + config_.latent_dim);
  }
  tape.hidden = gen_fc1_.forward(tape.fc_in);
  tape.head = gen_fc2_.forward(tape.hidden);
  tape.head.reshape({b, CvaeConfig::kDec1Channels.front(), 1, CvaeConfig::kCvf2Size, CvaeConfig::kCvf2Size});
  const Tensor& d1 = dec1_.forward(tape.head, mode, tape.dec1);
  tape.dec23_in = nn::concat_channels({&d1, &features.cvf1()});
  const Tensor& rows = dec2_.forward(tape.dec23_in, mode, tape.dec2);
  const Tensor& cols = dec3_.forward(tape.dec23_in, mode, tape.dec3);
  return fusion_.forward(rows, cols);
}

template <class T>
typename BasicCvae<T>::FeatureGrads BasicCvae<T>::zero_feature_grads(int batch) const {
  return {Tensor({batch, CvaeConfig::kCvf1Channels, 1, CvaeConfig::kCvf1Size, CvaeConfig::kCvf1Size}),
          Tensor({batch, CvaeConfig::kCvf2Channels, 1, CvaeConfig::kCvf2Size, CvaeConfig::kCvf2Size})};
}

template <class T>
void BasicCvae<T>::generator_backward(const Tensor& z, const FeatureTape& features, const GeneratorTape& tape,
                              const Tensor& g_out, Mode mode, Tensor* g_z, FeatureGrads& g_features,
                              bool param_grads) {
  (void)features;
  const int b = z.dim(0);
  Tensor g_rows, g_cols;
  fusion_.backward(tape.dec2.back().out, tape.dec3.back().out, g_out, &g_rows, &g_cols, param_grads);
  Tensor g_in, g_in3;
  dec2_.backward(tape.dec23_in, tape.dec2, g_rows, mode, &g_in, param_grads);
  dec3_.backward(tape.dec23_in, tape.dec3, g_cols, mode, &g_in3, param_grads);
  g_in.add(g_in3);
  const int d1_channels = CvaeConfig::kDec1Channels.back();
  add_scaled(g_features.cvf1, g_in, d1_channels);
  const Tensor g_d1 = nn::slice_channels(g_in, 0, d1_channels);
  Tensor g_head;
  dec1_.backward(tape.head, tape.dec1, g_d1, mode, &g_head, param_grads);
  g_head.reshape({b, config_.generator_head()});
  Tensor g_hidden, g_fc_in;
  gen_fc2_.backward(tape.hidden, g_head, &g_hidden, param_grads);
  gen_fc1_.backward(tape.fc_in, g_hidden, &g_fc_in, param_grads);
  const int flat = static_cast<int>(g_features.cvf2.stride0());
  if (g_z) *g_z = Tensor({b, config_.latent_dim});
  for (int n = 0; n < b; ++n) {
    const T* src = g_fc_in.data() + n * g_fc_in.stride0();
    if (g_z) std::copy_n(src, config_.latent_dim, g_z->data() + n * g_z->stride0());
    T* dst = g_features.cvf2.data() + n * g_features.cvf2.stride0();
    for (int i = 0; i < flat; ++i) dst[i] += src[config_.latent_dim + i];
  }
}

template <class T>
void BasicCvae<T>::encoder_backward(const Tensor& patches, const FeatureTape& features, const EncoderTape& tape,
                            const Tensor& g_z, Mode mode, FeatureGrads& g_features, bool param_grads) {
  (void)features;
  const int b = patches.dim(0);
  Tensor g_hidden, g_fc_in;
  enc_fc2_.backward(tape.hidden, g_z, &g_hidden, param_grads);
  enc_fc1_.backward(tape.fc_in, g_hidden, &g_fc_in, param_grads);
  const int e3_channels = CvaeConfig::kEnc3Channels.back();
  g_fc_in.reshape({b, e3_channels + CvaeConfig::kCvf2Channels, 1, CvaeConfig::kCvf2Size, CvaeConfig::kCvf2Size});
  add_scaled(g_features.cvf2, g_fc_in, e3_channels);
  Tensor g_enc3_in;
  enc3_.backward(tape.enc3_in, tape.enc3, nn::slice_channels(g_fc_in, 0, e3_channels), mode, &g_enc3_in,
                 param_grads);
  const int e = CvaeConfig::kEncChannels.back();
  add_scaled(g_features.cvf1, g_enc3_in, 2 * e);
  enc1_.backward(patches, tape.enc1, nn::slice_channels(g_enc3_in, 0, e), mode, nullptr, param_grads);
  enc2_.backward(tape.swapped, tape.enc2, nn::slice_channels(g_enc3_in, e, e), mode, nullptr, param_grads);
}

template <class T>
void BasicCvae<T>::features_backward(const Tensor& central, const FeatureTape& tape, const FeatureGrads& g_features,
                             Mode mode, Tensor* g_central, bool param_grads) {
  Tensor g_cvf1;
  fe_high_.backward(tape.cvf1(), tape.high, g_features.cvf2, mode, &g_cvf1, param_grads);
  g_cvf1.add(g_features.cvf1);
  fe_low_.backward(central, tape.low, g_cvf1, mode, g_central, param_grads);
}

template <class T>
BasicCentralViewFeatures<T> BasicCvae<T>::extract_cvf(const Tensor& central) {
  FeatureTape tape;
  features_forward(central, Mode::Eval, tape);
  return {tape.cvf1(), tape.cvf2()};
}

template <class T>
typename BasicCvae<T>::Tensor BasicCvae<T>::encode(const Tensor& patches) {
  check_patches(patches);
  FeatureTape ft;
  features_forward(central_views_of(patches), Mode::Eval, ft);
  EncoderTape et;
  return encoder_forward(patches, ft, Mode::Eval, et);
}

template <class T>
typename BasicCvae<T>::Tensor BasicCvae<T>::generate(const Tensor& z, const Tensor& central) {
  FeatureTape ft;
  features_forward(central, Mode::Eval, ft);
  GeneratorTape gt;
  return generator_forward(z, ft, Mode::Eval, gt);
}

template <class T>
std::vector<float> BasicCvae<T>::encode(const LFPatch& patch) {
  if (patch.angular != config_.angular)
    throw DataError("patch angular size " + std::to_string(patch.angular) + " does not match the model (" +
                    std::to_string(config_.angular) + ")");
  const Tensor z = encode(nn::tensor_cast<T>(pack_patches({patch})));
  return {z.values().begin(), z.values().end()};
}

template <class T>
LFPatch BasicCvae<T>::generate(std::span<const float> z, std::span<const float> central) {
  if (static_cast<int>(z.size()) != config_.latent_dim) throw DataError("latent code has the wrong length");
  const Tensor zt({1, config_.latent_dim}, std::vector<T>(z.begin(), z.end()));
  return unpack_patch(nn::tensor_cast<float>(generate(zt, nn::tensor_cast<T>(pack_central_view(central)))), 0);
}

template <class T>
std::vector<std::pair<std::string, typename BasicCvae<T>::Tensor*>> BasicCvae<T>::state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_param = [&](nn::BasicParam<T>& p) { out.emplace_back(p.name, &p.value); };
  auto add_stack = [&](Stack& s) {
    for (auto& b : s.blocks) {
      add_param(b.conv.weight);
      add_param(b.conv.bias);
      add_param(b.bn.gamma);
      add_param(b.bn.beta);
      out.emplace_back(b.bn.name + ".running_mean", &b.bn.running_mean);
      out.emplace_back(b.bn.name + ".running_var", &b.bn.running_var);
    }
  };
  auto add_linear = [&](nn::BasicLinear<T>& l) {
    add_param(l.weight);
    add_param(l.bias);
  };
  for (auto* s : {&fe_low_, &fe_high_, &enc1_, &enc2_, &enc3_}) add_stack(*s);
  for (auto* l : {&enc_fc1_, &enc_fc2_, &gen_fc1_, &gen_fc2_}) add_linear(*l);
  for (auto* s : {&dec1_, &dec2_, &dec3_}) add_stack(*s);
  add_param(fusion_.weight);
  add_param(fusion_.bias);
  return out;
}

template <class T>
std::vector<nn::BasicBatchNorm<T>*> BasicCvae<T>::batch_norms() {
  std::vector<nn::BasicBatchNorm<T>*> out;
  for (auto* s : {&fe_low_, &fe_high_, &enc1_, &enc2_, &enc3_, &dec1_, &dec2_, &dec3_})
    for (auto& b : s->blocks) out.push_back(&b.bn);
  return out;
}

template <class T>
std::vector<nn::BasicParam<T>*> BasicCvae<T>::parameters() {
  std::vector<nn::BasicParam<T>*> out;
  auto add_stack = [&](Stack& s) {
    for (auto& b : s.blocks)
      for (nn::BasicParam<T>* p : {&b.conv.weight, &b.conv.bias, &b.bn.gamma, &b.bn.beta}) out.push_back(p);
  };
  for (auto* s : {&fe_low_, &fe_high_, &enc1_, &enc2_, &enc3_}) add_stack(*s);
  for (auto* l : {&enc_fc1_, &enc_fc2_, &gen_fc1_, &gen_fc2_}) {
    out.push_back(&l->weight);
    out.push_back(&l->bias);
  }
  for (auto* s : {&dec1_, &dec2_, &dec3_}) add_stack(*s);
  out.push_back(&fusion_.weight);
  out.push_back(&fusion_.bias);
  return out;
}

template <class T>
std::size_t BasicCvae<T>::parameter_count() {
  std::size_t n = 0;
  for (nn::BasicParam<T>* p : parameters()) n += p->value.size();
  return n;
}

template <class T>
void BasicCvae<T>::zero_grad() {
  for (nn::BasicParam<T>* p : parameters()) p->grad.zero();
}

template <class To, class From>
BasicCvae<To> cvae_cast(BasicCvae<From>& model) {
  BasicCvae<To> out(model.config());
  auto src = model.state();
  auto dst = out.state();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = nn::tensor_cast<To>(*src[i].second);
  return out;
}

template class BasicCvae<float>;
template class BasicCvae<double>;
template CvaeD cvae_cast<double, float>(Cvae&);
template Cvae cvae_cast<float, double>(CvaeD&);

// --------------------------------------------------------------------- MMD

namespace {

double kernel_mean(const float* x, int nx, const float* y, int ny, int d, double c) {
  double s = 0.0;
  for (int i = 0; i < nx; ++i) {
    const float* xi = x + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < ny; ++j) {
      const float* yj = y + static_cast<std::size_t>(j) * d;
      double d2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = static_cast<double>(xi[k]) - yj[k];
        d2 += diff * diff;
      }
      s += c / (c + d2);
    }
  }
  return s / (static_cast<double>(nx) * ny);
}

// Adds scale * sum_j dk(x_i, y_j)/dx_i to g_i for every row i of x.
void kernel_grad(const float* x, int nx, const float* y, int ny, int d, double c, double scale,
                 std::vector<double>& g) {
  std::vector<double> diff(d);
  for (int i = 0; i < nx; ++i) {
    const float* xi = x + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < ny; ++j) {
      const float* yj = y + static_cast<std::size_t>(j) * d;
      double d2 = 0.0;
      for (int k = 0; k < d; ++k) {
        diff[k] = static_cast<double>(xi[k]) - yj[k];
        d2 += diff[k] * diff[k];
      }
      const double w = -2.0 * c / ((c + d2) * (c + d2)) * scale;
      for (int k = 0; k < d; ++k) g[static_cast<std::size_t>(i) * d + k] += w * diff[k];
    }
  }
}

}  // namespace

double mmd(const Tensor& a, const Tensor& b, double kernel_scale, Tensor* grad_a) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw DataError("MMD samples must be (n, d) with equal d");
  if (a.dim(0) < 2 || b.dim(0) < 2) throw DataError("MMD needs at least two samples per batch");
  const int d = a.dim(1);
  // Evaluate in a canonical argument order so that mmd(a, b) == mmd(b, a) bit for bit.
  const bool swap = std::lexicographical_compare(b.values().begin(), b.values().end(), a.values().begin(),
                                                 a.values().end());
  const Tensor& p = swap ? b : a;
  const Tensor& q = swap ? a : b;
  const int np = p.dim(0), nq = q.dim(0);
  const double kpp = kernel_mean(p.data(), np, p.data(), np, d, kernel_scale);
  const double kqq = kernel_mean(q.data(), nq, q.data(), nq, d, kernel_scale);
  const double kpq = kernel_mean(p.data(), np, q.data(), nq, d, kernel_scale);
  const double value = kpp + kqq - 2.0 * kpq;
  if (grad_a) {
    const int n = a.dim(0), m = b.dim(0);
    std::vector<double> g(a.size(), 0.0);
    kernel_grad(a.data(), n, a.data(), n, d, kernel_scale, 2.0 / (static_cast<double>(n) * n), g);
    kernel_grad(a.data(), n, b.data(), m, d, kernel_scale, -2.0 / (static_cast<double>(n) * m), g);
    *grad_a = Tensor(a.shape());
    for (std::size_t i = 0; i < g.size(); ++i) (*grad_a)[i] = static_cast<float>(g[i]);
  }
  return std::max(value, 0.0);
}

double mmd(const std::vector<std::vector<float>>& a, const std::vector<std::vector<float>>& b, double prior_variance) {
  auto to_tensor = [](const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) throw DataError("MMD needs at least two samples per batch");
    const int d = static_cast<int>(rows.front().size());
    Tensor t({static_cast<int>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(rows[i].size()) != d) throw DataError("MMD samples must have equal length");
      std::copy(rows[i].begin(), rows[i].end(), t.data() + i * d);
    }
    return t;
  };
  const Tensor ta = to_tensor(a), tb = to_tensor(b);
  return mmd(ta, tb, 2.0 * ta.dim(1) * prior_variance);
}

Tensor sample_prior(int n, std::uint64_t seed, int dim, double variance) {
  if (n < 1) throw UsageError("prior sample size must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, std::sqrt(variance));
  Tensor t({n, dim});
  for (float& v : t.values()) v = static_cast<float>(d(rng));
  return t;
}

// -------------------------------------------------------------------- loss

LossTerms loss_and_gradients(Cvae& model, const Tensor& patches, const Tensor& prior, Mode mode, bool backward) {
  const int b = patches.dim(0);
  const Tensor central = central_views_of(patches);
  Cvae::FeatureTape ft;
  model.features_forward(central, mode, ft);
  Cvae::EncoderTape et;
  const Tensor z = model.encoder_forward(patches, ft, mode, et);
  Cvae::GeneratorTape gt;
  const Tensor out = model.generator_forward(z, ft, mode, gt);

  LossTerms terms;
  double se = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = static_cast<double>(out[i]) - patches[i];
    se += r * r;
  }
  const double count = static_cast<double>(out.size());
  terms.mse = se / count;
  Tensor g_z_mmd;
  const double lambda = model.config().lambda_mmd;
  terms.mmd = mmd(z, prior, model.config().mmd_scale(), backward ? &g_z_mmd : nullptr);
  terms.total = terms.mse + lambda * terms.mmd;
  if (!std::isfinite(terms.total)) throw NumericError("training loss is not finite");

  if (backward) {
    Tensor g_out(out.shape());
    for (std::size_t i = 0; i < out.size(); ++i) g_out[i] = static_cast<float>(2.0 * (out[i] - patches[i]) / count);
    Cvae::FeatureGrads fg = model.zero_feature_grads(b);
    Tensor g_z;
    model.generator_backward(z, ft, gt, g_out, mode, &g_z, fg, true);
    for (std::size_t i = 0; i < g_z.size(); ++i) g_z[i] += static_cast<float>(lambda) * g_z_mmd[i];
    model.encoder_backward(patches, ft, et, g_z, mode, fg, true);
    model.features_backward(central, ft, fg, mode, nullptr, true);
  }
  return terms;
}

template <class T>
void calibrate_batch_norm(BasicCvae<T>& model, const nn::BasicTensor<T>& patches) {
  const auto bns = model.batch_norms();
  std::vector<T> saved;
  for (auto* bn : bns) {
    saved.push_back(bn->momentum);
    bn->momentum = T(1);
  }
  try {
    typename BasicCvae<T>::FeatureTape ft;
    model.features_forward(central_views_of(patches), Mode::Train, ft);
    typename BasicCvae<T>::EncoderTape et;
    const auto z = model.encoder_forward(patches, ft, Mode::Train, et);
    typename BasicCvae<T>::GeneratorTape gt;
    model.generator_forward(z, ft, Mode::Train, gt);
  } catch (...) {
    for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->momentum = saved[i];
    throw;
  }
  for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->momentum = saved[i];
}

LossTerms loss_batch(Cvae& model, const std::vector<LFPatch>& patches, std::uint64_t seed, Mode mode) {
  if (patches.empty()) throw DataError("empty patch batch");
  const Tensor prior = sample_prior(static_cast<int>(patches.size()), seed, model.config().latent_dim,
                                    model.config().prior_variance);
  return loss_and_gradients(model, pack_patches(patches), prior, mode, false);
}

template void calibrate_batch_norm<float>(Cvae&, const nn::Tensor&);
template void calibrate_batch_norm<double>(CvaeD&, const nn::TensorD&);

// ------------------------------------------------------------- persistence

void save_weights(Cvae& model, const std::filesystem::path& path) {
  nn::TensorFile file;
  file.kind = "weights";
  file.config = model.config().describe();
  file.fingerprint = model.config().fingerprint();
  for (auto& [name, t] : model.state()) file.tensors.emplace_back(name, *t);
  nn::write_tensor_file(path, file);
}

void assign_state(Cvae& model, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  for (auto& [name, dst] : model.state()) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("weight file lacks tensor '" + name + "'");
    if (it->second->shape() != dst->shape())
      throw DataError("tensor '" + name + "' has shape " + nn::shape_string(it->second->shape()) + ", expected " +
                      nn::shape_string(dst->shape()));
    for (float v : it->second->values())
      if (!std::isfinite(v)) throw DataError("tensor '" + name + "' contains non-finite values");
    *dst = *it->second;
  }
}

CvaeConfig read_weights_config(const std::filesystem::path& path) {
  const nn::TensorFile file = nn::read_tensor_file(path);
  CvaeConfig c = CvaeConfig::parse(file.config);
  if (c.fingerprint() != file.fingerprint) throw DataError("weight file " + path.string() + " has a corrupt header");
  return c;
}

Cvae load_weights(const std::filesystem::path& path, const CvaeConfig& config) {
  const nn::TensorFile file = nn::read_tensor_file(path);
  if (file.fingerprint != config.fingerprint())
    throw DataError("weight file " + path.string() + " was written for model '" + file.config +
                    "', not for '" + config.describe() + "'");
  Cvae model(config);
  assign_state(model, file.tensors);
  return model;
}

}  // namespace lfgen
