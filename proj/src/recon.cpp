#include "lfgen/recon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <string>

#include "lfgen/error.hpp"
#include "lfgen/seed.hpp"

namespace lfgen {

namespace {

constexpr std::size_t kView = LFPatch::view_size();

// Loss value; writes d loss / d pred into `grad` when non-empty.
double data_loss_and_grad(DataLoss kind, std::span<const float> obs, std::span<const float> pred,
                          std::span<const float> observed, std::span<float> grad) {
  if (obs.size() != pred.size()) throw DataError("observation and prediction differ in size");
  if (!observed.empty() && observed.size() != obs.size()) throw DataError("observation mask size mismatch");
  std::size_t count = 0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (observed.empty() || observed[i] != 0.0f) ++count;
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0f);
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!observed.empty() && observed[i] == 0.0f) continue;
    const double d = static_cast<double>(pred[i]) - obs[i];
    if (kind == DataLoss::L2) {
      sum += d * d;
      if (!grad.empty()) grad[i] = static_cast<float>(2.0 * d * inv);
    } else {
      sum += std::abs(d);
      if (!grad.empty()) grad[i] = static_cast<float>((d > 0.0) - (d < 0.0)) * static_cast<float>(inv);
    }
  }
  return sum * inv;
}

void check_problem(const Cvae& model, const PatchProblem& p) {
  const FieldShape s = p.op.input_shape();
  if (s.angular != model.config().angular || s.height != kPatchSize || s.width != kPatchSize)
    throw DataError("patch operator does not act on a " + std::to_string(model.config().angular) + "x" +
                    std::to_string(model.config().angular) + "x25x25 patch");
  if (p.obs.size() != p.op.output_size()) throw DataError("patch observation has the wrong size");
  if (p.central.size() != kView) throw DataError("central view must be 25x25");
}

struct PatchState {
  std::vector<float> z, c;
  std::vector<float> mz, vz, mc, vc;
  std::deque<double> recent;  // last window + 1 objectives
  int iterations = 0;
  std::vector<double> trace;
};

// One batched evaluation of objectives and gradients for the patches in `active`.
struct BatchEval {
  std::vector<double> objective;
  std::vector<double> residual;
  nn::Tensor out, g_z, g_c;
};

BatchEval evaluate(Cvae& model, const std::vector<const PatchProblem*>& problems,
                   const std::vector<const std::vector<float>*>& zs, const std::vector<const std::vector<float>*>& cs,
                   DataLoss loss, double tv_weight, bool grad_z, bool grad_c) {
  const int b = static_cast<int>(problems.size());
  const int d = model.config().latent_dim;
  const int a = model.config().angular;
  nn::Tensor z({b, d}), c({b, 1, 1, kPatchSize, kPatchSize});
  for (int i = 0; i < b; ++i) {
    std::memcpy(z.data() + static_cast<std::size_t>(i) * d, zs[i]->data(), d * sizeof(float));
    std::memcpy(c.data() + i * kView, cs[i]->data(), kView * sizeof(float));
  }
  Cvae::FeatureTape ft;
  model.features_forward(c, nn::Mode::Eval, ft);
  Cvae::GeneratorTape gt;
  BatchEval r;
  r.out = model.generator_forward(z, ft, nn::Mode::Eval, gt);
  const std::size_t n = static_cast<std::size_t>(a) * a * kView;
  nn::Tensor g_out(r.out.shape());
  r.objective.resize(b);
  r.residual.resize(b);
  for (int i = 0; i < b; ++i) {
    const PatchProblem& p = *problems[i];
    const std::span<const float> field(r.out.data() + i * n, n);
    const auto pred = p.op.apply(field);
    std::vector<float> g_pred(pred.size());
    r.objective[i] = data_loss_and_grad(loss, p.obs, pred, p.op.pixel_mask(), g_pred);
    r.residual[i] = loss == DataLoss::L2 ? r.objective[i] : data_loss(DataLoss::L2, p.obs, pred, p.op.pixel_mask());
    if (tv_weight > 0.0) r.objective[i] += tv_weight * tv(*cs[i], kPatchSize, kPatchSize);
    if (!std::isfinite(r.objective[i])) throw NumericError("non-finite reconstruction objective");
    if (grad_z || grad_c) p.op.adjoint_into(g_pred, std::span<float>(g_out.data() + i * n, n));
  }
  if (!grad_z && !grad_c) return r;
  auto fg = model.zero_feature_grads(b);
  model.generator_backward(z, ft, gt, g_out, nn::Mode::Eval, &r.g_z, fg, false);
  if (grad_c) {
    model.features_backward(c, ft, fg, nn::Mode::Eval, &r.g_c, false);
    if (tv_weight > 0.0)
      for (int i = 0; i < b; ++i)
        tv_gradient(*cs[i], kPatchSize, kPatchSize, tv_weight, std::span<float>(r.g_c.data() + i * kView, kView));
  }
  return r;
}

void adam_update(std::vector<float>& x, std::vector<float>& m, std::vector<float>& v, const float* g, int t,
                 const SolverOptions& o) {
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  const float b1 = static_cast<float>(o.beta1), b2 = static_cast<float>(o.beta2);
  const float step = static_cast<float>(o.lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
    x[i] -= step * m[i] / (std::sqrt(v[i]) * inv_bc2 + 1e-8f);
  }
}

}  // namespace

double data_loss(DataLoss kind, std::span<const float> obs, std::span<const float> pred,
                 std::span<const float> observed) {
  return data_loss_and_grad(kind, obs, pred, observed, {});
}

double tv(std::span<const float> image, int height, int width) {
  if (image.size() != static_cast<std::size_t>(height) * width) throw DataError("tv image size mismatch");
  double sum = 0.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = image[static_cast<std::size_t>(y) * width + x];
      if (x + 1 < width) sum += std::abs(static_cast<double>(image[static_cast<std::size_t>(y) * width + x + 1]) - v);
      if (y + 1 < height) sum += std::abs(static_cast<double>(image[static_cast<std::size_t>(y + 1) * width + x]) - v);
    }
  return sum;
}

void tv_gradient(std::span<const float> image, int height, int width, double weight, std::span<float> grad) {
  auto sign = [](float d) { return static_cast<float>((d > 0.0f) - (d < 0.0f)); };
  const float w = static_cast<float>(weight);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      if (x + 1 < width) {
        const float s = w * sign(image[i + 1] - image[i]);
        grad[i + 1] += s;
        grad[i] -= s;
      }
      if (y + 1 < height) {
        const std::size_t j = i + static_cast<std::size_t>(width);
        const float s = w * sign(image[j] - image[i]);
        grad[j] += s;
        grad[i] -= s;
      }
    }
}

double patch_objective(Cvae& model, const PatchProblem& problem, std::span<const float> z, DataLoss loss,
                       double tv_weight, std::vector<float>* grad_z, std::vector<float>* grad_c) {
  check_problem(model, problem);
  if (z.size() != static_cast<std::size_t>(model.config().latent_dim))
    throw DataError("latent code has the wrong size");
  const std::vector<float> zv(z.begin(), z.end());
  const BatchEval r = evaluate(model, {&problem}, {&zv}, {&problem.central}, loss, tv_weight, grad_z != nullptr,
                               grad_c != nullptr);
  if (grad_z != nullptr) grad_z->assign(r.g_z.values().begin(), r.g_z.values().end());
  if (grad_c != nullptr) grad_c->assign(r.g_c.values().begin(), r.g_c.values().end());
  return r.objective[0];
}

template <class T>
double measurement_misfit(BasicCvae<T>& model, const MeasurementOperator& op, std::span<const T> obs,
                          std::span<const T> z, std::span<const T> central, std::vector<T>* grad_z,
                          std::vector<T>* grad_c) {
  using Tensor = nn::BasicTensor<T>;
  const int d = model.config().latent_dim;
  const int a = model.config().angular;
  const FieldShape shape = op.input_shape();
  if (shape.angular != a || shape.height != kPatchSize || shape.width != kPatchSize)
    throw DataError("operator does not act on a model patch");
  if (obs.size() != op.output_size()) throw DataError("observation has the wrong size");
  if (z.size() != static_cast<std::size_t>(d)) throw DataError("latent code has the wrong size");
  if (central.size() != kView) throw DataError("central view must be 25x25");
  const Tensor zt({1, d}, std::vector<T>(z.begin(), z.end()));
  const Tensor ct({1, 1, 1, kPatchSize, kPatchSize}, std::vector<T>(central.begin(), central.end()));
  typename BasicCvae<T>::FeatureTape ft;
  model.features_forward(ct, nn::Mode::Eval, ft);
  typename BasicCvae<T>::GeneratorTape gt;
  const Tensor out = model.generator_forward(zt, ft, nn::Mode::Eval, gt);
  std::vector<T> pred(op.output_size());
  op.apply_into(out.values(), std::span<T>(pred));
  double f = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T r = pred[i] - obs[i];
    pred[i] = 2 * r;
    f += static_cast<double>(r) * r;
  }
  if (grad_z != nullptr || grad_c != nullptr) {
    Tensor g_out(out.shape());
    op.adjoint_into(std::span<const T>(pred), g_out.values());
    auto fg = model.zero_feature_grads(1);
    Tensor g_z;
    model.generator_backward(zt, ft, gt, g_out, nn::Mode::Eval, &g_z, fg, false);
    if (grad_z != nullptr) grad_z->assign(g_z.values().begin(), g_z.values().end());
    if (grad_c != nullptr) {
      Tensor g_c;
      model.features_backward(ct, ft, fg, nn::Mode::Eval, &g_c, false);
      grad_c->assign(g_c.values().begin(), g_c.values().end());
    }
  }
  return f;
}

template double measurement_misfit<float>(Cvae&, const MeasurementOperator&, std::span<const float>,
                                          std::span<const float>, std::span<const float>, std::vector<float>*,
                                          std::vector<float>*);
template double measurement_misfit<double>(CvaeD&, const MeasurementOperator&, std::span<const double>,
                                           std::span<const double>, std::span<const double>, std::vector<double>*,
                                           std::vector<double>*);

std::vector<LatentSolution> solve_patches(Cvae& model, const std::vector<PatchProblem>& problems, DataLoss loss,
                                          double tv_weight, bool optimize_central, const SolverOptions& options,
                                          std::uint64_t seed) {
  if (options.max_iterations < 0 || options.window < 1 || options.batch_size < 1 || !(options.lr > 0.0))
    throw UsageError("invalid solver options");
  if (tv_weight < 0.0) throw UsageError("tv weight must be >= 0");
  const int d = model.config().latent_dim;
  const int a = model.config().angular;
  const std::size_t n = static_cast<std::size_t>(a) * a * kView;
  const double tv_used = optimize_central ? tv_weight : 0.0;

  std::vector<PatchState> state(problems.size());
  std::vector<LatentSolution> out(problems.size());
  std::deque<std::size_t> pending;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    check_problem(model, problems[i]);
    const nn::Tensor z0 = sample_prior(1, derive_seed(seed, {i}), d, model.config().prior_variance);
    state[i].z.assign(z0.values().begin(), z0.values().end());
    state[i].c = problems[i].central;
    state[i].mz.assign(d, 0.0f);
    state[i].vz.assign(d, 0.0f);
    if (optimize_central) {
      state[i].mc.assign(kView, 0.0f);
      state[i].vc.assign(kView, 0.0f);
    }
    pending.push_back(i);
  }

  std::vector<std::size_t> active;
  while (!pending.empty() || !active.empty()) {
    while (!pending.empty() && active.size() < static_cast<std::size_t>(options.batch_size)) {
      active.push_back(pending.front());
      pending.pop_front();
    }
    std::vector<const PatchProblem*> ps;
    std::vector<const std::vector<float>*> zs, cs;
    for (std::size_t i : active) {
      ps.push_back(&problems[i]);
      zs.push_back(&state[i].z);
      cs.push_back(&state[i].c);
    }
    const BatchEval r = evaluate(model, ps, zs, cs, loss, tv_used, true, optimize_central);

    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t i = active[k];
      PatchState& s = state[i];
      const double f = r.objective[k];
      if (options.keep_trace) s.trace.push_back(f);
      s.recent.push_back(f);
      if (s.recent.size() > static_cast<std::size_t>(options.window) + 1) s.recent.pop_front();
      bool done = s.iterations >= options.max_iterations;
      if (!done && s.recent.size() == static_cast<std::size_t>(options.window) + 1 && s.recent.front() != 0.0)
        done = std::abs(s.recent.front() - f) / std::abs(s.recent.front()) < options.tolerance;
      if (done) {
        LatentSolution& sol = out[i];
        sol.z = std::move(s.z);
        sol.central = std::move(s.c);
        sol.patch = LFPatch(a);
        std::memcpy(sol.patch.data.data(), r.out.data() + k * n, n * sizeof(float));
        sol.objective = f;
        sol.residual = r.residual[k];
        sol.iterations = s.iterations;
        sol.trace = std::move(s.trace);
        s = PatchState{};
        continue;
      }
      ++s.iterations;
      adam_update(s.z, s.mz, s.vz, r.g_z.data() + k * static_cast<std::size_t>(d), s.iterations, options);
      if (optimize_central) adam_update(s.c, s.mc, s.vc, r.g_c.data() + k * kView, s.iterations, options);
      still.push_back(i);
    }
    active = std::move(still);
  }
  return out;
}

LatentSolution solve_latent(Cvae& model, const PatchProblem& problem, DataLoss loss, const SolverOptions& options,
                            std::uint64_t seed) {
  return std::move(solve_patches(model, {problem}, loss, 0.0, false, options, seed)[0]);
}

LatentSolution solve_latent_cv(Cvae& model, const PatchProblem& problem, DataLoss loss, double tv_weight,
                               const SolverOptions& options, std::uint64_t seed) {
  return std::move(solve_patches(model, {problem}, loss, tv_weight, true, options, seed)[0]);
}

std::vector<float> initial_central_view(const MeasurementOperator& op, std::span<const float> obs) {
  const FieldShape s = op.input_shape();
  const std::size_t vs = s.view_size();
  if (op.kind() == OperatorKind::CodedAperture) {
    double total = 0.0;
    for (float m : op.coded_masks().masks.at(0)) total += m;
    if (total > 0.0) {
      auto img = op.coded_image(obs, 0);
      for (float& v : img) v = std::clamp(static_cast<float>(v / total), 0.0f, 1.0f);
      return img;
    }
  }
  // Per pixel: the observed central view, else the mean of the other
  // observed full-resolution views, else 0.5. Pixel-mask zeros count as
  // unobserved.
  const auto views = op.full_resolution_views();
  const int cv = s.central();
  std::vector<double> central_sum(vs, 0.0), central_n(vs, 0.0), other_sum(vs, 0.0), other_n(vs, 0.0);
  for (auto [r, c] : views) {
    const auto v = op.observed_view(obs, r, c);
    const auto m = op.has_pixel_mask() ? op.observed_view(op.pixel_mask(), r, c) : std::vector<float>(vs, 1.0f);
    const bool central = r == cv && c == cv;
    for (std::size_t i = 0; i < vs; ++i) {
      if (m[i] == 0.0f) continue;
      (central ? central_sum : other_sum)[i] += v[i];
      (central ? central_n : other_n)[i] += 1.0;
    }
  }
  std::vector<float> out(vs, 0.5f);
  for (std::size_t i = 0; i < vs; ++i) {
    if (central_n[i] > 0.0)
      out[i] = static_cast<float>(central_sum[i] / central_n[i]);
    else if (other_n[i] > 0.0)
      out[i] = static_cast<float>(other_sum[i] / other_n[i]);
  }
  return out;
}

namespace {

// True when the operator passes every central-view pixel through unchanged.
bool central_view_observed(const MeasurementOperator& op, std::span<const float> obs) {
  if (!op.central_view(obs)) return false;
  if (!op.has_pixel_mask()) return true;
  const int c = op.input_shape().central();
  const auto m = op.observed_view(op.pixel_mask(), c, c);
  return std::all_of(m.begin(), m.end(), [](float v) { return v != 0.0f; });
}

}  // namespace

ReconResult reconstruct(Cvae& model, const ReconProblem& problem) {
  const auto t0 = std::chrono::steady_clock::now();
  const FieldShape shape = problem.op.input_shape();
  if (shape.angular != model.config().angular)
    throw DataError("operator angular size " + std::to_string(shape.angular) + " does not match the model (" +
                    std::to_string(model.config().angular) + ")");
  const int channels = static_cast<int>(problem.observations.size());
  if (channels != 1 && channels != 3) throw DataError("expected 1 or 3 observation channels");
  for (const auto& obs : problem.observations)
    if (obs.size() != problem.op.output_size()) throw DataError("observation size does not match the operator");
  if (problem.stride < 1 || problem.stride > kPatchSize) throw UsageError("stride must be in [1, 25]");

  const PatchGrid grid = PatchGrid::make(shape, problem.stride);
  ReconResult result;
  result.central_view_optimized =
      !problem.central_view_available || !central_view_observed(problem.op, problem.observations[0]);
  result.copied_back = !problem.noisy && problem.loss == DataLoss::L2 && problem.tv_weight == 0.0 &&
                       !problem.op.has_pixel_mask() && !problem.op.full_resolution_views().empty();
  std::vector<float> data(shape.size() * channels);
  for (int ch = 0; ch < channels; ++ch) {
    const auto& obs = problem.observations[ch];
    std::vector<PatchProblem> patches;
    patches.reserve(grid.origins.size());
    for (auto [oy, ox] : grid.origins) {
      PatchProblem p{problem.op.restrict_to(oy, ox, kPatchSize, kPatchSize),
                     problem.op.restrict_observation(obs, oy, ox, kPatchSize, kPatchSize), {}};
      p.central = result.central_view_optimized ? initial_central_view(p.op, p.obs) : *p.op.central_view(p.obs);
      patches.push_back(std::move(p));
    }
    // Same seed for every channel so channels are treated identically.
    auto solutions = solve_patches(model, patches, problem.loss, problem.tv_weight, result.central_view_optimized,
                                   problem.solver, problem.seed);
    std::vector<LFPatch> generated;
    generated.reserve(solutions.size());
    for (auto& s : solutions) {
      result.residuals.push_back(s.residual);
      result.iterations.push_back(s.iterations);
      generated.push_back(std::move(s.patch));
    }
    // Stitching clamps to [0,1].
    LightField stitched = stitch_patches(generated, grid);
    auto values = stitched.data();
    if (result.copied_back)
      for (auto [r, c] : problem.op.full_resolution_views()) {
        const auto view = problem.op.observed_view(obs, r, c);
        std::copy(view.begin(), view.end(),
                  values.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(r) * shape.angular + c) *
                                                               shape.view_size()));
      }
    for (std::size_t i = 0; i < values.size(); ++i) data[i * channels + ch] = values[i];
  }
  result.field = LightField(shape.angular, shape.height, shape.width, channels, std::move(data), /*clamp=*/true);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace lfgen
