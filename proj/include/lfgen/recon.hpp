#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lfgen/cvae.hpp"
#include "lfgen/lightfield.hpp"
#include "lfgen/operators.hpp"
#include "lfgen/patches.hpp"

namespace lfgen {

enum class DataLoss { L2, L1 };

/// Mean squared (L2) or absolute (L1) difference, restricted to entries with
/// a nonzero `observed` weight when one is given.
double data_loss(DataLoss kind, std::span<const float> obs, std::span<const float> pred,
                 std::span<const float> observed = {});

/// Anisotropic total variation: sum of absolute horizontal and vertical
/// forward differences, no wrap-around.
double tv(std::span<const float> image, int height, int width);
/// Adds weight * (sub)gradient of tv to `grad`.
void tv_gradient(std::span<const float> image, int height, int width, double weight, std::span<float> grad);

struct SolverOptions {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int max_iterations = 2000;
  double tolerance = 1e-6;  // relative objective change over `window` iterations
  int window = 20;
  int batch_size = 32;      // patches sharing one generator pass
  bool keep_trace = false;
};

/// One patch-sized subproblem: an operator over a 25x25 window, its
/// observation and the central view (known, or the initial guess when the
/// central view is optimised).
struct PatchProblem {
  MeasurementOperator op;
  std::vector<float> obs;
  std::vector<float> central;
};

struct LatentSolution {
  std::vector<float> z;
  std::vector<float> central;
  LFPatch patch;
  double objective = 0.0;
  double residual = 0.0;  // mean squared data misfit over observed entries
  int iterations = 0;
  std::vector<double> trace;  // objective per iteration when requested
};

/// Objective data_loss(obs, Phi G(z, c)) + tv_weight * TV(c) for one patch,
/// with gradients with respect to z and c when requested.
double patch_objective(Cvae& model, const PatchProblem& problem, std::span<const float> z, DataLoss loss,
                       double tv_weight, std::vector<float>* grad_z = nullptr,
                       std::vector<float>* grad_c = nullptr);

/// Squared misfit ||obs - Phi G(z, c)||^2 of one patch in eval mode and,
/// when requested, its gradients with respect to z and c. Instantiated for
/// float and double models.
template <class T>
double measurement_misfit(BasicCvae<T>& model, const MeasurementOperator& op, std::span<const T> obs,
                          std::span<const T> z, std::span<const T> central, std::vector<T>* grad_z = nullptr,
                          std::vector<T>* grad_c = nullptr);

/// Adam over z (and c when `optimize_central`) for many independent patches.
/// z starts from a prior draw under derive_seed(seed, {index}) where index is
/// the position in `problems`. Batch size only affects floating-point rounding.
std::vector<LatentSolution> solve_patches(Cvae& model, const std::vector<PatchProblem>& problems, DataLoss loss,
                                          double tv_weight, bool optimize_central, const SolverOptions& options,
                                          std::uint64_t seed);

/// Latent search with the central view fixed to `problem.central`.
LatentSolution solve_latent(Cvae& model, const PatchProblem& problem, DataLoss loss, const SolverOptions& options,
                            std::uint64_t seed);
/// Joint search over latent code and central view, starting at `problem.central`.
LatentSolution solve_latent_cv(Cvae& model, const PatchProblem& problem, DataLoss loss, double tv_weight,
                               const SolverOptions& options, std::uint64_t seed);

/// Initial central view when it is optimised: for coded apertures, coded
/// image 0 divided by the sum of pattern 0. Otherwise, per pixel, the observed
/// central view, else the mean of the other observed full-resolution views,
/// else 0.5; pixel-mask zeros count as unobserved.
std::vector<float> initial_central_view(const MeasurementOperator& op, std::span<const float> obs);

struct ReconProblem {
  MeasurementOperator op;                     // single-channel operator on the full field
  std::vector<std::vector<float>> observations;  // one per colour channel
  DataLoss loss = DataLoss::L2;
  double tv_weight = 0.0;
  int stride = kPatchSize;
  bool noisy = false;  // observations corrupted; disables copy-back of known views
  // false: the observed central view is unreliable (e.g. corrupted) and is
  // optimised jointly from its observation.
  bool central_view_available = true;
  SolverOptions solver;
  std::uint64_t seed = 0;
};

struct ReconResult {
  LightField field;
  std::vector<double> residuals;  // per channel, then per patch
  std::vector<int> iterations;
  bool central_view_optimized = false;
  bool copied_back = false;
  double wall_seconds = 0.0;
};

/// Patch-wise recovery of every colour channel. The central view is taken
/// from the observation when the operator passes all of its pixels through
/// unchanged and `central_view_available` is set; otherwise it is optimised
/// jointly. Known full-resolution views are copied back when the
/// observation is clean, the loss is L2, TV is off and no pixel mask is
/// attached.
ReconResult reconstruct(Cvae& model, const ReconProblem& problem);

}  // namespace lfgen
