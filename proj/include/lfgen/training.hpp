#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "lfgen/cvae.hpp"
#include "lfgen/patches.hpp"

namespace lfgen {

struct Milestone {
  int epoch = 0;          // first epoch at the reduced rate
  double divisor = 1.0;   // applied on top of earlier milestones
};

struct TrainConfig {
  int epochs = 150;
  int batch_size = 128;
  double lr_initial = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::vector<Milestone> milestones = {{30, 2.0}, {50, 5.0}, {100, 10.0}};
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;           // epochs between checkpoints, 0 = final only
  std::filesystem::path checkpoint_path;  // empty disables checkpoints
  std::filesystem::path log_path;         // CSV log, empty disables

  void validate() const;
};

/// Learning rate for a zero-based epoch.
double lr_at(const TrainConfig& config, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double mse = 0.0;
  double mmd = 0.0;
  double wall_seconds = 0.0;
};

/// Called after each epoch; returning false ends training early.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

/// Mini-batch Adam on mse + lambda * mmd. Batches come from a per-epoch
/// shuffle under (seed, epoch) and each step draws a fresh prior sample of
/// the batch size; a trailing single-patch batch is merged into the previous
/// one. With `resume` set, model, optimizer state and epoch counter are
/// restored from that checkpoint first. Returns the metrics of the epochs run
/// in this call.
std::vector<EpochMetrics> train(Cvae& model, const TrainConfig& config, const std::vector<LFPatch>& patches,
                                const std::filesystem::path& resume = {}, const EpochCallback& on_epoch = {});

/// Checkpoint: model state, Adam moments and the next epoch.
void save_checkpoint(const std::filesystem::path& path, Cvae& model, nn::Adam& adam, int next_epoch);
/// Restores into `model` and `adam`; returns the next epoch to run.
int load_checkpoint(const std::filesystem::path& path, Cvae& model, nn::Adam& adam);

/// Mean over patches of PSNR(generate(encode(p), centre(p)), p).
double autoencode_eval(Cvae& model, const std::vector<LFPatch>& patches, int batch_size = 32);

}  // namespace lfgen
