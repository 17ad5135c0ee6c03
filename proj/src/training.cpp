#include "lfgen/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "lfgen/error.hpp"
#include "lfgen/eval.hpp"
#include "lfgen/nn/serialize.hpp"
#include "lfgen/seed.hpp"

namespace lfgen {

namespace {

nn::Tensor gather(const std::vector<LFPatch>& patches, std::span<const std::size_t> index) {
  const int a = patches[index[0]].angular;
  nn::Tensor t({static_cast<int>(index.size()), a, a, kPatchSize, kPatchSize});
  const std::size_t n = static_cast<std::size_t>(a) * a * kPatchSize * kPatchSize;
  for (std::size_t i = 0; i < index.size(); ++i)
    std::memcpy(t.data() + i * n, patches[index[i]].data.data(), n * sizeof(float));
  return t;
}

// Batch boundaries for one epoch; a single leftover patch joins the previous batch.
std::vector<std::size_t> batch_starts(std::size_t n, std::size_t batch) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < n; s += batch) starts.push_back(s);
  if (starts.size() > 1 && n - starts.back() == 1) starts.pop_back();
  starts.push_back(n);
  return starts;
}

nn::Tensor scalar(double v) { return nn::Tensor({1}, static_cast<float>(v)); }

void append_log(const std::filesystem::path& path, const EpochMetrics& m) {
  std::ofstream out(path, std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.3f\n", m.epoch, m.lr, m.total, m.mse, m.mmd,
                m.wall_seconds);
  out << buf;
  if (!out) throw DataError("cannot write training log " + path.string());
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 2) throw UsageError("batch size must be >= 2 (MMD needs at least two codes)");
  if (!(lr_initial > 0.0)) throw UsageError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must be in [0,1)");
  if (checkpoint_interval < 0) throw UsageError("checkpoint interval must be >= 0");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i].epoch < 1 || !(milestones[i].divisor > 0.0)) throw UsageError("invalid lr milestone");
    if (i > 0 && milestones[i].epoch <= milestones[i - 1].epoch) throw UsageError("lr milestones must be sorted");
  }
}

double lr_at(const TrainConfig& config, int epoch) {
  double lr = config.lr_initial;
  for (const Milestone& m : config.milestones)
    if (epoch >= m.epoch) lr /= m.divisor;
  return lr;
}

void save_checkpoint(const std::filesystem::path& path, Cvae& model, nn::Adam& adam, int next_epoch) {
  nn::TensorFile file;
  file.kind = "checkpoint";
  file.config = model.config().describe();
  file.fingerprint = model.config().fingerprint();
  for (auto& [name, t] : model.state()) file.tensors.emplace_back(name, *t);
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    file.tensors.emplace_back("adam.m." + params[i]->name, adam.first_moments()[i]);
    file.tensors.emplace_back("adam.v." + params[i]->name, adam.second_moments()[i]);
  }
  file.tensors.emplace_back("train.next_epoch", scalar(next_epoch));
  file.tensors.emplace_back("train.adam_steps", scalar(static_cast<double>(adam.steps())));
  // Write then rename so an interrupted run never leaves a truncated checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  nn::write_tensor_file(tmp, file);
  std::filesystem::rename(tmp, path);
}

int load_checkpoint(const std::filesystem::path& path, Cvae& model, nn::Adam& adam) {
  const nn::TensorFile file = nn::read_tensor_file(path);
  if (file.kind != "checkpoint") throw DataError(path.string() + " is not a training checkpoint");
  if (file.fingerprint != model.config().fingerprint())
    throw DataError("checkpoint was written for a different model configuration (" + file.config + ")");
  assign_state(model, file.tensors);
  const auto params = model.parameters();
  auto fetch = [&](const std::string& name, const std::vector<int>& shape) {
    const nn::Tensor* t = file.find(name);
    if (t == nullptr) throw DataError("checkpoint is missing " + name);
    if (t->shape() != shape) throw DataError("checkpoint tensor " + name + " has the wrong shape");
    return *t;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam.first_moments()[i] = fetch("adam.m." + params[i]->name, params[i]->value.shape());
    adam.second_moments()[i] = fetch("adam.v." + params[i]->name, params[i]->value.shape());
  }
  adam.set_steps(static_cast<std::int64_t>(fetch("train.adam_steps", {1})[0]));
  const int next = static_cast<int>(fetch("train.next_epoch", {1})[0]);
  if (next < 0) throw DataError("checkpoint has a negative epoch");
  return next;
}

std::vector<EpochMetrics> train(Cvae& model, const TrainConfig& config, const std::vector<LFPatch>& patches,
                                const std::filesystem::path& resume, const EpochCallback& on_epoch) {
  config.validate();
  if (patches.size() < 2) throw DataError("training needs at least two patches");
  for (const LFPatch& p : patches)
    if (p.angular != model.config().angular)
      throw DataError("patch angular size " + std::to_string(p.angular) + " does not match the model (" +
                      std::to_string(model.config().angular) + ")");

  nn::Adam adam(model.parameters(), {config.lr_initial, config.beta1, config.beta2, 1e-8});
  int start = 0;
  if (!resume.empty()) start = load_checkpoint(resume, model, adam);

  if (!config.log_path.empty() && start == 0) {
    std::ofstream log(config.log_path, std::ios::trunc);
    log << "epoch,lr,total,mse,mmd,wall_seconds\n";
    if (!log) throw DataError("cannot write training log " + config.log_path.string());
  }

  const std::size_t n = patches.size();
  const auto starts = batch_starts(n, static_cast<std::size_t>(config.batch_size));
  std::vector<EpochMetrics> history;
  for (int epoch = start; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(config, epoch);
    adam.set_lr(lr);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(config.seed, {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
      const std::span<const std::size_t> index(order.data() + starts[b], starts[b + 1] - starts[b]);
      const nn::Tensor batch = gather(patches, index);
      const nn::Tensor prior =
          sample_prior(static_cast<int>(index.size()),
                       derive_seed(config.seed, {static_cast<std::uint64_t>(epoch), b + 1}),
                       model.config().latent_dim, model.config().prior_variance);
      adam.zero_grad();
      const LossTerms l = loss_and_gradients(model, batch, prior, nn::Mode::Train, true);
      adam.step();
      const double w = static_cast<double>(index.size()) / static_cast<double>(n);
      m.total += w * l.total;
      m.mse += w * l.mse;
      m.mmd += w * l.mmd;
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(m);
    if (!config.log_path.empty()) append_log(config.log_path, m);

    const bool last = epoch + 1 == config.epochs;
    const bool keep_going = !on_epoch || on_epoch(m);
    if (!config.checkpoint_path.empty() &&
        (last || !keep_going || (config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0)))
      save_checkpoint(config.checkpoint_path, model, adam, epoch + 1);
    if (!keep_going) break;
  }
  return history;
}

double autoencode_eval(Cvae& model, const std::vector<LFPatch>& patches, int batch_size) {
  if (patches.empty()) throw DataError("no patches to evaluate");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  double sum = 0.0;
  std::vector<std::size_t> index(patches.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  const std::size_t n = static_cast<std::size_t>(model.config().angular) * model.config().angular * kPatchSize *
                        kPatchSize;
  for (std::size_t s = 0; s < patches.size(); s += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(patches.size(), s + static_cast<std::size_t>(batch_size));
    const std::span<const std::size_t> part(index.data() + s, e - s);
    const nn::Tensor batch = gather(patches, part);
    const nn::Tensor rec =
        model.generate(model.encode(batch), pack_central_views({patches.begin() + s, patches.begin() + e}));
    for (std::size_t i = 0; i < part.size(); ++i)
      sum += psnr(std::span<const float>(batch.data() + i * n, n), std::span<const float>(rec.data() + i * n, n));
  }
  return sum / static_cast<double>(patches.size());
}

}  // namespace lfgen
