#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "lfgen/corruption.hpp"
#include "lfgen/cvae.hpp"
#include "lfgen/error.hpp"
#include "lfgen/eval.hpp"
#include "lfgen/lightfield_io.hpp"
#include "lfgen/operators.hpp"
#include "lfgen/patch_store.hpp"
#include "lfgen/recon.hpp"
#include "lfgen/training.hpp"

namespace lfgen::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "a=b" -> (a, b)
std::pair<std::string, std::string> split_assignment(const std::string& item, const char* what) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
    throw UsageError(std::string("expected name=value for ") + what + ", got '" + item + "'");
  return {item.substr(0, eq), item.substr(eq + 1)};
}

// "y,x" -> (y, x)
std::pair<int, int> parse_position(const std::string& text) {
  int y = 0, x = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> y >> comma >> x) || comma != ',' || !(in >> std::ws).eof())
    throw UsageError("expected a position y,x, got '" + text + "'");
  return {y, x};
}

std::vector<Milestone> parse_milestones(const std::string& text) {
  std::vector<Milestone> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("expected epoch:divisor in milestones, got '" + item + "'");
    try {
      out.push_back({std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw UsageError("malformed milestone '" + item + "'");
    }
  }
  return out;
}

Cvae load_model(const fs::path& weights) {
  return load_weights(weights, read_weights_config(weights));
}

// ------------------------------------------------------------- subcommands

struct PrepareArgs {
  std::vector<std::string> sources;
  std::vector<std::string> downscale;
  std::uint64_t count = 250000;
  std::uint64_t seed = 0;
  std::string out;
};

void run_prepare(const PrepareArgs& a, std::ostream& out) {
  if (a.sources.empty()) throw UsageError("prepare needs at least one --source");
  if (a.out.empty()) throw UsageError("prepare needs --out");
  std::vector<PatchSource> sources;
  for (const auto& s : a.sources) {
    PatchSource src;
    if (s.find('=') != std::string::npos) {
      auto [name, path] = split_assignment(s, "--source");
      src.name = name;
      src.path = path;
    } else {
      src.path = s;
      src.name = src.path.filename().string();
    }
    if (!fs::exists(src.path)) throw UsageError("source '" + src.name + "' not found: " + src.path.string());
    sources.push_back(src);
  }
  for (const auto& d : a.downscale) {
    auto [name, value] = split_assignment(d, "--downscale");
    auto it = std::find_if(sources.begin(), sources.end(), [&](const PatchSource& s) { return s.name == name; });
    if (it == sources.end()) throw UsageError("--downscale names unknown source '" + name + "'");
    try {
      it->downscale = std::stod(value);
    } catch (const std::exception&) {
      throw UsageError("malformed downscale factor '" + value + "'");
    }
    if (!(it->downscale >= 1.0)) throw UsageError("downscale factor must be >= 1");
  }
  const auto counts = build_patch_dataset(sources, a.count, a.seed, a.out);
  out << "wrote " << a.count << " patches to " << a.out << "\n";
  for (std::size_t i = 0; i < sources.size(); ++i) out << "  " << sources[i].name << ": " << counts[i] << "\n";
}

struct TrainArgs {
  std::string patches;
  std::string out;
  int epochs = 150;
  int batch_size = 128;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::string milestones = "30:2,50:5,100:10";
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;
  std::string checkpoint;
  std::string log;
  std::string resume;
  int latent_dim = 160;
  double prior_variance = 2.0;
  double lambda_mmd = 100.0;
};

void run_train(const TrainArgs& a, std::ostream& out) {
  if (a.patches.empty()) throw UsageError("train needs --patches");
  if (a.out.empty()) throw UsageError("train needs --out");
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.lr_initial = a.lr;
  tc.beta1 = a.beta1;
  tc.beta2 = a.beta2;
  tc.milestones = parse_milestones(a.milestones);
  tc.seed = a.seed;
  tc.checkpoint_interval = a.checkpoint_interval;
  tc.checkpoint_path = a.checkpoint.empty() ? fs::path(a.out + ".ckpt") : fs::path(a.checkpoint);
  tc.log_path = a.log.empty() ? fs::path(a.out + ".log.csv") : fs::path(a.log);
  tc.validate();

  PatchStore store(a.patches);
  CvaeConfig mc;
  mc.angular = store.angular();
  mc.latent_dim = a.latent_dim;
  mc.prior_variance = a.prior_variance;
  mc.lambda_mmd = a.lambda_mmd;
  mc.validate();
  const std::vector<LFPatch> patches = store.read_all();
  out << "training on " << patches.size() << " patches (" << mc.angular << "x" << mc.angular << " views)\n";

  Cvae model(mc, a.seed);
  train(model, tc, patches, a.resume, [&](const EpochMetrics& m) {
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %d lr %.3g total %.6g mse %.6g mmd %.6g (%.1f s)\n", m.epoch, m.lr,
                  m.total, m.mse, m.mmd, m.wall_seconds);
    out << line << std::flush;
    return true;
  });
  save_weights(model, a.out);
  out << "wrote " << a.out << "\n";
}

struct CorruptArgs {
  std::string in;
  std::string out;
  std::string kind = "gaussian";
  double sigma = 0.0;
  double probability = 0.0;
  double fraction = 0.0;
  std::string target = "all";
  std::uint64_t seed = 0;
  std::string pixel_mask_out;
  std::string format = "auto";
};

void run_corrupt(const CorruptArgs& a, const CLI::App& app, std::ostream& out) {
  if (a.in.empty() || a.out.empty()) throw UsageError("corrupt needs --in and --out");
  CorruptionSpec spec;
  const std::map<std::string, std::pair<CorruptionKind, std::string>> kinds = {
      {"gaussian", {CorruptionKind::Gaussian, "--sigma"}},
      {"salt-pepper", {CorruptionKind::SaltPepper, "--probability"}},
      {"drop", {CorruptionKind::PixelDrop, "--fraction"}}};
  const auto it = kinds.find(a.kind);
  if (it == kinds.end()) throw UsageError("unknown corruption kind '" + a.kind + "'");
  spec.kind = it->second.first;
  for (const auto& [name, entry] : kinds)
    if (name != a.kind && app.get_option(entry.second)->count() > 0)
      throw UsageError(entry.second + " does not apply to --kind " + a.kind);
  spec.magnitude = spec.kind == CorruptionKind::Gaussian     ? a.sigma
                   : spec.kind == CorruptionKind::SaltPepper ? a.probability
                                                             : a.fraction;
  if (a.target == "all")
    spec.target = TargetViews::All;
  else if (a.target == "non-central")
    spec.target = TargetViews::NonCentral;
  else
    throw UsageError("unknown target '" + a.target + "' (all, non-central)");
  spec.seed = a.seed;
  spec.validate();

  const LightField lf = load_lightfield(a.in);
  const auto [noisy, mask] = corrupt(lf, spec);
  save_lightfield(noisy, a.out, parse_lf_format(a.format));
  out << "wrote " << a.out << "\n";
  if (spec.kind == CorruptionKind::PixelDrop || !a.pixel_mask_out.empty()) {
    const fs::path mask_path =
        a.pixel_mask_out.empty() ? fs::path(a.out + ".pixel_mask.json") : fs::path(a.pixel_mask_out);
    save_pixel_mask(mask, mask_path);
    out << "wrote " << mask_path.string() << " (" << mask.observed_count() << " of " << mask.observed.size()
        << " pixels observed)\n";
  }
}

struct ReconstructArgs {
  std::string task;
  std::string mask;
  std::string weights;
  std::string obs;
  int stride = 25;
  std::string loss = "l2";
  double tv = 0.0;
  std::string out;
  std::string pixel_mask;
  bool corrupted = false;
  bool optimize_central = false;
  std::uint64_t seed = 0;
  std::string reference;
  std::string report;
  std::string lf_name;
  std::string mask_name;
  std::string error_maps;
  double error_gain = 10.0;
  int max_iterations = 2000;
  double tolerance = 1e-6;
  double lr = 1e-2;
  int batch_size = 32;
  std::string format = "auto";
};

MeasurementOperator build_operator(const std::string& task, const MaskFile& masks, FieldShape shape) {
  if (task == "views") {
    if (!masks.angular) throw DataError("mask file has no \"angular\" entry for the views task");
    return MeasurementOperator::view_mask(*masks.angular, shape);
  }
  if (task == "spatial-angular") {
    if (!masks.angular) throw DataError("mask file has no \"angular\" entry for the spatial-angular task");
    const DownsampleSpec spec = masks.factors ? *masks.factors : DownsampleSpec::uniform(shape.angular, 1);
    return MeasurementOperator::spatial_angular(*masks.angular, spec, shape);
  }
  if (task == "coded") {
    if (!masks.coded) throw DataError("mask file has no \"coded\" entry for the coded task");
    return MeasurementOperator::coded_aperture(*masks.coded, shape);
  }
  throw UsageError("unknown task '" + task + "' (views, spatial-angular, coded)");
}

void run_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  if (a.task.empty() || a.mask.empty() || a.weights.empty() || a.obs.empty() || a.out.empty())
    throw UsageError("reconstruct needs --task, --mask, --weights, --obs and --out");
  if (!a.pixel_mask.empty() && !a.corrupted)
    throw UsageError("--pixel-mask is only accepted for corrupted observations (--corrupted)");
  if (a.loss != "l2" && a.loss != "l1") throw UsageError("unknown loss '" + a.loss + "' (l2, l1)");
  if (!(a.tv >= 0.0)) throw UsageError("--tv must be >= 0");
  if (!fs::exists(a.obs)) throw DataError("no such observation: " + a.obs);
  const MaskFile masks = load_mask_file(a.mask);
  Cvae model = load_model(a.weights);
  const int angular = model.config().angular;

  ReconProblem problem;
  LightField reference;
  FieldShape shape;
  std::vector<std::vector<float>> observations;
  if (is_image_stack_file(a.obs)) {
    if (a.task != "coded") throw UsageError("coded measurements given for task '" + a.task + "'");
    const ImageStack stack = load_image_stack(a.obs);
    shape = {angular, stack.height, stack.width};
    problem.op = build_operator(a.task, masks, shape);
    if (stack.count != masks.coded->count())
      throw DataError("observation holds " + std::to_string(stack.count) + " coded images, mask file " +
                      std::to_string(masks.coded->count()));
    for (int c = 0; c < stack.channels; ++c) observations.push_back(stack.channel(c));
  } else {
    // A light field is measured through the task operator.
    reference = load_lightfield(a.obs);
    shape = reference.shape();
    if (shape.angular != angular)
      throw DataError("observation has " + std::to_string(shape.angular) + "x" + std::to_string(shape.angular) +
                      " views, the model expects " + std::to_string(angular));
    problem.op = build_operator(a.task, masks, shape);
    for (int c = 0; c < reference.channels(); ++c) observations.push_back(problem.op.apply(reference.channel(c)));
  }
  if (!a.pixel_mask.empty()) {
    if (a.task == "coded") throw UsageError("pixel masks are not supported for coded measurements");
    const PixelMask pm = load_pixel_mask(a.pixel_mask);
    if (pm.shape != shape) throw DataError("pixel mask shape does not match the observation");
    problem.op = problem.op.with_pixel_mask(problem.op.field_mask_to_output(pm.as_float()));
    // Dropped entries are unknown; zero them so the stored observation carries no stale values.
    const auto pmo = problem.op.pixel_mask();
    for (auto& o : observations)
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= pmo[i];
  }
  if (!a.reference.empty()) reference = load_lightfield(a.reference);

  problem.observations = std::move(observations);
  problem.loss = a.loss == "l1" ? DataLoss::L1 : DataLoss::L2;
  problem.tv_weight = a.tv;
  problem.stride = a.stride;
  problem.noisy = a.corrupted;
  problem.central_view_available = !a.optimize_central;
  problem.solver.lr = a.lr;
  problem.solver.max_iterations = a.max_iterations;
  problem.solver.tolerance = a.tolerance;
  problem.solver.batch_size = a.batch_size;
  problem.seed = a.seed;

  const ReconResult result = reconstruct(model, problem);
  save_lightfield(result.field, a.out, parse_lf_format(a.format));
  out << "wrote " << a.out << " (" << result.wall_seconds << " s";
  if (result.central_view_optimized) out << ", central view optimised";
  if (result.copied_back) out << ", known views copied back";
  out << ")\n";

  double mean_psnr = std::numeric_limits<double>::quiet_NaN();
  if (!reference.empty()) {
    if (reference.shape() != result.field.shape() || reference.channels() != result.field.channels())
      throw DataError("reference does not match the reconstruction shape");
    // 5x5: mean over all views and channels; 7x7: luminance over novel views.
    const AngularMask none{angular, std::vector<std::uint8_t>(static_cast<std::size_t>(angular) * angular, 0)};
    if (angular == 5) {
      mean_psnr = novel_view_psnr(reference, result.field, none, PsnrMode::PerChannelMean).mean;
    } else {
      const AngularMask known = a.task == "views" ? problem.op.angular_mask() : none;
      mean_psnr = novel_view_psnr(reference, result.field, known, PsnrMode::Luminance).mean;
    }
    out << "mean PSNR " << mean_psnr << " dB\n";
    if (!a.error_maps.empty()) {
      fs::create_directories(a.error_maps);
      const LightField ref_y = to_grayscale(reference), est_y = to_grayscale(result.field);
      for (int r = 0; r < angular; ++r)
        for (int c = 0; c < angular; ++c) {
          const auto map = error_map(ref_y.view(r, c), est_y.view(r, c), a.error_gain);
          write_error_map(fs::path(a.error_maps) / ("view_" + std::to_string(r) + "_" + std::to_string(c) + ".png"),
                          map, shape.height, shape.width);
        }
    }
  }
  EvalRecord record;
  record.lf = a.lf_name.empty() ? fs::path(a.obs).stem().string() : a.lf_name;
  record.task = a.task;
  record.mask = a.mask_name.empty() ? fs::path(a.mask).stem().string() : a.mask_name;
  record.stride = a.stride;
  record.loss = a.loss;
  record.mean_psnr_db = mean_psnr;
  record.runtime_s = result.wall_seconds;
  const fs::path report = a.report.empty() ? fs::path(a.out + ".report.csv") : fs::path(a.report);
  emit_report({record}, report);
  out << "wrote " << report.string() << "\n";
}

struct SampleArgs {
  std::string weights;
  std::string source;
  std::string at = "0,0";
  std::string central_source;
  std::string central_at;
  bool prior_sample = false;
  std::uint64_t seed = 0;
  std::string out;
};

void run_sample(const SampleArgs& a, std::ostream& out) {
  if (a.weights.empty() || a.out.empty()) throw UsageError("sample needs --weights and --out");
  if (a.source.empty() && a.central_source.empty()) throw UsageError("sample needs --source or --central-source");
  Cvae model = load_model(a.weights);
  const int n = model.config().angular;

  auto patch_of = [&](const std::string& path, const std::string& at) {
    const LightField lf = to_grayscale(load_lightfield(path));
    if (lf.angular() != n)
      throw DataError(path + " does not have " + std::to_string(n) + "x" + std::to_string(n) + " views");
    const auto [y, x] = parse_position(at);
    return crop_patch(lf.data(), lf.shape(), y, x);
  };

  std::vector<float> z;
  if (a.prior_sample) {
    const nn::Tensor t = sample_prior(1, a.seed, model.config().latent_dim, model.config().prior_variance);
    z.assign(t.values().begin(), t.values().end());
  } else {
    if (a.source.empty()) throw UsageError("sample needs --source unless --prior-sample is set");
    z = model.encode(patch_of(a.source, a.at));
  }
  const std::string cv_source = a.central_source.empty() ? a.source : a.central_source;
  const std::string cv_at = a.central_at.empty() ? a.at : a.central_at;
  const LFPatch generated = model.generate(z, patch_of(cv_source, cv_at).central_view());

  // Views tiled in angular order: block (r, c) holds view (r, c).
  const int side = n * kPatchSize;
  std::vector<float> mosaic(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int y = 0; y < kPatchSize; ++y)
        for (int x = 0; x < kPatchSize; ++x)
          mosaic[static_cast<std::size_t>(r * kPatchSize + y) * side + c * kPatchSize + x] =
              std::clamp(generated.at(r, c, y, x), 0.0f, 1.0f);
  write_png8(a.out, mosaic, side, side, 1);
  out << "wrote " << a.out << " (" << side << "x" << side << ")\n";
}

// ---------------------------------------------------------------- plumbing

bool is_reserved(const std::string& name) { return name == "help" || name == "config" || name == "print-config"; }

std::string option_key(const CLI::Option* opt) { return opt->get_single_name(); }

void print_config(const CLI::App& sub, std::ostream& out) {
  out << "# " << sub.get_name() << "\n";
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string key = option_key(opt);
    if (is_reserved(key)) continue;
    std::vector<std::string> values;
    if (opt->get_type_size() == 0)
      values.push_back(opt->count() > 0 && opt->as<bool>() ? "true" : "false");
    else if (opt->count() > 0)
      values = opt->results();
    else if (opt->get_items_expected_max() <= 1)
      values.push_back(opt->get_default_str());
    for (const auto& v : values) {
      const bool quote = v.empty() || v.find_first_of(" \t#") != std::string::npos;
      out << key << " = " << (quote ? "\"" + v + "\"" : v) << "\n";
    }
  }
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(), [&](const std::string& s) {
    return s == flag || s.rfind(flag + "=", 0) == 0;
  });
}

// Config values are placed before the command-line arguments of the
// subcommand; keys also given on the command line are dropped.
std::vector<std::string> expand_config(const CLI::App& sub, const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::vector<std::string> injected;
  for (const auto& [key, value] : parse_config(read_text(path))) {
    const CLI::Option* opt = is_reserved(key) ? nullptr : sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown configuration key '" + key + "' in " + path);
    if (given_on_command_line(args, key) || value.empty()) continue;
    injected.push_back("--" + key + "=" + value);
  }
  injected.insert(injected.end(), args.begin(), args.end());
  return injected;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    } else {
      const auto hash = value.find(" #");
      if (hash != std::string::npos) value = trim(value.substr(0, hash));
    }
    if (key.empty()) throw UsageError("config line " + std::to_string(number) + ": empty key");
    out.emplace_back(key, value);
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Light-field recovery with a central-view-conditioned generative prior"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config_path;
  bool print = false;
  std::map<std::string, std::function<void()>> actions;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Flat key = value file; command-line flags take precedence");
    sub->add_flag("--print-config", print, "Print the effective configuration and exit");
  };

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Crop random grayscale patches from light fields into a patch store");
  prepare->add_option("--source", pa.sources, "Light field as name=path or path (repeatable)");
  prepare->add_option("--downscale", pa.downscale, "Spatial downscale per source as name=factor (repeatable)");
  prepare->add_option("--count", pa.count, "Number of patches");
  prepare->add_option("--seed", pa.seed, "Random seed");
  prepare->add_option("--out", pa.out, "Output patch store");
  actions["prepare"] = [&] { run_prepare(pa, out); };

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder on a patch store");
  train_cmd->add_option("--patches", ta.patches, "Patch store");
  train_cmd->add_option("--out", ta.out, "Output weight file");
  train_cmd->add_option("--epochs", ta.epochs, "Total epochs");
  train_cmd->add_option("--batch-size", ta.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", ta.lr, "Initial learning rate");
  train_cmd->add_option("--beta1", ta.beta1, "Adam beta1");
  train_cmd->add_option("--beta2", ta.beta2, "Adam beta2");
  train_cmd->add_option("--milestones", ta.milestones, "epoch:divisor list, cumulative; 'none' disables");
  train_cmd->add_option("--seed", ta.seed, "Seed for initialisation, shuffling and prior samples");
  train_cmd->add_option("--checkpoint-interval", ta.checkpoint_interval, "Epochs between checkpoints (0: final only)");
  train_cmd->add_option("--checkpoint", ta.checkpoint, "Checkpoint path (default <out>.ckpt)");
  train_cmd->add_option("--log", ta.log, "CSV log path (default <out>.log.csv)");
  train_cmd->add_option("--resume", ta.resume, "Resume from this checkpoint");
  train_cmd->add_option("--latent-dim", ta.latent_dim, "Latent dimension");
  train_cmd->add_option("--prior-variance", ta.prior_variance, "Variance of the Gaussian latent prior");
  train_cmd->add_option("--lambda-mmd", ta.lambda_mmd, "Weight of the MMD term");
  actions["train"] = [&] { run_train(ta, out); };

  CorruptArgs ca;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Corrupt a light field with noise or pixel drop");
  corrupt_cmd->add_option("--in", ca.in, "Input light field");
  corrupt_cmd->add_option("--out", ca.out, "Output light field");
  corrupt_cmd->add_option("--kind", ca.kind, "gaussian, salt-pepper or drop");
  corrupt_cmd->add_option("--sigma", ca.sigma, "Gaussian standard deviation");
  corrupt_cmd->add_option("--probability", ca.probability, "Salt-and-pepper occurrence probability");
  corrupt_cmd->add_option("--fraction", ca.fraction, "Fraction of dropped pixels");
  corrupt_cmd->add_option("--target", ca.target, "all or non-central");
  corrupt_cmd->add_option("--seed", ca.seed, "Random seed");
  corrupt_cmd->add_option("--pixel-mask-out", ca.pixel_mask_out, "Pixel mask JSON (default <out>.pixel_mask.json)");
  corrupt_cmd->add_option("--format", ca.format, "Output format: auto, png, png16 or h5");
  actions["corrupt"] = [&] { run_corrupt(ca, *corrupt_cmd, out); };

  ReconstructArgs ra;
  auto* recon = app.add_subcommand("reconstruct", "Recover a light field from linear measurements");
  recon->add_option("--task", ra.task, "views, spatial-angular or coded");
  recon->add_option("--mask", ra.mask, "Mask JSON file");
  recon->add_option("--weights", ra.weights, "Model weight file");
  recon->add_option("--obs", ra.obs, "Light field to measure, or coded measurement stack (.h5)");
  recon->add_option("--stride", ra.stride, "Patch stride (25: no overlap, 5: overlap)")->check(CLI::Range(1, 25));
  recon->add_option("--loss", ra.loss, "Data loss: l2 or l1");
  recon->add_option("--tv", ra.tv, "TV weight on the optimised central view");
  recon->add_option("--out", ra.out, "Output light field");
  recon->add_option("--pixel-mask", ra.pixel_mask, "Pixel mask JSON of observed entries (needs --corrupted)");
  recon->add_flag("--corrupted", ra.corrupted, "Observations are corrupted; disables copy-back of known views");
  recon->add_flag("--optimize-central", ra.optimize_central,
                  "Optimise the central view jointly even when it is observed (e.g. corrupted)");
  recon->add_option("--seed", ra.seed, "Seed for latent initialisation");
  recon->add_option("--reference", ra.reference, "Ground truth for PSNR (default: --obs when it is a light field)");
  recon->add_option("--report", ra.report, "Report CSV (default <out>.report.csv)");
  recon->add_option("--lf-name", ra.lf_name, "Light field name in the report");
  recon->add_option("--mask-name", ra.mask_name, "Mask name in the report");
  recon->add_option("--error-maps", ra.error_maps, "Directory for per-view error maps");
  recon->add_option("--error-gain", ra.error_gain, "Error map magnification");
  recon->add_option("--max-iterations", ra.max_iterations, "Adam iterations per patch");
  recon->add_option("--tolerance", ra.tolerance, "Relative objective change over 20 iterations");
  recon->add_option("--lr", ra.lr, "Adam learning rate");
  recon->add_option("--batch-size", ra.batch_size, "Patches per generator pass");
  recon->add_option("--format", ra.format, "Output format: auto, png, png16 or h5");
  actions["reconstruct"] = [&] { run_reconstruct(ra, out); };

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Decode a latent code against a central view into a view mosaic");
  sample->add_option("--weights", sa.weights, "Model weight file");
  sample->add_option("--source", sa.source, "Light field providing the encoded patch");
  sample->add_option("--at", sa.at, "Patch origin y,x in --source");
  sample->add_option("--central-source", sa.central_source,
                     "Light field providing the central view (default --source)");
  sample->add_option("--central-at", sa.central_at, "Central patch origin y,x (default --at)");
  sample->add_flag("--prior-sample", sa.prior_sample, "Draw z from the prior instead of encoding");
  sample->add_option("--seed", sa.seed, "Seed of the prior draw");
  sample->add_option("--out", sa.out, "Output PNG");
  actions["sample"] = [&] { run_sample(sa, out); };

  for (CLI::App* sub : app.get_subcommands({})) common(sub);

  try {
    std::vector<std::string> argv = args;
    if (!argv.empty()) {
      if (CLI::App* sub = app.get_subcommand_no_throw(argv.front())) {
        std::vector<std::string> rest(argv.begin() + 1, argv.end());
        rest = expand_config(*sub, rest);
        argv.assign(1, argv.front());
        argv.insert(argv.end(), rest.begin(), rest.end());
      }
    }
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    CLI::App* sub = app.get_subcommands().front();
    if (print) {
      print_config(*sub, out);
      return kExitOk;
    }
    actions.at(sub->get_name())();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace lfgen::cli
