// Acceptance suite: one PASS/FAIL line per criterion.
//
//   lfgen_acceptance [--work-dir DIR] [--only 1,2,...]
//
// Criteria 7, 10 and 11 reuse the model trained by criterion 8; when 8 is not
// selected they load DIR/desk.h5 from an earlier run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lfgen/corruption.hpp"
#include "lfgen/cvae.hpp"
#include "lfgen/error.hpp"
#include "lfgen/eval.hpp"
#include "lfgen/operators.hpp"
#include "lfgen/patch_store.hpp"
#include "lfgen/patches.hpp"
#include "lfgen/recon.hpp"
#include "lfgen/training.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace lfgen;
using lfgen::testing::random_field;
using lfgen::testing::textured_plane;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

fs::path g_work;

std::vector<float> uniform(std::size_t n, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

AngularMask corners_and_centre(int a) {
  AngularMask m = AngularMask::one_hot(a, a / 2, a / 2);
  for (int r : {0, a - 1})
    for (int c : {0, a - 1}) m.known[r * a + c] = 1;
  return m;
}

CodedMaskSet random_coded(int a, int k, std::mt19937_64& rng) {
  CodedMaskSet m{a, {}};
  for (int i = 0; i < k; ++i) m.masks.push_back(uniform(static_cast<std::size_t>(a) * a, rng));
  return m;
}

// ------------------------------------------------------------------ 1

// Dense matrix of each measurement model written directly from its
// definition, independent of the operator implementation.
struct Dense {
  std::size_t rows = 0, cols = 0;
  std::vector<double> m;
  double& at(std::size_t r, std::size_t c) { return m[r * cols + c]; }
  std::vector<double> apply(const std::vector<float>& x) const {
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) y[r] += m[r * cols + c] * x[c];
    return y;
  }
};

Dense dense_view_mask(const AngularMask& mask, FieldShape s) {
  Dense d{s.size(), s.size(), std::vector<double>(s.size() * s.size(), 0.0)};
  for (int v = 0; v < s.angular * s.angular; ++v)
    if (mask.known[v])
      for (std::size_t i = 0; i < s.view_size(); ++i) d.at(v * s.view_size() + i, v * s.view_size() + i) = 1.0;
  return d;
}

Dense dense_spatial_angular(const AngularMask& mask, const DownsampleSpec& spec, FieldShape s) {
  std::vector<std::size_t> picks;  // field index of every output entry
  for (int r = 0; r < s.angular; ++r)
    for (int c = 0; c < s.angular; ++c) {
      if (!mask.at(r, c)) continue;
      const int f = spec.at(r, c);
      for (int y = 0; y < s.height; y += f)
        for (int x = 0; x < s.width; x += f)
          picks.push_back((static_cast<std::size_t>(r * s.angular + c) * s.height + y) * s.width + x);
    }
  Dense d{picks.size(), s.size(), std::vector<double>(picks.size() * s.size(), 0.0)};
  for (std::size_t i = 0; i < picks.size(); ++i) d.at(i, picks[i]) = 1.0;
  return d;
}

Dense dense_coded(const CodedMaskSet& masks, FieldShape s) {
  const std::size_t vs = s.view_size();
  Dense d{masks.count() * vs, s.size(), std::vector<double>(masks.count() * vs * s.size(), 0.0)};
  for (int k = 0; k < masks.count(); ++k)
    for (int v = 0; v < s.angular * s.angular; ++v)
      for (std::size_t p = 0; p < vs; ++p) d.at(k * vs + p, v * vs + p) = masks.masks[k][v];
  return d;
}

Outcome criterion1() {
  std::mt19937_64 rng(101);
  const FieldShape s{5, 8, 8};
  AngularMask mask{5, std::vector<std::uint8_t>(25, 0)};
  for (auto& k : mask.known) k = rng() % 2;
  mask.known[12] = 1;
  DownsampleSpec spec{5, std::vector<int>(25, 1)};
  for (int v = 0; v < 25; ++v) spec.factor[v] = v == 12 ? 1 : 1 + static_cast<int>(rng() % 3);
  const CodedMaskSet coded = random_coded(5, 2, rng);

  struct Case {
    const char* name;
    MeasurementOperator op;
    Dense dense;
  };
  std::vector<Case> cases = {{"view-mask", MeasurementOperator::view_mask(mask, s), dense_view_mask(mask, s)},
                             {"spatial-angular", MeasurementOperator::spatial_angular(mask, spec, s),
                              dense_spatial_angular(mask, spec, s)},
                             {"coded", MeasurementOperator::coded_aperture(coded, s), dense_coded(coded, s)}};
  // Missing pixels compose with every kind as a 0/1 diagonal on the output.
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<float> pm(cases[k].op.output_size());
    for (float& v : pm) v = static_cast<float>(rng() % 2);
    Dense d = cases[k].dense;
    for (std::size_t r = 0; r < d.rows; ++r)
      for (std::size_t c = 0; c < d.cols; ++c) d.at(r, c) *= pm[r];
    cases.push_back({"with pixel mask", cases[k].op.with_pixel_mask(pm), std::move(d)});
  }
  double worst_apply = 0.0, worst_adjoint = 0.0;
  bool shapes_ok = true;
  for (auto& c : cases) {
    shapes_ok = shapes_ok && c.op.output_size() == c.dense.rows;
    if (!shapes_ok) break;
    for (int probe = 0; probe < 20; ++probe) {
      const auto x = uniform(s.size(), rng);
      const auto y = uniform(c.op.output_size(), rng, -1.0f, 1.0f);
      const std::vector<double> xd(x.begin(), x.end()), yd(y.begin(), y.end());
      std::vector<double> ax(c.op.output_size()), aty(s.size());
      c.op.apply_into(xd, ax);
      c.op.adjoint_into(yd, aty);
      const auto ref = c.dense.apply(x);
      for (std::size_t i = 0; i < ax.size(); ++i) worst_apply = std::max(worst_apply, std::abs(ax[i] - ref[i]));
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) lhs += ax[i] * yd[i];
      for (std::size_t i = 0; i < x.size(); ++i) rhs += xd[i] * aty[i];
      worst_adjoint = std::max(worst_adjoint, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
    }
  }
  const bool pass = shapes_ok && worst_apply <= 1e-6 && worst_adjoint <= 1e-5;
  return {pass, "max |apply - dense| " + fmt("%.2e", worst_apply) + " (<= 1e-6), max adjoint rel " +
                    fmt("%.2e", worst_adjoint) + " (<= 1e-5); 3 kinds, each also with a pixel mask" +
                    (shapes_ok ? "" : ", output size mismatch")};
}

// ------------------------------------------------------------------ 2

Outcome criterion2() {
  const LightField lf = random_field(5, 60, 60, 1, 202);
  double worst = 0.0;
  for (int stride : {1, 5, 12, 25}) {
    const auto [patches, grid] = extract_patches(lf, stride);
    const LightField back = stitch_patches(patches, grid);
    for (std::size_t i = 0; i < lf.data().size(); ++i)
      worst = std::max(worst, static_cast<double>(std::abs(back.data()[i] - lf.data()[i])));
  }
  return {worst <= 1e-6, "max deviation over strides 1/5/12/25: " + fmt("%.2e", worst) + " (<= 1e-6)"};
}

// ------------------------------------------------------------------ 3

Outcome criterion3() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  for (int a : {5, 7}) {
    CvaeConfig cfg;
    cfg.angular = a;
    Cvae model(cfg, 3);
    const auto patches = lfgen::testing::toy_patches(2, a, 303);
    const nn::Tensor x = pack_patches(patches);
    const nn::Tensor central = pack_central_views(patches);
    const std::string tag = "N_v=" + std::to_string(a) + ": ";

    Cvae::FeatureTape ft;
    model.features_forward(central, nn::Mode::Eval, ft);
    expect(ft.cvf1().shape() == std::vector<int>{2, 20, 1, 13, 13},
           tag + "CVF1 " + nn::shape_string(ft.cvf1().shape()));
    expect(ft.cvf2().shape() == std::vector<int>{2, 60, 1, 7, 7}, tag + "CVF2 " + nn::shape_string(ft.cvf2().shape()));
    Cvae::EncoderTape et;
    const nn::Tensor z = model.encoder_forward(x, ft, nn::Mode::Eval, et);
    expect(et.enc3_in.dim(1) == 140, tag + "Enc3 input channels " + std::to_string(et.enc3_in.dim(1)));
    expect(z.shape() == std::vector<int>{2, 160}, tag + "latent " + nn::shape_string(z.shape()));
    const nn::Tensor y = model.generate(z, central);
    expect(y.shape() == x.shape(), tag + "generated " + nn::shape_string(y.shape()));
    const LFPatch one = model.generate(model.encode(patches[0]), patches[0].central_view());
    expect(one.angular == a && one.data.size() == patches[0].data.size(), tag + "single-patch round trip");
  }
  std::string detail = "CVF (20,13,13)/(60,7,7), Enc3 in 140, latent 160, round trip shapes for N_v 5 and 7";
  for (const auto& f : failures) detail += "; wrong " + f;
  return {failures.empty(), detail};
}

// ------------------------------------------------------------------ 4

Outcome criterion4() {
  Cvae model(CvaeConfig{}, 4);
  // Running statistics from real patches; all weights stay at their random values.
  calibrate_batch_norm(model, pack_patches(lfgen::testing::toy_patches(16, 5, 404)));
  CvaeD model_d = cvae_cast<double>(model);
  const LightField lf = textured_plane(5, 25, 25, 0.5, 405);
  const LFPatch truth = crop_patch(lf.data(), lf.shape(), 0, 0);
  const FieldShape s{5, 25, 25};
  std::mt19937_64 rng(406);
  const std::vector<std::pair<const char*, MeasurementOperator>> ops = {
      {"view-mask", MeasurementOperator::view_mask(corners_and_centre(5), s)},
      {"spatial-angular",
       MeasurementOperator::spatial_angular(corners_and_centre(5), DownsampleSpec::uniform(5, 2), s)},
      {"coded", MeasurementOperator::coded_aperture(random_coded(5, 2, rng), s)}};

  // Relative error of the 10-coordinate gradient subvector, ||fd - g|| / ||fd||.
  // The oracle is a double-precision central difference on the same weights;
  // the float gradient is checked against it as well. A float-only difference
  // quotient is reported for information: at steps large enough to beat float
  // rounding it straddles ReLU kinks.
  auto rel = [](const std::vector<double>& ref, const std::vector<double>& got) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      num += (ref[i] - got[i]) * (ref[i] - got[i]);
      den += ref[i] * ref[i];
    }
    return std::sqrt(num / std::max(den, 1e-300));
  };
  double worst_double = 0.0, worst_float = 0.0, worst_float_fd = 0.0, worst_coord = 0.0;
  for (const auto& [name, op] : ops) {
    const auto obs_f = op.apply(truth.data);
    const auto c_f = truth.central_view();
    const nn::Tensor zt = sample_prior(1, rng());
    std::vector<float> z(zt.values().begin(), zt.values().end());
    std::vector<int> coords;
    for (int k = 0; k < 10; ++k) coords.push_back(static_cast<int>(rng() % z.size()));

    const std::vector<double> obs(obs_f.begin(), obs_f.end()), c(c_f.begin(), c_f.end());
    std::vector<double> zd(z.begin(), z.end()), gd;
    std::vector<float> gf;
    measurement_misfit<double>(model_d, op, obs, zd, c, &gd);
    measurement_misfit<float>(model, op, obs_f, z, c_f, &gf);
    std::vector<double> fd, fd_float, g_double, g_float;
    for (int i : coords) {
      const double h = 1e-6, s0 = zd[i];
      zd[i] = s0 + h;
      const double fp = measurement_misfit<double>(model_d, op, obs, zd, c);
      zd[i] = s0 - h;
      const double fm = measurement_misfit<double>(model_d, op, obs, zd, c);
      zd[i] = s0;
      fd.push_back((fp - fm) / (2 * h));
      g_double.push_back(gd[i]);
      g_float.push_back(gf[i]);
      worst_coord = std::max(worst_coord, std::abs(fd.back() - gd[i]) / std::abs(fd.back()));

      const float hf = 1e-2f, s0f = z[i];
      z[i] = s0f + hf;
      const double fpf = measurement_misfit<float>(model, op, obs_f, z, c_f);
      z[i] = s0f - hf;
      const double fmf = measurement_misfit<float>(model, op, obs_f, z, c_f);
      z[i] = s0f;
      fd_float.push_back((fpf - fmf) / (2.0 * hf));
    }
    worst_double = std::max(worst_double, rel(fd, g_double));
    worst_float = std::max(worst_float, rel(fd, g_float));
    worst_float_fd = std::max(worst_float_fd, rel(fd_float, g_float));
  }
  return {worst_double <= 1e-4 && worst_float <= 1e-2,
          "10-coordinate relative error vs central differences, worst of 3 operator kinds: double " +
              fmt("%.2e", worst_double) + " (<= 1e-4, worst single coordinate " + fmt("%.2e", worst_coord) +
              "), float " + fmt("%.2e", worst_float) + " (<= 1e-2); float-only difference quotient " +
              fmt("%.2e", worst_float_fd) + " (informational)"};
}

// ------------------------------------------------------------------ 5

nn::Tensor gaussian(int n, int d, double mean, std::uint64_t seed) {
  nn::Tensor t = sample_prior(n, seed, d, 2.0);
  for (float& v : t.values()) v += static_cast<float>(mean);
  return t;
}

Outcome criterion5() {
  const double scale = 2.0 * 160 * 2.0;
  const nn::Tensor a = gaussian(256, 160, 0.0, 501);
  const nn::Tensor b = gaussian(256, 160, 0.0, 502);
  const double self = mmd(a, a, scale);
  const bool symmetric = mmd(a, b, scale) == mmd(b, a, scale);
  int ordered = 0;
  for (int t = 0; t < 10; ++t) {
    const nn::Tensor p = gaussian(256, 160, 0.0, 510 + 3 * t);
    const nn::Tensor q = gaussian(256, 160, 0.0, 511 + 3 * t);
    const nn::Tensor r = gaussian(256, 160, 3.0, 512 + 3 * t);
    ordered += mmd(p, q, scale) < mmd(p, r, scale);
  }
  return {self <= 1e-10 && symmetric && ordered == 10,
          "mmd(a,a) " + fmt("%.1e", self) + ", symmetric " + (symmetric ? "yes" : "no") + ", ordering " +
              std::to_string(ordered) + "/10"};
}

// ------------------------------------------------------------------ 6

Outcome criterion6() {
  const auto patches = lfgen::testing::toy_patches(32, 5, 601, 1);
  Cvae model(CvaeConfig{}, 602);
  TrainConfig tc;
  tc.epochs = 2000;
  tc.batch_size = 32;
  // The default milestones belong to a 150-epoch schedule; here the rate
  // stays at 1e-3 and drops once for the final quarter.
  tc.milestones = {{1500, 10.0}};
  tc.seed = 603;
  tc.log_path = g_work / "overfit.log.csv";
  double last_mse = 0.0, best_mse = 1e30;
  int epochs = 0;
  const auto metrics = train(model, tc, patches, {}, [&](const EpochMetrics& m) {
    last_mse = m.mse;
    best_mse = std::min(best_mse, m.mse);
    epochs = m.epoch + 1;
    return m.mse >= 1e-4;
  });
  double seconds = 0.0;
  for (const auto& m : metrics) seconds += m.wall_seconds;
  const double psnr = autoencode_eval(model, patches);
  return {last_mse < 1e-4 && psnr >= 35.0,
          "training MSE " + fmt("%.2e", last_mse) + " (< 1e-4; best " + fmt("%.2e", best_mse) + ") after " +
              std::to_string(epochs) + " epochs; autoencode PSNR " + fmt("%.2f", psnr) + " dB (>= 35); training " +
              fmt("%.0f", seconds) + " s (budget 1800 s)"};
}

// ------------------------------------------------------------------ 8

const char* kDeskWeights = "desk.h5";

std::vector<LightField> desk_fields() {
  return {textured_plane(5, 120, 120, 0.6, 801, 3), textured_plane(5, 120, 120, -0.8, 802, 3)};
}

Outcome criterion8() {
  const fs::path store = g_work / "desk_patches.bin";
  build_patch_dataset(desk_fields(), {1.0, 1.0}, 2000, 803, store);
  const auto patches = PatchStore(store).read_all();
  Cvae model(CvaeConfig{}, 804);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 128;
  tc.seed = 805;
  tc.log_path = g_work / "desk.log.csv";
  const auto metrics = train(model, tc, patches);
  save_weights(model, g_work / kDeskWeights);
  bool lr_exact = metrics.size() == 20;
  for (const auto& m : metrics) lr_exact = lr_exact && m.lr == 1e-3;
  const double ratio = metrics.back().total / metrics.front().total;
  return {lr_exact && ratio <= 0.5, "final/first epoch total loss " + fmt("%.3f", ratio) + " (<= 0.5; " +
                                        fmt("%.4g", metrics.front().total) + " -> " +
                                        fmt("%.4g", metrics.back().total) + "), lr trace " +
                                        (lr_exact ? "constant 1e-3" : "NOT constant 1e-3")};
}

Cvae desk_model() {
  const fs::path path = g_work / kDeskWeights;
  if (!fs::exists(path)) throw DataError("criterion 8 has not produced " + path.string());
  return load_weights(path, CvaeConfig{});
}

// ------------------------------------------------------------------ 7

Outcome criterion7() {
  Cvae model = desk_model();
  const LightField held_out = lfgen::to_grayscale(textured_plane(5, 60, 60, 0.3, 701, 1));
  const FieldShape s{5, 25, 25};
  std::mt19937_64 rng(702);
  SolverOptions opt;
  const int n = 4;

  // (a) all views observed, central view known.
  std::vector<PatchProblem> direct;
  std::vector<LFPatch> targets;
  for (int i = 0; i < n; ++i) {
    const LFPatch p = crop_patch(held_out.data(), held_out.shape(), 10 * i, 35 - 10 * i);
    const nn::Tensor zs = sample_prior(1, 710 + i);
    const std::vector<float> z(zs.values().begin(), zs.values().end());
    const auto c = p.central_view();
    const LFPatch target = model.generate(z, c);
    const auto op = MeasurementOperator::view_mask(AngularMask::all(5), s);
    direct.push_back({op, op.apply(target.data), c});
    targets.push_back(target);
  }
  const auto sol_a = solve_patches(model, direct, DataLoss::L2, 0.0, false, opt, 720);
  double worst_res_a = 0.0, worst_psnr = kPsnrCap;
  for (int i = 0; i < n; ++i) {
    worst_res_a = std::max(worst_res_a, sol_a[i].residual);
    worst_psnr = std::min(worst_psnr, psnr(targets[i].data, sol_a[i].patch.data));
  }

  // (b) two random coded masks, central view optimised from the coded-image guess.
  const auto coded = MeasurementOperator::coded_aperture(random_coded(5, 2, rng), s);
  std::vector<PatchProblem> multiplexed;
  for (int i = 0; i < n; ++i) {
    const auto obs = coded.apply(targets[i].data);
    multiplexed.push_back({coded, obs, initial_central_view(coded, obs)});
  }
  const auto sol_b = solve_patches(model, multiplexed, DataLoss::L2, 0.0, true, opt, 730);
  double worst_res_b = 0.0;
  for (const auto& s_b : sol_b) worst_res_b = std::max(worst_res_b, s_b.residual);

  return {worst_res_a <= 1e-3 && worst_psnr >= 40.0 && worst_res_b <= 1e-3,
          "(a) max residual " + fmt("%.2e", worst_res_a) + ", min PSNR " + fmt("%.2f", worst_psnr) +
              " dB (>= 40); (b) max residual " + fmt("%.2e", worst_res_b) + " (<= 1e-3); " + std::to_string(n) +
              " patches each"};
}

// ------------------------------------------------------------------ 10

double novel_psnr(const LightField& ref, const LightField& est, const AngularMask& known) {
  return novel_view_psnr(ref, est, known, PsnrMode::PerChannelMean).mean;
}

Outcome criterion10() {
  Cvae model = desk_model();
  const LightField truth = textured_plane(5, 50, 50, 0.4, 1001, 1);
  const AngularMask known = corners_and_centre(5);
  const auto op = MeasurementOperator::view_mask(known, truth.shape());
  ReconProblem base;
  base.op = op;
  base.seed = 1002;

  ReconProblem clean = base;
  clean.observations = {op.apply(truth.channel(0))};
  const double p_clean = novel_psnr(truth, reconstruct(model, clean).field, known);

  const auto [noisy_lf, unused] =
      corrupt(truth, {CorruptionKind::Gaussian, 0.05, TargetViews::NonCentral, 1003});
  ReconProblem noisy = base;
  noisy.observations = {op.apply(noisy_lf.channel(0))};
  noisy.noisy = true;
  const double p_noisy = novel_psnr(truth, reconstruct(model, noisy).field, known);

  const auto [dropped_lf, pm] = corrupt(truth, {CorruptionKind::PixelDrop, 0.5, TargetViews::All, 1004});
  ReconProblem dropped = base;
  dropped.op = op.with_pixel_mask(op.field_mask_to_output(pm.as_float()));
  dropped.observations = {dropped.op.apply(dropped_lf.channel(0))};
  dropped.noisy = true;
  const ReconResult r_drop = reconstruct(model, dropped);
  bool finite = true;
  for (double r : r_drop.residuals) finite = finite && std::isfinite(r);
  const double p_drop = novel_psnr(truth, r_drop.field, known);

  const bool pass = p_clean - p_noisy <= 1.0 && finite && p_clean - p_drop <= 2.0;
  return {pass, "novel-view PSNR clean " + fmt("%.2f", p_clean) + " dB, gaussian 0.05 " + fmt("%.2f", p_noisy) +
                    " dB (drop <= 1), 50% pixel drop " + fmt("%.2f", p_drop) + " dB (drop <= 2), residuals " +
                    (finite ? "finite" : "NOT finite")};
}

// ------------------------------------------------------------------ 11

Outcome criterion11() {
  Cvae model = desk_model();
  const AngularMask known = corners_and_centre(5);
  int wins = 0;
  std::string values;
  for (int f = 0; f < 5; ++f) {
    const double disparity = -0.8 + 0.4 * f;
    const LightField truth = textured_plane(5, 35, 35, disparity, 1101 + f, 1);
    ReconProblem p;
    p.op = MeasurementOperator::view_mask(known, truth.shape());
    p.observations = {p.op.apply(truth.channel(0))};
    p.solver.max_iterations = 500;
    p.seed = 1110 + f;
    p.stride = 25;
    const double coarse = novel_psnr(truth, reconstruct(model, p).field, known);
    p.stride = 5;
    const double fine = novel_psnr(truth, reconstruct(model, p).field, known);
    wins += fine >= coarse;
    values += (f ? ", " : "") + fmt("%.2f", fine) + "/" + fmt("%.2f", coarse);
  }
  return {wins >= 4, "stride 5 >= stride 25 on " + std::to_string(wins) + "/5 fields (>= 4); PSNR dB " + values};
}

// ------------------------------------------------------------------ 9

Outcome criterion9() {
  const TrainConfig tc;
  const std::vector<std::pair<int, double>> table = {{0, 1e-3}, {40, 5e-4}, {60, 1e-4}, {120, 1e-5}};
  bool ok = true;
  std::string got;
  for (auto [epoch, expected] : table) {
    const double lr = lr_at(tc, epoch);
    ok = ok && std::abs(lr - expected) <= 1e-15;
    got += (got.empty() ? "" : " / ") + fmt("%.0e", lr);
  }
  return {ok, "lr at epochs 0/40/60/120: " + got};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::current_path() / "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: %s [--work-dir DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(g_work);

  // 8 runs before 7, 10 and 11, which use its model.
  const std::vector<std::pair<int, std::function<Outcome()>>> order = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},   {9, criterion9},
      {8, criterion8}, {7, criterion7}, {10, criterion10}, {11, criterion11}, {6, criterion6}};
  std::map<int, std::string> lines;
  int failed = 0;
  for (const auto& [id, fn] : order) {
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char head[64];
    std::snprintf(head, sizeof(head), "criterion %2d: %s  ", id, o.pass ? "PASS" : "FAIL");
    lines[id] = head + o.detail + " [" + fmt("%.1f", seconds) + " s]";
    std::printf("%s\n", lines[id].c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  // ctest hides the output of passing tests, so the summary also goes to a file.
  std::ofstream summary(g_work / "acceptance_summary.txt");
  std::printf("\nsummary\n");
  for (const auto& [id, line] : lines) {
    std::printf("%s\n", line.c_str());
    summary << line << "\n";
  }
  const char* twelve = "criterion 12: not run (full-scale recipe, see README)";
  std::printf("%s\n", twelve);
  summary << twelve << "\n";
  return failed == 0 ? 0 : 1;
}
