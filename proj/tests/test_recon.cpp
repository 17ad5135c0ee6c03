#include <doctest.h>

#include <cmath>
#include <random>

#include "lfgen/error.hpp"
#include "lfgen/eval.hpp"
#include "lfgen/recon.hpp"
#include "support/synthetic.hpp"

using namespace lfgen;
using lfgen::testing::random_field;
using lfgen::testing::textured_plane;

namespace {

constexpr FieldShape kPatchShape{5, 25, 25};

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

MeasurementOperator op_of_kind(OperatorKind kind, FieldShape shape, std::uint64_t seed) {
  AngularMask corners = AngularMask::one_hot(shape.angular, shape.angular / 2, shape.angular / 2);
  const int e = shape.angular - 1;
  for (auto [r, c] : {std::pair{0, 0}, {0, e}, {e, 0}, {e, e}}) corners.known[r * shape.angular + c] = 1;
  switch (kind) {
    case OperatorKind::ViewMask:
      return MeasurementOperator::view_mask(corners, shape);
    case OperatorKind::SpatialAngular:
      return MeasurementOperator::spatial_angular(corners, DownsampleSpec::uniform(shape.angular, 2), shape);
    case OperatorKind::CodedAperture: {
      CodedMaskSet m{shape.angular, {random_values(shape.angular * shape.angular, seed),
                                     random_values(shape.angular * shape.angular, seed + 1)}};
      return MeasurementOperator::coded_aperture(m, shape);
    }
  }
  throw std::logic_error("kind");
}

PatchProblem make_problem(const MeasurementOperator& op, const LFPatch& truth) {
  PatchProblem p{op, op.apply(truth.data), truth.central_view()};
  return p;
}

double brute_tv(const std::vector<float>& img, int h, int w) {
  double s = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) s += std::abs(double(img[y * w + x + 1]) - img[y * w + x]);
  for (int x = 0; x < w; ++x)
    for (int y = 0; y + 1 < h; ++y) s += std::abs(double(img[(y + 1) * w + x]) - img[y * w + x]);
  return s;
}

}  // namespace

TEST_CASE("data loss") {
  const std::vector<float> a = random_values(100, 1);
  CHECK(data_loss(DataLoss::L2, a, a) == 0.0);
  CHECK(data_loss(DataLoss::L1, a, a) == 0.0);
  const std::vector<float> z(100, 0.0f), h(100, 0.5f);
  CHECK(data_loss(DataLoss::L2, z, h) == doctest::Approx(0.25));
  CHECK(data_loss(DataLoss::L1, z, h) == doctest::Approx(0.5));

  const std::vector<float> b = random_values(100, 2);
  std::vector<float> mask(100, 0.0f);
  for (int i = 0; i < 100; i += 2) mask[i] = 1.0f;
  double l1 = 0, l2 = 0;
  for (int i = 0; i < 100; i += 2) {
    l1 += std::abs(double(a[i]) - b[i]);
    l2 += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  }
  CHECK(data_loss(DataLoss::L2, a, b, mask) == doctest::Approx(l2 / 50).epsilon(1e-12));
  CHECK(data_loss(DataLoss::L1, a, b, mask) == doctest::Approx(l1 / 50).epsilon(1e-12));
  CHECK_THROWS_AS(data_loss(DataLoss::L2, a, std::vector<float>(99)), DataError);
}

TEST_CASE("total variation") {
  CHECK(tv(std::vector<float>(30, 0.7f), 5, 6) == 0.0);
  std::vector<float> step(5 * 6, 0.2f);
  for (int y = 0; y < 5; ++y)
    for (int x = 3; x < 6; ++x) step[y * 6 + x] = 0.5f;
  CHECK(tv(step, 5, 6) == doctest::Approx(5 * 0.3).epsilon(1e-6));
  const auto img = random_values(7 * 9, 3);
  CHECK(tv(img, 7, 9) == doctest::Approx(brute_tv(img, 7, 9)).epsilon(1e-12));

  // Gradient against finite differences away from kinks.
  std::vector<float> g(img.size(), 0.0f);
  tv_gradient(img, 7, 9, 2.0, g);
  auto x = img;
  for (std::size_t i = 0; i < x.size(); i += 4) {
    const float s = x[i];
    x[i] = s + 1e-4f;
    const double fp = 2 * tv(x, 7, 9);
    x[i] = s - 1e-4f;
    const double fm = 2 * tv(x, 7, 9);
    x[i] = s;
    CHECK((fp - fm) / 2e-4 == doctest::Approx(g[i]).epsilon(1e-2));
  }
}

TEST_CASE("objective gradients through every operator") {
  // Batch-norm statistics from real patches keep activations at unit scale,
  // so the output depends measurably on z.
  Cvae model(CvaeConfig{}, 1);
  calibrate_batch_norm(model, pack_patches(lfgen::testing::toy_patches(8, 5, 3)));
  CvaeD model_d = cvae_cast<double>(model);
  const auto lf = textured_plane(5, 25, 25, 0.5, 2);
  const LFPatch truth = crop_patch(lf.data(), lf.shape(), 0, 0);
  std::mt19937_64 rng(3);
  for (auto kind : {OperatorKind::ViewMask, OperatorKind::SpatialAngular, OperatorKind::CodedAperture}) {
    CAPTURE(static_cast<int>(kind));
    PatchProblem p = make_problem(op_of_kind(kind, kPatchShape, 4), truth);
    const nn::Tensor zt = sample_prior(1, 5);
    std::vector<float> z(zt.values().begin(), zt.values().end());
    std::vector<std::size_t> coords;
    for (int k = 0; k < 10; ++k) coords.push_back(rng() % z.size());

    // Double precision: every probed coordinate within 1e-4.
    std::vector<double> zd(z.begin(), z.end()), cd(p.central.begin(), p.central.end()), gd, gcd;
    const std::vector<double> obs_d(p.obs.begin(), p.obs.end());
    measurement_misfit<double>(model_d, p.op, obs_d, zd, cd, &gd, &gcd);
    auto fd_check = [&](std::vector<double>& x, const std::vector<double>& g, std::size_t i) {
      const double s = x[i], h = 1e-6;
      x[i] = s + h;
      const double fp = measurement_misfit<double>(model_d, p.op, obs_d, zd, cd);
      x[i] = s - h;
      const double fm = measurement_misfit<double>(model_d, p.op, obs_d, zd, cd);
      x[i] = s;
      const double fd = (fp - fm) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max(std::abs(fd), std::abs(g[i])));
    };
    for (std::size_t i : coords) fd_check(zd, gd, i);
    for (int probe = 0; probe < 5; ++probe) fd_check(cd, gcd, rng() % cd.size());

    // Single precision: the solver objective gradients are the double
    // misfit gradients rescaled by 1 / (number of observed entries).
    auto rel_err = [](const std::vector<float>& f, const std::vector<double>& d, double scale) {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        num += (f[i] - d[i] * scale) * (f[i] - d[i] * scale);
        den += d[i] * scale * d[i] * scale;
      }
      return std::sqrt(num / den);
    };
    std::vector<float> gz, gc;
    patch_objective(model, p, z, DataLoss::L2, 0.0, &gz, &gc);
    const double scale = 1.0 / static_cast<double>(p.obs.size());
    CHECK(rel_err(gz, gd, scale) < 1e-3);
    CHECK(rel_err(gc, gcd, scale) < 1e-3);

    // The TV term adds exactly its own subgradient to the central view gradient.
    std::vector<float> gz_tv, gc_tv, g_tv(p.central.size(), 0.0f);
    patch_objective(model, p, z, DataLoss::L2, 0.01, &gz_tv, &gc_tv);
    tv_gradient(p.central, kPatchSize, kPatchSize, 0.01, g_tv);
    CHECK(gz_tv == gz);
    for (std::size_t i = 0; i < gc.size(); ++i)
      CHECK(std::abs(gc_tv[i] - gc[i] - g_tv[i]) <= 1e-6 + 1e-3 * std::abs(g_tv[i]));
  }
}

TEST_CASE("entries outside the pixel mask never influence the objective") {
  Cvae model(CvaeConfig{}, 1);
  const auto truth = crop_patch(textured_plane(5, 25, 25, 0.3, 6).data(), kPatchShape, 0, 0);
  const auto base = op_of_kind(OperatorKind::ViewMask, kPatchShape, 1);
  std::vector<float> pm(base.output_size(), 1.0f);
  for (std::size_t i = 0; i < pm.size(); i += 3) pm[i] = 0.0f;
  PatchProblem p = make_problem(base.with_pixel_mask(pm), truth);
  const nn::Tensor zt = sample_prior(1, 7);
  const std::vector<float> z(zt.values().begin(), zt.values().end());
  for (DataLoss loss : {DataLoss::L2, DataLoss::L1}) {
    const double f0 = patch_objective(model, p, z, loss, 0.0);
    PatchProblem poked = p;
    for (std::size_t i = 0; i < pm.size(); i += 3) poked.obs[i] = 0.77f;
    CHECK(patch_objective(model, poked, z, loss, 0.0) == f0);
  }
}

TEST_CASE("latent solver") {
  Cvae model(CvaeConfig{}, 8);
  const auto lf = textured_plane(5, 40, 40, 0.4, 9);
  std::vector<PatchProblem> problems;
  for (auto [oy, ox] : {std::pair{0, 0}, {5, 10}, {15, 15}})
    problems.push_back(make_problem(MeasurementOperator::view_mask(AngularMask::one_hot(5, 2, 2), kPatchShape),
                                    crop_patch(lf.data(), lf.shape(), oy, ox)));
  SolverOptions o;
  o.max_iterations = 30;
  o.keep_trace = true;

  SUBCASE("deterministic, and batching only changes rounding") {
    o.batch_size = 3;
    const auto a = solve_patches(model, problems, DataLoss::L2, 0.0, false, o, 10);
    const auto a2 = solve_patches(model, problems, DataLoss::L2, 0.0, false, o, 10);
    o.batch_size = 2;
    const auto b = solve_patches(model, problems, DataLoss::L2, 0.0, false, o, 10);
    o.batch_size = 1;
    const auto c = solve_latent(model, problems[0], DataLoss::L2, o, 10);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a[i].z == a2[i].z);
      CHECK(a[i].patch == a2[i].patch);
      CHECK(a[i].iterations == 30);
      CHECK(a[i].trace.size() == 31);
      for (std::size_t k = 0; k < a[i].z.size(); ++k)
        CHECK(b[i].z[k] == doctest::Approx(a[i].z[k]).epsilon(1e-3).scale(1e-3));
    }
    for (std::size_t k = 0; k < c.z.size(); ++k) CHECK(c.z[k] == doctest::Approx(a[0].z[k]).epsilon(1e-3).scale(1e-3));
    CHECK(a[0].z != a[1].z);
  }
  SUBCASE("objective decreases in the windowed sense") {
    o.max_iterations = 100;
    for (const auto& s : solve_patches(model, problems, DataLoss::L2, 0.0, false, o, 11)) {
      double first = 0, last = 0;
      for (int i = 0; i < 20; ++i) {
        first += s.trace[i];
        last += s.trace[s.trace.size() - 1 - i];
      }
      CHECK(last <= first);
      CHECK(s.residual == s.objective);
    }
  }
  SUBCASE("zero operator runs to the iteration cap") {
    PatchProblem p = problems[0];
    p.op = p.op.with_pixel_mask(std::vector<float>(p.op.output_size(), 0.0f));
    const auto s = solve_latent(model, p, DataLoss::L2, o, 12);
    CHECK(s.iterations == 30);
    for (float v : s.z) CHECK(std::isfinite(v));
    CHECK(s.objective == 0.0);
  }
  SUBCASE("stopping rule") {
    o.max_iterations = 2000;
    o.tolerance = 1e30;
    const auto s = solve_latent(model, problems[0], DataLoss::L2, o, 13);
    CHECK(s.iterations == o.window);
  }
  SUBCASE("joint search moves the central view") {
    const auto s = solve_latent_cv(model, problems[0], DataLoss::L2, 0.0, o, 14);
    CHECK(s.central != problems[0].central);
    CHECK(s.iterations == 30);
  }
  SUBCASE("invalid input") {
    PatchProblem bad = problems[0];
    bad.obs.pop_back();
    CHECK_THROWS_AS(solve_latent(model, bad, DataLoss::L2, o, 1), DataError);
    o.window = 0;
    CHECK_THROWS_AS(solve_latent(model, problems[0], DataLoss::L2, o, 1), UsageError);
  }
}

TEST_CASE("central view initialisation") {
  const FieldShape s{5, 25, 25};
  const auto truth = textured_plane(5, 25, 25, 0.2, 15);
  CodedMaskSet m{5, {std::vector<float>(25, 0.0f)}};
  m.masks[0][12] = 1.0f;
  const auto coded = MeasurementOperator::coded_aperture(m, s);
  const auto init = initial_central_view(coded, coded.apply(truth.data()));
  CHECK(psnr(init, truth.view(2, 2, 0)) >= 60.0);

  AngularMask corners = AngularMask::one_hot(5, 0, 0);
  corners.known[4] = 1;
  const auto vm = MeasurementOperator::view_mask(corners, s);
  const auto mean = initial_central_view(vm, vm.apply(truth.data()));
  CHECK(mean[7] == doctest::Approx((truth.at(0, 0, 0, 7) + truth.at(0, 4, 0, 7)) / 2));

  // Central view observed except where the pixel mask drops it.
  corners.known[12] = 1;
  std::vector<float> pm(s.size(), 1.0f);
  pm[12 * s.view_size() + 7] = 0.0f;
  pm[12 * s.view_size() + 8] = 0.0f;
  pm[0 * s.view_size() + 8] = 0.0f;
  const auto masked = MeasurementOperator::view_mask(corners, s).with_pixel_mask(pm);
  const auto filled = initial_central_view(masked, masked.apply(truth.data()));
  CHECK(filled[0] == truth.at(2, 2, 0, 0));
  CHECK(filled[7] == doctest::Approx((truth.at(0, 0, 0, 7) + truth.at(0, 4, 0, 7)) / 2));
  CHECK(filled[8] == doctest::Approx(truth.at(0, 4, 0, 8)));
  pm.assign(s.size(), 0.0f);
  const auto blind = MeasurementOperator::view_mask(corners, s).with_pixel_mask(pm);
  CHECK(initial_central_view(blind, blind.apply(truth.data()))[3] == 0.5f);
}

TEST_CASE("reconstruct orchestration") {
  Cvae model(CvaeConfig{}, 16);
  const LightField lf = textured_plane(5, 30, 30, 0.3, 17, 3);
  ReconProblem p;
  p.op = op_of_kind(OperatorKind::ViewMask, lf.shape(), 1);
  for (int c = 0; c < 3; ++c) p.observations.push_back(p.op.apply(lf.channel(c)));
  p.solver.max_iterations = 5;
  p.seed = 3;

  const ReconResult r = reconstruct(model, p);
  CHECK(r.field.channels() == 3);
  CHECK(r.field.shape() == lf.shape());
  CHECK(r.residuals.size() == 12);
  CHECK(!r.central_view_optimized);
  CHECK(r.copied_back);
  // Known clean views are copied back.
  for (int c = 0; c < 3; ++c) {
    CHECK(r.field.view(0, 4, c) == lf.view(0, 4, c));
    CHECK(r.field.view(2, 2, c) == lf.view(2, 2, c));
  }
  for (float v : r.field.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  SUBCASE("channels are independent") {
    ReconProblem q = p;
    std::swap(q.observations[0], q.observations[2]);
    const ReconResult s = reconstruct(model, q);
    CHECK(s.field.channel(0) == r.field.channel(2));
    CHECK(s.field.channel(2) == r.field.channel(0));
    CHECK(s.field.channel(1) == r.field.channel(1));
  }
  SUBCASE("noisy observations are not copied back") {
    p.noisy = true;
    const ReconResult s = reconstruct(model, p);
    CHECK(!s.copied_back);
    CHECK(s.field.view(0, 4, 0) != lf.view(0, 4, 0));
  }
  SUBCASE("a partly unobserved central view is optimised") {
    std::vector<float> pm(lf.shape().size(), 1.0f);
    pm[12 * lf.shape().view_size() + 40] = 0.0f;
    p.op = p.op.with_pixel_mask(p.op.field_mask_to_output(pm));
    for (int c = 0; c < 3; ++c) p.observations[c] = p.op.apply(lf.channel(c));
    p.noisy = true;
    const ReconResult s = reconstruct(model, p);
    CHECK(s.central_view_optimized);
    CHECK(!s.copied_back);
  }
  SUBCASE("an unreliable central view is optimised") {
    p.central_view_available = false;
    p.noisy = true;
    CHECK(reconstruct(model, p).central_view_optimized);
  }
  SUBCASE("coded aperture optimises the central view") {
    ReconProblem q = p;
    q.op = op_of_kind(OperatorKind::CodedAperture, lf.shape(), 2);
    q.observations.clear();
    q.observations.push_back(q.op.apply(lf.channel(0)));
    q.stride = 5;
    const ReconResult s = reconstruct(model, q);
    CHECK(s.central_view_optimized);
    CHECK(!s.copied_back);
    CHECK(s.field.channels() == 1);
    CHECK(s.residuals.size() == 4);
    for (double v : s.residuals) CHECK(std::isfinite(v));
  }
  SUBCASE("errors") {
    ReconProblem q = p;
    q.observations[1].pop_back();
    CHECK_THROWS_AS(reconstruct(model, q), DataError);
    q = p;
    q.observations.pop_back();
    CHECK_THROWS_AS(reconstruct(model, q), DataError);
    q = p;
    q.stride = 0;
    CHECK_THROWS_AS(reconstruct(model, q), UsageError);
    CvaeConfig seven;
    seven.angular = 7;
    Cvae other(seven, 1);
    CHECK_THROWS_AS(reconstruct(other, p), DataError);
  }
}
