#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "lfgen/error.hpp"
#include "lfgen/eval.hpp"
#include "support/synthetic.hpp"

using namespace lfgen;
using lfgen::testing::random_field;
using lfgen::testing::TempDir;

namespace {

LightField shifted(const LightField& lf, float delta) {
  std::vector<float> d(lf.data().begin(), lf.data().end());
  for (float& v : d) v = std::clamp(v + delta, 0.0f, 1.0f);
  return LightField(lf.angular(), lf.height(), lf.width(), lf.channels(), std::move(d));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("psnr") {
  const LightField a = random_field(5, 8, 8, 3, 1);
  CHECK(psnr(a, a, PsnrMode::PerChannelMean) == kPsnrCap);
  CHECK(psnr(a, a, PsnrMode::Luminance) == kPsnrCap);

  const LightField flat(5, 8, 8, 1, 0.3f), flat2(5, 8, 8, 1, 0.4f);
  CHECK(psnr(flat, flat2, PsnrMode::PerChannelMean) == doctest::Approx(20.0).epsilon(1e-5));

  const LightField b = random_field(5, 8, 8, 3, 2);
  SUBCASE("matches a direct recomputation") {
    const auto ra = a.channel(1), rb = b.channel(1);
    double se = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) se += (double(ra[i]) - rb[i]) * (double(ra[i]) - rb[i]);
    CHECK(psnr(ra, rb) == doctest::Approx(10 * std::log10(ra.size() / se)).epsilon(1e-9));
    double mean = 0;
    for (int c = 0; c < 3; ++c) mean += psnr(a.channel(c), b.channel(c)) / 3;
    CHECK(psnr(a, b, PsnrMode::PerChannelMean) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(psnr(a, b, PsnrMode::Luminance) == psnr(to_grayscale(a).data(), to_grayscale(b).data()));
  }
  SUBCASE("symmetric") {
    CHECK(psnr(a, b, PsnrMode::PerChannelMean) == psnr(b, a, PsnrMode::PerChannelMean));
    CHECK(psnr(a, b, PsnrMode::Luminance) == psnr(b, a, PsnrMode::Luminance));
  }
  SUBCASE("decreasing in noise amplitude") {
    const LightField ref(5, 8, 8, 1, 0.5f);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> noise(ref.data().size());
    for (float& v : noise) v = u(rng);
    double prev = kPsnrCap + 1;
    for (float amp : {0.01f, 0.02f, 0.05f, 0.1f, 0.2f, 0.4f}) {
      std::vector<float> d(noise);
      for (float& v : d) v = 0.5f + amp * v;
      const double p = psnr(ref, LightField(5, 8, 8, 1, std::move(d)), PsnrMode::PerChannelMean);
      CHECK(p < prev);
      prev = p;
    }
  }
  CHECK_THROWS_AS(psnr(a, random_field(5, 8, 9, 3, 1), PsnrMode::Luminance), DataError);
  CHECK_THROWS_AS(psnr(std::vector<float>(3), std::vector<float>(4)), DataError);
}

TEST_CASE("novel view psnr") {
  const LightField ref = random_field(7, 10, 10, 3, 4);
  const LightField est = shifted(ref, 0.05f);
  AngularMask grid3 = AngularMask::one_hot(7, 0, 0);
  for (int r : {0, 3, 6})
    for (int c : {0, 3, 6}) grid3.known[r * 7 + c] = 1;
  const ViewPsnr v = novel_view_psnr(ref, est, grid3, PsnrMode::Luminance);
  CHECK(v.count == 40);
  CHECK(std::isnan(v.grid[0]));
  CHECK(!std::isnan(v.grid[1]));

  AngularMask five = AngularMask::one_hot(7, 3, 3);
  for (int i : {0, 6, 42, 48}) five.known[i] = 1;
  CHECK(novel_view_psnr(ref, est, five, PsnrMode::Luminance).count == 44);

  CHECK(novel_view_psnr(ref, ref, grid3, PsnrMode::Luminance).mean == kPsnrCap);

  // Toggling the content of a known view leaves the mean unchanged.
  LightField poked = est;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c) poked.at(3, 3, y, x, c) = 1.0f - poked.at(3, 3, y, x, c);
  CHECK(novel_view_psnr(ref, poked, grid3, PsnrMode::Luminance).mean == v.mean);
  CHECK(novel_view_psnr(ref, poked, grid3, PsnrMode::PerChannelMean).mean ==
        novel_view_psnr(ref, est, grid3, PsnrMode::PerChannelMean).mean);

  // Mean is over the declared views only.
  double sum = 0;
  for (double g : v.grid)
    if (!std::isnan(g)) sum += g;
  CHECK(v.mean == doctest::Approx(sum / 40));

  AngularMask none = AngularMask::one_hot(7, 0, 0);
  none.known[0] = 0;
  CHECK(novel_view_psnr(ref, est, none, PsnrMode::PerChannelMean).count == 49);
  AngularMask all = none;
  std::fill(all.known.begin(), all.known.end(), 1);
  CHECK_THROWS_AS(novel_view_psnr(ref, est, all, PsnrMode::Luminance), DataError);
  CHECK_THROWS_AS(novel_view_psnr(ref, est, AngularMask::one_hot(5, 2, 2), PsnrMode::Luminance), DataError);
}

TEST_CASE("error map") {
  const std::vector<float> ref(12, 0.3f), same(12, 0.3f), near(12, 0.35f), far(12, 0.5f);
  for (float v : error_map(ref, same, 10)) CHECK(v == 0.0f);
  for (float v : error_map(ref, near, 10)) CHECK(v == doctest::Approx(0.5f).epsilon(1e-5));
  for (float v : error_map(ref, far, 10)) CHECK(v == 1.0f);
  const LightField a = random_field(1, 20, 20, 1, 5), b = random_field(1, 20, 20, 1, 6);
  for (float v : error_map(a.data(), b.data(), 10)) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  TempDir dir;
  const auto map = error_map(ref, near, 10);
  write_error_map(dir / "e.png", map, 3, 4);
  const cv::Mat img = cv::imread((dir / "e.png").string(), cv::IMREAD_UNCHANGED);
  REQUIRE(img.rows == 3);
  CHECK(img.cols == 4);
  CHECK(img.type() == CV_8UC1);
  CHECK(std::abs(int(img.at<std::uint8_t>(1, 2)) - 128) <= 1);
  CHECK_THROWS_AS(write_error_map(dir / "f.png", map, 3, 3), DataError);
}

TEST_CASE("report") {
  TempDir dir;
  std::vector<EvalRecord> rs;
  rs.push_back({"dino", "views", "M2", 5, "l2", 30.5, 1.25});
  rs.push_back({"dino", "views", "M1", 25, "l2", 29.0, 0.5});
  rs.push_back({"dino", "views", "M2", 25, "l2", 28.123456, 0.25});
  rs.push_back({"dino", "views", "M1", 5, "l2", 31.0, 2.0});
  emit_report(rs, dir / "r.csv");
  CHECK(slurp(dir / "r.csv") ==
        "lf,task,mask,stride,loss,mean_psnr_db,runtime_s\n"
        "dino,views,M1,5,l2,31.0000,2.000\n"
        "dino,views,M1,25,l2,29.0000,0.500\n"
        "dino,views,M2,5,l2,30.5000,1.250\n"
        "dino,views,M2,25,l2,28.1235,0.250\n");
  const std::string table = slurp(dir / "r.txt");
  CHECK(table.find("PSNR [dB]") != std::string::npos);
  CHECK(table.find("28.12") != std::string::npos);

  std::reverse(rs.begin(), rs.end());
  emit_report(rs, dir / "s.csv");
  CHECK(slurp(dir / "s.csv") == slurp(dir / "r.csv"));
  CHECK(slurp(dir / "s.txt") == slurp(dir / "r.txt"));

  emit_report({rs[0]}, dir / "one.csv");
  const std::string one = slurp(dir / "one.csv");
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);
  CHECK_THROWS_AS(emit_report({}, dir / "none.csv"), DataError);
  CHECK_THROWS_AS(emit_report(rs, dir / "missing" / "x.csv"), DataError);
}
