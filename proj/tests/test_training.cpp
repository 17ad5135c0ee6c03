#include <doctest.h>

#include <fstream>
#include <sstream>

#include "lfgen/error.hpp"
#include "lfgen/eval.hpp"
#include "lfgen/training.hpp"
#include "support/synthetic.hpp"

using namespace lfgen;
using lfgen::testing::TempDir;
using lfgen::testing::toy_patches;

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  CHECK(lr_at(c, 0) == 1e-3);
  CHECK(lr_at(c, 29) == 1e-3);
  CHECK(lr_at(c, 30) == 5e-4);
  CHECK(lr_at(c, 40) == 5e-4);
  CHECK(lr_at(c, 60) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(c, 120) == doctest::Approx(1e-5).epsilon(1e-12));
  int drops = 0;
  for (int e = 1; e < c.epochs; ++e) {
    CHECK(lr_at(c, e) <= lr_at(c, e - 1));
    if (lr_at(c, e) < lr_at(c, e - 1)) ++drops;
  }
  CHECK(drops == 3);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.milestones = {{50, 5}, {30, 2}};
  CHECK_THROWS_AS(c.validate(), UsageError);

  Cvae model(CvaeConfig{}, 1);
  TrainConfig one;
  one.batch_size = 1;
  CHECK_THROWS_AS(train(model, one, toy_patches(4, 5, 1)), UsageError);
  CHECK_THROWS_AS(train(model, TrainConfig{}, toy_patches(4, 7, 1)), DataError);
}

TEST_CASE("toy training halves the loss") {
  TempDir dir;
  Cvae model(CvaeConfig{}, 2);
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 16;
  c.seed = 3;
  c.log_path = dir / "log.csv";
  const auto patches = toy_patches(64, 5, 4);
  const auto log = train(model, c, patches);
  REQUIRE(log.size() == 20);
  CHECK(log.back().total <= 0.5 * log.front().total);

  const auto rows = read_csv(c.log_path);
  REQUIRE(rows.size() == 21);
  CHECK(rows[0] == std::vector<std::string>{"epoch", "lr", "total", "mse", "mmd", "wall_seconds"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stoi(rows[i][0]) == int(i) - 1);
    CHECK(std::stod(rows[i][1]) == lr_at(c, int(i) - 1));
    const double total = std::stod(rows[i][2]), mse = std::stod(rows[i][3]), mmd = std::stod(rows[i][4]);
    CHECK(total == doctest::Approx(mse + 100 * mmd).epsilon(1e-6));
  }
  for (const auto& m : log) CHECK(m.total == doctest::Approx(m.mse + 100 * m.mmd).epsilon(1e-9));

  const double p = autoencode_eval(model, patches);
  CHECK(std::isfinite(p));
  // Mean of per-patch PSNRs.
  double sum = 0;
  for (const auto& patch : patches) {
    const LFPatch rec = model.generate(model.encode(patch), patch.central_view());
    sum += psnr(patch.data, rec.data);
  }
  CHECK(p == doctest::Approx(sum / patches.size()).epsilon(1e-5));
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
  TempDir dir;
  const auto patches = toy_patches(9, 5, 5);  // batches of 4, 5 (single leftover merged)
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 4;
  c.seed = 6;
  c.milestones = {{2, 2.0}};

  Cvae straight(CvaeConfig{}, 7);
  const auto full = train(straight, c, patches);

  Cvae first(CvaeConfig{}, 7);
  TrainConfig half = c;
  half.epochs = 2;
  half.checkpoint_path = dir / "ck.bin";
  half.log_path = dir / "log.csv";
  train(first, half, patches);
  REQUIRE(std::filesystem::exists(half.checkpoint_path));

  Cvae resumed(CvaeConfig{}, 99);
  TrainConfig rest = c;
  rest.log_path = half.log_path;
  const auto tail = train(resumed, rest, patches, half.checkpoint_path);
  REQUIRE(tail.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(tail[i].epoch == full[i + 2].epoch);
    CHECK(tail[i].lr == full[i + 2].lr);
    CHECK(tail[i].total == full[i + 2].total);
    CHECK(tail[i].mse == full[i + 2].mse);
  }
  auto a = straight.state(), b = resumed.state();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(read_csv(half.log_path).size() == 5);

  // Wrong configuration.
  CvaeConfig seven;
  seven.angular = 7;
  Cvae other(seven, 1);
  nn::Adam adam(other.parameters(), {});
  CHECK_THROWS_AS(load_checkpoint(half.checkpoint_path, other, adam), DataError);
}

TEST_CASE("epoch callback stops training") {
  Cvae model(CvaeConfig{}, 8);
  TrainConfig c;
  c.epochs = 10;
  c.batch_size = 4;
  int calls = 0;
  const auto log = train(model, c, toy_patches(8, 5, 9), {}, [&](const EpochMetrics&) { return ++calls < 2; });
  CHECK(log.size() == 2);
  CHECK(calls == 2);
}
