#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lfgen/lightfield.hpp"
#include "lfgen/patches.hpp"

namespace lfgen::testing {

inline LightField random_field(int angular, int height, int width, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(angular) * angular * height * width * channels);
  for (float& v : data) v = u(rng);
  return LightField(angular, height, width, channels, std::move(data));
}

/// Smooth analytic texture with a few random sinusoids, values in [0.1, 0.9].
struct Texture {
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves;
  double offset = 0.5;

  static Texture random(std::uint64_t seed, int count = 4, double max_freq = 0.25) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> f(-max_freq, max_freq), ph(0.0, 6.283185307179586);
    Texture t;
    for (int i = 0; i < count; ++i) t.waves.push_back({f(rng), f(rng), ph(rng), 0.4 / count});
    return t;
  }

  double operator()(double y, double x) const {
    double v = offset;
    for (const Wave& w : waves) v += w.amp * std::sin(w.fy * y + w.fx * x + w.phase);
    return v;
  }
};

/// Single fronto-parallel textured plane: L(r, c, y, x) = T(y + d (r - a), x + d (c - a)).
inline LightField textured_plane(int angular, int height, int width, double disparity, std::uint64_t seed,
                                 int channels = 1) {
  std::vector<Texture> tex;
  for (int ch = 0; ch < channels; ++ch) tex.push_back(Texture::random(seed * 31 + ch));
  const int a = angular / 2;
  std::vector<float> data(static_cast<std::size_t>(angular) * angular * height * width * channels);
  std::size_t i = 0;
  for (int r = 0; r < angular; ++r)
    for (int c = 0; c < angular; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          for (int ch = 0; ch < channels; ++ch)
            data[i++] = static_cast<float>(tex[ch](y + disparity * (r - a), x + disparity * (c - a)));
  return LightField(angular, height, width, channels, std::move(data));
}

/// Patches cropped at random positions from textured planes of random
/// disparity in [-1, 1].
inline std::vector<LFPatch> toy_patches(int count, int angular, std::uint64_t seed, int fields = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> disp(-1.0, 1.0);
  std::vector<LightField> lfs;
  for (int f = 0; f < fields; ++f) lfs.push_back(textured_plane(angular, 60, 60, disp(rng), rng()));
  std::uniform_int_distribution<int> pos(0, 60 - kPatchSize);
  std::vector<LFPatch> out;
  for (int i = 0; i < count; ++i) {
    const LightField& lf = lfs[static_cast<std::size_t>(i) % lfs.size()];
    out.push_back(crop_patch(lf.data(), lf.shape(), pos(rng), pos(rng)));
  }
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lfgen_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace lfgen::testing
