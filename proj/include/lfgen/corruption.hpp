#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "lfgen/lightfield.hpp"

namespace lfgen {

enum class CorruptionKind { Gaussian, SaltPepper, PixelDrop };
enum class TargetViews { All, NonCentral };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Gaussian;
  double magnitude = 0.0;  // sigma, occurrence probability p, or drop fraction
  TargetViews target = TargetViews::All;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-pixel observation mask over (row, col, y, x); 1 = observed. Shared by
/// all colour channels.
struct PixelMask {
  FieldShape shape;
  std::vector<std::uint8_t> observed;

  static PixelMask all_observed(FieldShape shape) { return {shape, std::vector<std::uint8_t>(shape.size(), 1)}; }
  std::size_t observed_count() const;
  std::vector<float> as_float() const { return {observed.begin(), observed.end()}; }
  bool operator==(const PixelMask&) const = default;
};

/// Gaussian adds N(0, sigma^2) per value then clamps to [0,1]; salt-and-pepper
/// sets a targeted pixel to 0 or 1 with probability p/2 each; pixel drop zeroes
/// each targeted pixel with probability `fraction` and clears it in the mask.
std::pair<LightField, PixelMask> corrupt(const LightField& lf, const CorruptionSpec& spec);

/// JSON: {"shape": [N_v, N_v, H, W], "observed": [0/1, ...]} in (row, col, y, x) order.
void save_pixel_mask(const PixelMask& mask, const std::filesystem::path& path);
PixelMask load_pixel_mask(const std::filesystem::path& path);

}  // namespace lfgen
