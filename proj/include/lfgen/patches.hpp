#pragma once

#include <utility>
#include <vector>

#include "lfgen/lightfield.hpp"

namespace lfgen {

inline constexpr int kPatchSize = 25;

/// Single-channel light-field patch, packed (row, col, y, x) with a
/// kPatchSize x kPatchSize spatial extent.
struct LFPatch {
  int angular = 0;
  std::vector<float> data;

  LFPatch() = default;
  explicit LFPatch(int angular_res, float fill = 0.0f)
      : angular(angular_res),
        data(static_cast<std::size_t>(angular_res) * angular_res * kPatchSize * kPatchSize, fill) {}

  static constexpr std::size_t view_size() { return kPatchSize * kPatchSize; }
  float& at(int row, int col, int y, int x) {
    return data[((static_cast<std::size_t>(row) * angular + col) * kPatchSize + y) * kPatchSize + x];
  }
  float at(int row, int col, int y, int x) const {
    return data[((static_cast<std::size_t>(row) * angular + col) * kPatchSize + y) * kPatchSize + x];
  }
  /// Central view as a packed 25x25 image.
  std::vector<float> central_view() const;

  bool operator==(const LFPatch&) const = default;
};

/// Tiling geometry for patch extraction and overlap-averaged stitching.
struct PatchGrid {
  std::vector<std::pair<int, int>> origins;  // (y, x) top-left corners, row-major
  int stride = 0;
  int patch_size = kPatchSize;
  FieldShape field;
  std::vector<int> weight_map;  // patches covering each (y, x)

  /// Regular grid with the last row/column of origins clamped into bounds.
  static PatchGrid make(FieldShape field, int stride);
};

/// Origins along one axis: 0, s, 2s, ... with the last one clamped to size - 25.
std::vector<int> axis_origins(int size, int stride);

std::pair<std::vector<LFPatch>, PatchGrid> extract_patches(const LightField& lf_gray, int stride);

/// Crop an h x w window of every view from a packed single-channel field.
std::vector<float> crop_field(std::span<const float> field, FieldShape shape, int oy, int ox, int h, int w);

/// Crop one patch at (oy, ox) from a packed single-channel field.
LFPatch crop_patch(std::span<const float> field, FieldShape shape, int oy, int ox);

/// Mean of all covering patch values per pixel and angular position.
LightField stitch_patches(const std::vector<LFPatch>& patches, const PatchGrid& grid);

}  // namespace lfgen
