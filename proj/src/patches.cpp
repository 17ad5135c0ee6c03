#include "lfgen/patches.hpp"

#include <algorithm>
#include <string>

#include "lfgen/error.hpp"

namespace lfgen {

std::vector<float> LFPatch::central_view() const {
  const int c = angular / 2;
  const auto begin = data.begin() + static_cast<std::ptrdiff_t>((c * angular + c) * view_size());
  return {begin, begin + static_cast<std::ptrdiff_t>(view_size())};
}

std::vector<int> axis_origins(int size, int stride) {
  if (size < kPatchSize) throw DataError("field smaller than patch size");
  if (stride < 1 || stride > kPatchSize) throw UsageError("stride must be in [1, 25]");
  const int span = size - kPatchSize;
  const int count = (span + stride - 1) / stride + 1;
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) out[i] = std::min(i * stride, span);
  return out;
}

PatchGrid PatchGrid::make(FieldShape field, int stride) {
  if (field.height < kPatchSize || field.width < kPatchSize)
    throw DataError("field " + std::to_string(field.height) + "x" + std::to_string(field.width) +
                    " is smaller than the 25x25 patch size");
  PatchGrid grid;
  grid.stride = stride;
  grid.field = field;
  const auto ys = axis_origins(field.height, stride);
  const auto xs = axis_origins(field.width, stride);
  grid.weight_map.assign(field.view_size(), 0);
  for (int oy : ys)
    for (int ox : xs) {
      grid.origins.emplace_back(oy, ox);
      for (int y = oy; y < oy + kPatchSize; ++y)
        for (int x = ox; x < ox + kPatchSize; ++x) ++grid.weight_map[static_cast<std::size_t>(y) * field.width + x];
    }
  return grid;
}

std::vector<float> crop_field(std::span<const float> field, FieldShape shape, int oy, int ox, int h, int w) {
  if (oy < 0 || ox < 0 || oy + h > shape.height || ox + w > shape.width)
    throw DataError("crop window out of bounds");
  std::vector<float> out(static_cast<std::size_t>(shape.angular) * shape.angular * h * w);
  float* dst = out.data();
  for (int v = 0; v < shape.angular * shape.angular; ++v)
    for (int y = 0; y < h; ++y, dst += w) {
      const float* src = field.data() + (static_cast<std::size_t>(v) * shape.height + oy + y) * shape.width + ox;
      std::copy(src, src + w, dst);
    }
  return out;
}

LFPatch crop_patch(std::span<const float> field, FieldShape shape, int oy, int ox) {
  LFPatch p(shape.angular);
  p.data = crop_field(field, shape, oy, ox, kPatchSize, kPatchSize);
  return p;
}

std::pair<std::vector<LFPatch>, PatchGrid> extract_patches(const LightField& lf_gray, int stride) {
  if (lf_gray.channels() != 1) throw DataError("extract_patches expects a grayscale field");
  PatchGrid grid = PatchGrid::make(lf_gray.shape(), stride);
  std::vector<LFPatch> patches;
  patches.reserve(grid.origins.size());
  for (auto [oy, ox] : grid.origins) patches.push_back(crop_patch(lf_gray.data(), grid.field, oy, ox));
  return {std::move(patches), std::move(grid)};
}

LightField stitch_patches(const std::vector<LFPatch>& patches, const PatchGrid& grid) {
  if (patches.size() != grid.origins.size())
    throw DataError("patch count " + std::to_string(patches.size()) + " does not match grid (" +
                    std::to_string(grid.origins.size()) + ")");
  const FieldShape s = grid.field;
  std::vector<double> acc(s.size(), 0.0);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const LFPatch& p = patches[i];
    if (p.angular != s.angular) throw DataError("patch angular size does not match grid");
    const auto [oy, ox] = grid.origins[i];
    for (int r = 0; r < s.angular; ++r)
      for (int c = 0; c < s.angular; ++c)
        for (int y = 0; y < kPatchSize; ++y) {
          double* dst = acc.data() + ((static_cast<std::size_t>(r) * s.angular + c) * s.height + oy + y) * s.width + ox;
          const float* src =
              p.data.data() + ((static_cast<std::size_t>(r) * s.angular + c) * kPatchSize + y) * kPatchSize;
          for (int x = 0; x < kPatchSize; ++x) dst[x] += src[x];
        }
  }
  std::vector<float> out(s.size());
  const std::size_t vs = s.view_size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i] / grid.weight_map[i % vs]);
  return LightField(s.angular, s.height, s.width, 1, std::move(out), /*clamp=*/true);
}

}  // namespace lfgen
