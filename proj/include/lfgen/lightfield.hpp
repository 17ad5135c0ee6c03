#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lfgen {

/// Angular and spatial extent of a single-channel light field.
struct FieldShape {
  int angular = 0;  // N_v; the angular grid is N_v x N_v
  int height = 0;
  int width = 0;

  std::size_t view_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return static_cast<std::size_t>(angular) * angular * view_size(); }
  int central() const { return angular / 2; }
  bool operator==(const FieldShape&) const = default;
};

/// 4D radiance volume stored as a dense (row, col, y, x, channel) array.
///
/// Values are radiance in [0, 1]. Construction rejects non-finite values and
/// values outside [0, 1] unless `clamp` is set, in which case they are clamped.
class LightField {
 public:
  LightField() = default;
  LightField(int angular, int height, int width, int channels, float fill = 0.0f);
  LightField(int angular, int height, int width, int channels, std::vector<float> data,
             bool clamp = false);

  int angular() const { return angular_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  FieldShape shape() const { return {angular_, height_, width_}; }
  bool empty() const { return data_.empty(); }

  std::size_t index(int row, int col, int y, int x, int c = 0) const {
    return ((((static_cast<std::size_t>(row) * angular_ + col) * height_ + y) * width_ + x) *
            channels_) +
           c;
  }
  float& at(int row, int col, int y, int x, int c = 0) { return data_[index(row, col, y, x, c)]; }
  float at(int row, int col, int y, int x, int c = 0) const {
    return data_[index(row, col, y, x, c)];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Single channel as a packed (row, col, y, x) array.
  std::vector<float> channel(int c) const;
  void set_channel(int c, std::span<const float> values);

  /// Single view as a packed (y, x) array of one channel.
  std::vector<float> view(int row, int col, int c = 0) const;

  bool operator==(const LightField&) const = default;

 private:
  void validate(bool clamp);

  int angular_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// ITU-R BT.601 luma weights.
inline constexpr float kLumaR = 0.299f;
inline constexpr float kLumaG = 0.587f;
inline constexpr float kLumaB = 0.114f;

/// Luminance conversion; single-channel input is returned unchanged.
LightField to_grayscale(const LightField& lf);

/// Resample every view independently to (round(H/factor), round(W/factor))
/// with separable bilinear interpolation (pixel-centre aligned, no
/// antialiasing). Throws if the result is smaller than 25 pixels.
LightField spatial_downscale(const LightField& lf, double factor);

/// Bilinear resampling of one (height x width) image to a new size.
std::vector<float> resample_bilinear(std::span<const float> image, int height, int width,
                                     int out_height, int out_width);

}  // namespace lfgen
