#include "lfgen/lightfield.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lfgen/error.hpp"
#include "lfgen/patches.hpp"

namespace lfgen {

LightField::LightField(int angular, int height, int width, int channels, float fill)
    : LightField(angular, height, width, channels,
                 std::vector<float>(static_cast<std::size_t>(std::max(angular, 0)) *
                                        std::max(angular, 0) * std::max(height, 0) *
                                        std::max(width, 0) * std::max(channels, 0),
                                    fill)) {}

LightField::LightField(int angular, int height, int width, int channels, std::vector<float> data,
                       bool clamp)
    : angular_(angular), height_(height), width_(width), channels_(channels),
      data_(std::move(data)) {
  validate(clamp);
}

void LightField::validate(bool clamp) {
  if (angular_ <= 0 || height_ <= 0 || width_ <= 0)
    throw DataError("light field dimensions must be positive");
  if (channels_ != 1 && channels_ != 3)
    throw DataError("light field must have 1 or 3 channels, got " + std::to_string(channels_));
  const std::size_t expected = static_cast<std::size_t>(angular_) * angular_ * height_ * width_ *
                               static_cast<std::size_t>(channels_);
  if (data_.size() != expected)
    throw DataError("light field data has " + std::to_string(data_.size()) +
                    " values, expected " + std::to_string(expected));
  for (float& v : data_) {
    if (!std::isfinite(v)) throw DataError("light field contains non-finite values");
    if (v < 0.0f || v > 1.0f) {
      if (!clamp) throw DataError("light field value outside [0,1]: " + std::to_string(v));
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }
}

std::vector<float> LightField::channel(int c) const {
  std::vector<float> out(data_.size() / channels_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data_[i * channels_ + c];
  return out;
}

void LightField::set_channel(int c, std::span<const float> values) {
  if (values.size() * channels_ != data_.size()) throw DataError("channel size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) data_[i * channels_ + c] = values[i];
}

std::vector<float> LightField::view(int row, int col, int c) const {
  std::vector<float> out(static_cast<std::size_t>(height_) * width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out[static_cast<std::size_t>(y) * width_ + x] = at(row, col, y, x, c);
  return out;
}

LightField to_grayscale(const LightField& lf) {
  if (lf.channels() == 1) return lf;
  const auto src = lf.data();
  std::vector<float> gray(src.size() / 3);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const float v = kLumaR * src[3 * i] + kLumaG * src[3 * i + 1] + kLumaB * src[3 * i + 2];
    gray[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return LightField(lf.angular(), lf.height(), lf.width(), 1, std::move(gray));
}

namespace {

struct Tap {
  int lo;
  int hi;
  float frac;
};

// Pixel-centre aligned source coordinates for one axis.
std::vector<Tap> bilinear_taps(int in_size, int out_size) {
  std::vector<Tap> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, in_size - 1);
    taps[i] = {lo, hi, static_cast<float>(s - lo)};
  }
  return taps;
}

}  // namespace

std::vector<float> resample_bilinear(std::span<const float> image, int height, int width,
                                     int out_height, int out_width) {
  const auto ty = bilinear_taps(height, out_height);
  const auto tx = bilinear_taps(width, out_width);
  // Horizontal pass, then vertical.
  std::vector<float> tmp(static_cast<std::size_t>(height) * out_width);
  for (int y = 0; y < height; ++y) {
    const float* row = image.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < out_width; ++x) {
      const Tap& t = tx[x];
      tmp[static_cast<std::size_t>(y) * out_width + x] = row[t.lo] + t.frac * (row[t.hi] - row[t.lo]);
    }
  }
  std::vector<float> out(static_cast<std::size_t>(out_height) * out_width);
  for (int y = 0; y < out_height; ++y) {
    const Tap& t = ty[y];
    const float* a = tmp.data() + static_cast<std::size_t>(t.lo) * out_width;
    const float* b = tmp.data() + static_cast<std::size_t>(t.hi) * out_width;
    for (int x = 0; x < out_width; ++x)
      out[static_cast<std::size_t>(y) * out_width + x] = a[x] + t.frac * (b[x] - a[x]);
  }
  return out;
}

LightField spatial_downscale(const LightField& lf, double factor) {
  if (!(factor >= 1.0)) throw UsageError("downscale factor must be >= 1");
  if (factor == 1.0) return lf;
  const int out_h = static_cast<int>(std::lround(lf.height() / factor));
  const int out_w = static_cast<int>(std::lround(lf.width() / factor));
  if (out_h < kPatchSize || out_w < kPatchSize)
    throw DataError("downscaled field " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                    " is smaller than the patch size");
  LightField out(lf.angular(), out_h, out_w, lf.channels());
  std::vector<float> view(lf.shape().view_size());
  for (int r = 0; r < lf.angular(); ++r)
    for (int c = 0; c < lf.angular(); ++c)
      for (int ch = 0; ch < lf.channels(); ++ch) {
        for (int y = 0; y < lf.height(); ++y)
          for (int x = 0; x < lf.width(); ++x)
            view[static_cast<std::size_t>(y) * lf.width() + x] = lf.at(r, c, y, x, ch);
        const auto res = resample_bilinear(view, lf.height(), lf.width(), out_h, out_w);
        for (int y = 0; y < out_h; ++y)
          for (int x = 0; x < out_w; ++x)
            out.at(r, c, y, x, ch) = std::clamp(res[static_cast<std::size_t>(y) * out_w + x], 0.0f, 1.0f);
      }
  return out;
}

}  // namespace lfgen
