#include "lfgen/corruption.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "lfgen/error.hpp"

namespace lfgen {

void CorruptionSpec::validate() const {
  if (!(magnitude >= 0.0)) throw UsageError("corruption magnitude must be >= 0");
  if (kind != CorruptionKind::Gaussian && magnitude > 1.0)
    throw UsageError("corruption probability/fraction must be in [0,1]");
}

std::size_t PixelMask::observed_count() const {
  return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), std::uint8_t{1}));
}

std::pair<LightField, PixelMask> corrupt(const LightField& lf, const CorruptionSpec& spec) {
  spec.validate();
  LightField out = lf;
  PixelMask mask = PixelMask::all_observed(lf.shape());
  const int n = lf.angular();
  const int ctr = n / 2;
  const int ch = lf.channels();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, spec.magnitude > 0 ? spec.magnitude : 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  if (spec.magnitude == 0.0) return {out, mask};

  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (spec.target == TargetViews::NonCentral && r == ctr && c == ctr) continue;
      for (int y = 0; y < lf.height(); ++y)
        for (int x = 0; x < lf.width(); ++x) {
          const std::size_t pix = ((static_cast<std::size_t>(r) * n + c) * lf.height() + y) * lf.width() + x;
          switch (spec.kind) {
            case CorruptionKind::Gaussian:
              for (int k = 0; k < ch; ++k) {
                float& v = out.at(r, c, y, x, k);
                v = static_cast<float>(std::clamp(v + gauss(rng), 0.0, 1.0));
              }
              break;
            case CorruptionKind::SaltPepper: {
              const double u = uni(rng);
              if (u < spec.magnitude) {
                const float v = u < spec.magnitude / 2 ? 0.0f : 1.0f;
                for (int k = 0; k < ch; ++k) out.at(r, c, y, x, k) = v;
              }
              break;
            }
            case CorruptionKind::PixelDrop:
              if (uni(rng) < spec.magnitude) {
                for (int k = 0; k < ch; ++k) out.at(r, c, y, x, k) = 0.0f;
                mask.observed[pix] = 0;
              }
              break;
          }
        }
    }
  return {out, mask};
}

void save_pixel_mask(const PixelMask& mask, const std::filesystem::path& path) {
  nlohmann::json j;
  j["shape"] = {mask.shape.angular, mask.shape.angular, mask.shape.height, mask.shape.width};
  j["observed"] = mask.observed;
  std::ofstream os(path);
  if (!os) throw DataError("cannot write pixel mask " + path.string());
  os << j.dump() << '\n';
}

PixelMask load_pixel_mask(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open pixel mask " + path.string());
  nlohmann::json j;
  try {
    is >> j;
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 4 || shape[0] != shape[1]) throw DataError("pixel mask shape must be [N_v, N_v, H, W]");
    PixelMask m{{shape[0], shape[2], shape[3]}, j.at("observed").get<std::vector<std::uint8_t>>()};
    if (m.observed.size() != m.shape.size()) throw DataError("pixel mask size does not match its shape");
    for (auto v : m.observed)
      if (v > 1) throw DataError("pixel mask entries must be 0 or 1");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed pixel mask " + path.string() + ": " + e.what());
  }
}

}  // namespace lfgen
