#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "lfgen/lightfield.hpp"

namespace lfgen {

/// On-disk representations of a light field.
///
/// ViewDirectory: one image per view named `view_<row>_<col>.png`, zero-based
/// from the top-left, on a full N_v x N_v grid.
/// Container: HDF5 file holding dataset `lightfield` plus a string attribute
/// `axes` naming the array axes (any order of row, col, y, x, channel; the
/// channel axis may be omitted for grayscale data).
enum class LFFormat { Auto, ViewDirectory, ViewDirectory16, Container };

LFFormat parse_lf_format(const std::string& name);

enum class Axis { Row, Col, Y, X, Channel };
using AxisOrder = std::array<Axis, 5>;
inline constexpr AxisOrder kCanonicalAxes = {Axis::Row, Axis::Col, Axis::Y, Axis::X, Axis::Channel};

std::string axes_to_string(const AxisOrder& axes);

LightField load_lightfield(const std::filesystem::path& path, LFFormat hint = LFFormat::Auto);

/// For ViewDirectory formats values are quantised to 8 or 16 bits.
void save_lightfield(const LightField& lf, const std::filesystem::path& path, LFFormat format);

/// Container write with an explicit axis order in the file.
void save_lightfield_container(const LightField& lf, const std::filesystem::path& path,
                               const AxisOrder& axes = kCanonicalAxes);

/// Stack of same-sized images, packed (index, y, x, channel). Used for coded
/// aperture measurements, which are not bounded to [0,1].
struct ImageStack {
  int count = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  std::vector<float> channel(int c) const;  // packed (index, y, x)
};

void save_image_stack(const ImageStack& stack, const std::filesystem::path& path);
ImageStack load_image_stack(const std::filesystem::path& path);
bool is_image_stack_file(const std::filesystem::path& path);

/// 8-bit PNG write of a packed (y, x, channel) image in [0,1] (RGB order).
void write_png8(const std::filesystem::path& path, const std::vector<float>& image, int height,
                int width, int channels);

}  // namespace lfgen
