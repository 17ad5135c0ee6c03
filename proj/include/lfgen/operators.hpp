#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lfgen/lightfield.hpp"

namespace lfgen {

/// N_v x N_v binary view-selection grid (1 = known view).
struct AngularMask {
  int angular = 0;
  std::vector<std::uint8_t> known;  // row-major

  static AngularMask all(int angular);
  static AngularMask one_hot(int angular, int row, int col);
  bool at(int row, int col) const { return known[static_cast<std::size_t>(row) * angular + col] != 0; }
  int count() const;
  void validate() const;
};

/// Per-view integer decimation factor; only entries of known views are used
/// and the central view must have factor 1.
struct DownsampleSpec {
  int angular = 0;
  std::vector<int> factor;  // row-major, >= 1

  static DownsampleSpec uniform(int angular, int factor);  // central forced to 1
  int at(int row, int col) const { return factor[static_cast<std::size_t>(row) * angular + col]; }
  void validate() const;
};

/// K aperture transmittance patterns over the angular grid, entries in [0,1].
struct CodedMaskSet {
  int angular = 0;
  std::vector<std::vector<float>> masks;  // each row-major N_v x N_v

  int count() const { return static_cast<int>(masks.size()); }
  void validate() const;
};

/// Contents of a mask JSON file:
///   {"angular": [[0/1,...],...],           view selection
///    "factors": {"<row>,<col>": s, ...},    decimation factors (default 1)
///    "coded":   [[[m,...],...], ...]}       K coded aperture patterns
struct MaskFile {
  std::optional<AngularMask> angular;
  std::optional<DownsampleSpec> factors;
  std::optional<CodedMaskSet> coded;
};

MaskFile load_mask_file(const std::filesystem::path& path);
void save_mask_file(const MaskFile& masks, const std::filesystem::path& path);

enum class OperatorKind { ViewMask, SpatialAngular, CodedAperture };

/// Linear measurement operator acting on single-channel fields packed
/// (row, col, y, x).
///
/// Observation layouts:
///   ViewMask        full field shape, zeros at unknown views;
///   SpatialAngular  concatenated compact grids of the known views in
///                   row-major view order, each sampled every `factor` pixels
///                   starting at the view's phase (0 for a whole field);
///   CodedAperture   K images of size H x W; image k = sum_v M_k(v) L(x, v).
/// An attached pixel mask multiplies the observation elementwise.
class MeasurementOperator {
 public:
  static MeasurementOperator view_mask(const AngularMask& mask, FieldShape shape);
  static MeasurementOperator spatial_angular(const AngularMask& mask, const DownsampleSpec& spec,
                                             FieldShape shape);
  static MeasurementOperator coded_aperture(const CodedMaskSet& masks, FieldShape shape);

  /// Pointwise multiply of the output by `pixel_mask` (output layout).
  MeasurementOperator with_pixel_mask(std::vector<float> pixel_mask) const;

  OperatorKind kind() const { return kind_; }
  FieldShape input_shape() const { return shape_; }
  std::size_t input_size() const { return shape_.size(); }
  std::size_t output_size() const { return output_size_; }
  bool has_pixel_mask() const { return !pixel_mask_.empty(); }
  std::span<const float> pixel_mask() const { return pixel_mask_; }

  std::vector<float> apply(std::span<const float> field) const;
  std::vector<float> adjoint(std::span<const float> obs) const;
  void apply_into(std::span<const float> field, std::span<float> obs) const;
  void adjoint_into(std::span<const float> obs, std::span<float> field) const;
  void apply_into(std::span<const double> field, std::span<double> obs) const;
  void adjoint_into(std::span<const double> obs, std::span<double> field) const;

  /// Same operator acting on the spatial window [oy, oy+h) x [ox, ox+w).
  /// Decimation stays aligned with the full-field sampling grid.
  MeasurementOperator restrict_to(int oy, int ox, int h, int w) const;
  /// Part of a full observation that the restricted operator produces.
  std::vector<float> restrict_observation(std::span<const float> obs, int oy, int ox, int h, int w) const;

  /// Full-resolution central view read directly from an observation, if the
  /// operator observes it unmodified.
  std::optional<std::vector<float>> central_view(std::span<const float> obs) const;

  /// Full-resolution views observed unmodified (view-mask known views and the
  /// central view of the spatial-angular model), as (row, col) pairs.
  std::vector<std::pair<int, int>> full_resolution_views() const;
  /// Copy of view (row, col) from an observation, for views listed above.
  std::vector<float> observed_view(std::span<const float> obs, int row, int col) const;

  /// Maps a field-shaped 0/1 mask into output layout (selection operators
  /// only; coded aperture measurements mix pixels and have no such mapping).
  std::vector<float> field_mask_to_output(std::span<const float> field_mask) const;

  /// For coded aperture: observation image k (H x W) and the sum of pattern k.
  std::vector<float> coded_image(std::span<const float> obs, int k) const;
  const CodedMaskSet& coded_masks() const { return coded_; }
  const AngularMask& angular_mask() const { return mask_; }

 private:
  struct ViewSampling {
    int row = 0;
    int col = 0;
    int factor = 1;
    int phase_y = 0;
    int phase_x = 0;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;
  };

  template <class T>
  void apply_impl(std::span<const T> field, std::span<T> obs) const;
  template <class T>
  void adjoint_impl(std::span<const T> obs, std::span<T> field) const;
  void build_sampling(const std::vector<ViewSampling>& views);

  OperatorKind kind_ = OperatorKind::ViewMask;
  FieldShape shape_;
  AngularMask mask_;
  CodedMaskSet coded_;
  std::vector<ViewSampling> sampling_;
  std::size_t output_size_ = 0;
  std::vector<float> pixel_mask_;
};

}  // namespace lfgen
