#include "lfgen/operators.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "lfgen/error.hpp"

namespace lfgen {

AngularMask AngularMask::all(int angular) {
  return {angular, std::vector<std::uint8_t>(static_cast<std::size_t>(angular) * angular, 1)};
}

AngularMask AngularMask::one_hot(int angular, int row, int col) {
  AngularMask m{angular, std::vector<std::uint8_t>(static_cast<std::size_t>(angular) * angular, 0)};
  m.known[static_cast<std::size_t>(row) * angular + col] = 1;
  return m;
}

int AngularMask::count() const {
  return static_cast<int>(std::count(known.begin(), known.end(), std::uint8_t{1}));
}

void AngularMask::validate() const {
  if (angular <= 0 || known.size() != static_cast<std::size_t>(angular) * angular)
    throw DataError("angular mask must be N_v x N_v");
  for (auto v : known)
    if (v > 1) throw DataError("angular mask entries must be 0 or 1");
  if (count() == 0) throw DataError("angular mask has no known view");
}

DownsampleSpec DownsampleSpec::uniform(int angular, int factor) {
  DownsampleSpec s{angular, std::vector<int>(static_cast<std::size_t>(angular) * angular, factor)};
  s.factor[static_cast<std::size_t>(angular / 2) * angular + angular / 2] = 1;
  return s;
}

void DownsampleSpec::validate() const {
  if (angular <= 0 || factor.size() != static_cast<std::size_t>(angular) * angular)
    throw DataError("downsample spec must be N_v x N_v");
  for (int f : factor)
    if (f < 1) throw DataError("downsample factors must be positive integers");
  if (at(angular / 2, angular / 2) != 1) throw DataError("central view downsample factor must be 1");
}

void CodedMaskSet::validate() const {
  if (masks.empty()) throw DataError("coded mask set is empty (K = 0)");
  for (const auto& m : masks) {
    if (m.size() != static_cast<std::size_t>(angular) * angular)
      throw DataError("coded mask must be N_v x N_v");
    for (float v : m)
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("coded mask entries must be in [0,1]");
  }
}

// ---------------------------------------------------------------------------

MeasurementOperator MeasurementOperator::view_mask(const AngularMask& mask, FieldShape shape) {
  mask.validate();
  if (mask.angular != shape.angular) throw DataError("mask angular size does not match the field");
  MeasurementOperator op;
  op.kind_ = OperatorKind::ViewMask;
  op.shape_ = shape;
  op.mask_ = mask;
  op.output_size_ = shape.size();
  return op;
}

MeasurementOperator MeasurementOperator::spatial_angular(const AngularMask& mask, const DownsampleSpec& spec,
                                                         FieldShape shape) {
  mask.validate();
  spec.validate();
  if (mask.angular != shape.angular || spec.angular != shape.angular)
    throw DataError("mask angular size does not match the field");
  const int ctr = shape.angular / 2;
  if (!mask.at(ctr, ctr)) throw DataError("spatial-angular model requires the central view in the mask");
  MeasurementOperator op;
  op.kind_ = OperatorKind::SpatialAngular;
  op.shape_ = shape;
  op.mask_ = mask;
  std::vector<ViewSampling> views;
  for (int r = 0; r < shape.angular; ++r)
    for (int c = 0; c < shape.angular; ++c)
      if (mask.at(r, c)) views.push_back({r, c, spec.at(r, c), 0, 0, 0, 0, 0});
  op.build_sampling(views);
  return op;
}

void MeasurementOperator::build_sampling(const std::vector<ViewSampling>& views) {
  sampling_ = views;
  std::size_t offset = 0;
  for (auto& v : sampling_) {
    v.rows = v.phase_y < shape_.height ? (shape_.height - v.phase_y + v.factor - 1) / v.factor : 0;
    v.cols = v.phase_x < shape_.width ? (shape_.width - v.phase_x + v.factor - 1) / v.factor : 0;
    v.offset = offset;
    offset += static_cast<std::size_t>(v.rows) * v.cols;
  }
  output_size_ = offset;
}

MeasurementOperator MeasurementOperator::coded_aperture(const CodedMaskSet& masks, FieldShape shape) {
  masks.validate();
  if (masks.angular != shape.angular) throw DataError("coded mask angular size does not match the field");
  MeasurementOperator op;
  op.kind_ = OperatorKind::CodedAperture;
  op.shape_ = shape;
  op.coded_ = masks;
  op.output_size_ = static_cast<std::size_t>(masks.count()) * shape.view_size();
  return op;
}

MeasurementOperator MeasurementOperator::with_pixel_mask(std::vector<float> pixel_mask) const {
  if (pixel_mask.size() != output_size_)
    throw DataError("pixel mask has " + std::to_string(pixel_mask.size()) + " entries, operator output has " +
                    std::to_string(output_size_));
  MeasurementOperator op = *this;
  if (!op.pixel_mask_.empty())
    for (std::size_t i = 0; i < pixel_mask.size(); ++i) pixel_mask[i] *= op.pixel_mask_[i];
  op.pixel_mask_ = std::move(pixel_mask);
  return op;
}

std::vector<float> MeasurementOperator::apply(std::span<const float> field) const {
  std::vector<float> obs(output_size_);
  apply_into(field, obs);
  return obs;
}

std::vector<float> MeasurementOperator::adjoint(std::span<const float> obs) const {
  std::vector<float> field(input_size());
  adjoint_into(obs, field);
  return field;
}

template <class T>
void MeasurementOperator::apply_impl(std::span<const T> field, std::span<T> obs) const {
  if (field.size() != input_size())
    throw DataError("operator expects a field of " + std::to_string(input_size()) + " values, got " +
                    std::to_string(field.size()));
  if (obs.size() != output_size_) throw DataError("observation buffer has the wrong size");
  const std::size_t vs = shape_.view_size();
  const int n = shape_.angular;
  switch (kind_) {
    case OperatorKind::ViewMask:
      for (int v = 0; v < n * n; ++v) {
        const bool known = mask_.known[v] != 0;
        for (std::size_t i = 0; i < vs; ++i) obs[v * vs + i] = known ? field[v * vs + i] : T(0);
      }
      break;
    case OperatorKind::SpatialAngular:
      for (const auto& s : sampling_) {
        const T* view = field.data() + (static_cast<std::size_t>(s.row) * n + s.col) * vs;
        T* out = obs.data() + s.offset;
        for (int i = 0; i < s.rows; ++i)
          for (int j = 0; j < s.cols; ++j)
            out[static_cast<std::size_t>(i) * s.cols + j] =
                view[static_cast<std::size_t>(s.phase_y + i * s.factor) * shape_.width + s.phase_x + j * s.factor];
      }
      break;
    case OperatorKind::CodedAperture:
      std::fill(obs.begin(), obs.end(), T(0));
      for (int k = 0; k < coded_.count(); ++k) {
        T* out = obs.data() + k * vs;
        for (int v = 0; v < n * n; ++v) {
          const T w = coded_.masks[k][v];
          if (w == T(0)) continue;
          const T* view = field.data() + v * vs;
          for (std::size_t i = 0; i < vs; ++i) out[i] += w * view[i];
        }
      }
      break;
  }
  if (!pixel_mask_.empty())
    for (std::size_t i = 0; i < output_size_; ++i) obs[i] *= pixel_mask_[i];
}

template <class T>
void MeasurementOperator::adjoint_impl(std::span<const T> obs_in, std::span<T> field) const {
  if (obs_in.size() != output_size_)
    throw DataError("observation has " + std::to_string(obs_in.size()) + " values, operator produces " +
                    std::to_string(output_size_));
  if (field.size() != input_size()) throw DataError("field buffer has the wrong size");
  std::vector<T> masked;
  std::span<const T> obs = obs_in;
  if (!pixel_mask_.empty()) {
    masked.assign(obs_in.begin(), obs_in.end());
    for (std::size_t i = 0; i < output_size_; ++i) masked[i] *= pixel_mask_[i];
    obs = masked;
  }
  const std::size_t vs = shape_.view_size();
  const int n = shape_.angular;
  std::fill(field.begin(), field.end(), T(0));
  switch (kind_) {
    case OperatorKind::ViewMask:
      for (int v = 0; v < n * n; ++v)
        if (mask_.known[v])
          for (std::size_t i = 0; i < vs; ++i) field[v * vs + i] = obs[v * vs + i];
      break;
    case OperatorKind::SpatialAngular:
      for (const auto& s : sampling_) {
        T* view = field.data() + (static_cast<std::size_t>(s.row) * n + s.col) * vs;
        const T* in = obs.data() + s.offset;
        for (int i = 0; i < s.rows; ++i)
          for (int j = 0; j < s.cols; ++j)
            view[static_cast<std::size_t>(s.phase_y + i * s.factor) * shape_.width + s.phase_x + j * s.factor] =
                in[static_cast<std::size_t>(i) * s.cols + j];
      }
      break;
    case OperatorKind::CodedAperture:
      for (int k = 0; k < coded_.count(); ++k) {
        const T* in = obs.data() + k * vs;
        for (int v = 0; v < n * n; ++v) {
          const T w = coded_.masks[k][v];
          if (w == T(0)) continue;
          T* view = field.data() + v * vs;
          for (std::size_t i = 0; i < vs; ++i) view[i] += w * in[i];
        }
      }
      break;
  }
}

void MeasurementOperator::apply_into(std::span<const float> field, std::span<float> obs) const {
  apply_impl(field, obs);
}
void MeasurementOperator::apply_into(std::span<const double> field, std::span<double> obs) const {
  apply_impl(field, obs);
}
void MeasurementOperator::adjoint_into(std::span<const float> obs, std::span<float> field) const {
  adjoint_impl(obs, field);
}
void MeasurementOperator::adjoint_into(std::span<const double> obs, std::span<double> field) const {
  adjoint_impl(obs, field);
}

namespace {

// First sample index >= lo on the grid phase + k * factor, relative to lo.
int local_phase(int phase, int factor, int lo) {
  if (lo <= phase) return phase - lo;
  const int k = (lo - phase + factor - 1) / factor;
  return phase + k * factor - lo;
}

}  // namespace

MeasurementOperator MeasurementOperator::restrict_to(int oy, int ox, int h, int w) const {
  if (oy < 0 || ox < 0 || h <= 0 || w <= 0 || oy + h > shape_.height || ox + w > shape_.width)
    throw DataError("restriction window out of bounds");
  MeasurementOperator op = *this;
  op.shape_ = {shape_.angular, h, w};
  switch (kind_) {
    case OperatorKind::ViewMask:
      op.output_size_ = op.shape_.size();
      break;
    case OperatorKind::SpatialAngular: {
      std::vector<ViewSampling> views = sampling_;
      for (auto& v : views) {
        v.phase_y = local_phase(v.phase_y, v.factor, oy);
        v.phase_x = local_phase(v.phase_x, v.factor, ox);
      }
      op.build_sampling(views);
      break;
    }
    case OperatorKind::CodedAperture:
      op.output_size_ = static_cast<std::size_t>(coded_.count()) * op.shape_.view_size();
      break;
  }
  if (!pixel_mask_.empty()) op.pixel_mask_ = restrict_observation(pixel_mask_, oy, ox, h, w);
  return op;
}

std::vector<float> MeasurementOperator::restrict_observation(std::span<const float> obs, int oy, int ox, int h,
                                                             int w) const {
  if (obs.size() != output_size_) throw DataError("observation size does not match the operator");
  std::vector<float> out;
  const int n = shape_.angular;
  switch (kind_) {
    case OperatorKind::ViewMask:
    case OperatorKind::CodedAperture: {
      const int planes = kind_ == OperatorKind::ViewMask ? n * n : coded_.count();
      out.reserve(static_cast<std::size_t>(planes) * h * w);
      for (int p = 0; p < planes; ++p)
        for (int y = oy; y < oy + h; ++y) {
          const float* row = obs.data() + (static_cast<std::size_t>(p) * shape_.height + y) * shape_.width;
          out.insert(out.end(), row + ox, row + ox + w);
        }
      break;
    }
    case OperatorKind::SpatialAngular:
      for (const auto& s : sampling_) {
        for (int i = 0; i < s.rows; ++i) {
          const int y = s.phase_y + i * s.factor;
          if (y < oy || y >= oy + h) continue;
          for (int j = 0; j < s.cols; ++j) {
            const int x = s.phase_x + j * s.factor;
            if (x < ox || x >= ox + w) continue;
            out.push_back(obs[s.offset + static_cast<std::size_t>(i) * s.cols + j]);
          }
        }
      }
      break;
  }
  return out;
}

std::vector<std::pair<int, int>> MeasurementOperator::full_resolution_views() const {
  std::vector<std::pair<int, int>> out;
  const int n = shape_.angular;
  if (kind_ == OperatorKind::ViewMask) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (mask_.at(r, c)) out.emplace_back(r, c);
  } else if (kind_ == OperatorKind::SpatialAngular) {
    for (const auto& s : sampling_)
      if (s.factor == 1 && s.phase_y == 0 && s.phase_x == 0) out.emplace_back(s.row, s.col);
  }
  return out;
}

std::vector<float> MeasurementOperator::observed_view(std::span<const float> obs, int row, int col) const {
  const std::size_t vs = shape_.view_size();
  if (kind_ == OperatorKind::ViewMask && mask_.at(row, col)) {
    const auto begin =
        obs.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(row) * shape_.angular + col) * vs);
    return {begin, begin + static_cast<std::ptrdiff_t>(vs)};
  }
  if (kind_ == OperatorKind::SpatialAngular)
    for (const auto& s : sampling_)
      if (s.row == row && s.col == col && s.factor == 1 && s.phase_y == 0 && s.phase_x == 0) {
        const auto begin = obs.begin() + static_cast<std::ptrdiff_t>(s.offset);
        return {begin, begin + static_cast<std::ptrdiff_t>(vs)};
      }
  throw DataError("view (" + std::to_string(row) + "," + std::to_string(col) + ") is not observed at full resolution");
}

std::optional<std::vector<float>> MeasurementOperator::central_view(std::span<const float> obs) const {
  const int c = shape_.angular / 2;
  for (auto [r, cc] : full_resolution_views())
    if (r == c && cc == c) return observed_view(obs, c, c);
  return std::nullopt;
}

std::vector<float> MeasurementOperator::field_mask_to_output(std::span<const float> field_mask) const {
  if (kind_ == OperatorKind::CodedAperture)
    throw UsageError("pixel masks cannot be mapped through a coded aperture operator");
  MeasurementOperator plain = *this;
  plain.pixel_mask_.clear();
  return plain.apply(field_mask);
}

std::vector<float> MeasurementOperator::coded_image(std::span<const float> obs, int k) const {
  if (kind_ != OperatorKind::CodedAperture) throw UsageError("not a coded aperture operator");
  const std::size_t vs = shape_.view_size();
  const auto begin = obs.begin() + static_cast<std::ptrdiff_t>(k * vs);
  return {begin, begin + static_cast<std::ptrdiff_t>(vs)};
}

// ---------------------------------------------------------------------------
// Mask files

namespace {

std::vector<std::vector<float>> parse_grid(const nlohmann::json& j, const char* what) {
  auto g = j.get<std::vector<std::vector<float>>>();
  if (g.empty()) throw DataError(std::string(what) + " grid is empty");
  for (const auto& row : g)
    if (row.size() != g.size()) throw DataError(std::string(what) + " grid must be square");
  return g;
}

}  // namespace

MaskFile load_mask_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open mask file " + path.string());
  MaskFile out;
  try {
    nlohmann::json j;
    is >> j;
    for (const auto& [key, _] : j.items())
      if (key != "angular" && key != "factors" && key != "coded")
        throw DataError("unknown key '" + key + "' in mask file");
    if (j.contains("angular")) {
      const auto g = parse_grid(j["angular"], "angular");
      AngularMask m{static_cast<int>(g.size()), {}};
      for (const auto& row : g)
        for (float v : row) {
          if (v != 0.0f && v != 1.0f) throw DataError("angular mask entries must be 0 or 1");
          m.known.push_back(static_cast<std::uint8_t>(v));
        }
      m.validate();
      out.angular = m;
    }
    if (j.contains("coded")) {
      CodedMaskSet set;
      for (const auto& grid : j["coded"]) {
        const auto g = parse_grid(grid, "coded");
        if (set.angular == 0) set.angular = static_cast<int>(g.size());
        if (static_cast<int>(g.size()) != set.angular) throw DataError("coded masks differ in size");
        std::vector<float> flat;
        for (const auto& row : g) flat.insert(flat.end(), row.begin(), row.end());
        set.masks.push_back(std::move(flat));
      }
      set.validate();
      out.coded = set;
    }
    if (j.contains("factors")) {
      const int n = out.angular ? out.angular->angular : (out.coded ? out.coded->angular : 0);
      if (n == 0) throw DataError("'factors' requires an 'angular' grid");
      DownsampleSpec spec{n, std::vector<int>(static_cast<std::size_t>(n) * n, 1)};
      for (const auto& [key, value] : j["factors"].items()) {
        const auto comma = key.find(',');
        if (comma == std::string::npos) throw DataError("factor key '" + key + "' must be '<row>,<col>'");
        const int r = std::stoi(key.substr(0, comma));
        const int c = std::stoi(key.substr(comma + 1));
        if (r < 0 || c < 0 || r >= n || c >= n) throw DataError("factor key '" + key + "' out of range");
        spec.factor[static_cast<std::size_t>(r) * n + c] = value.get<int>();
      }
      spec.validate();
      out.factors = spec;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed mask file " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError("malformed factor key in " + path.string());
  }
  return out;
}

void save_mask_file(const MaskFile& masks, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::object();
  if (masks.angular) {
    const auto& m = *masks.angular;
    auto g = nlohmann::json::array();
    for (int r = 0; r < m.angular; ++r) {
      auto row = nlohmann::json::array();
      for (int c = 0; c < m.angular; ++c) row.push_back(m.at(r, c) ? 1 : 0);
      g.push_back(row);
    }
    j["angular"] = g;
  }
  if (masks.factors) {
    const auto& f = *masks.factors;
    nlohmann::json obj = nlohmann::json::object();
    for (int r = 0; r < f.angular; ++r)
      for (int c = 0; c < f.angular; ++c)
        if (f.at(r, c) != 1) obj[std::to_string(r) + "," + std::to_string(c)] = f.at(r, c);
    j["factors"] = obj;
  }
  if (masks.coded) {
    auto list = nlohmann::json::array();
    for (const auto& m : masks.coded->masks) {
      auto g = nlohmann::json::array();
      for (int r = 0; r < masks.coded->angular; ++r)
        g.push_back(
            std::vector<float>(m.begin() + r * masks.coded->angular, m.begin() + (r + 1) * masks.coded->angular));
      list.push_back(g);
    }
    j["coded"] = list;
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot write mask file " + path.string());
  os << j.dump(1) << '\n';
}

}  // namespace lfgen
