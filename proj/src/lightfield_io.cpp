#include "lfgen/lightfield_io.hpp"

#include <hdf5.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <regex>
#include <sstream>
#include <utility>

#include "lfgen/error.hpp"

namespace fs = std::filesystem;

namespace lfgen {

LFFormat parse_lf_format(const std::string& name) {
  if (name == "auto") return LFFormat::Auto;
  if (name == "dir" || name == "png" || name == "png8") return LFFormat::ViewDirectory;
  if (name == "png16") return LFFormat::ViewDirectory16;
  if (name == "h5" || name == "container") return LFFormat::Container;
  throw UsageError("unknown light field format '" + name + "'");
}

namespace {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::Row: return "row";
    case Axis::Col: return "col";
    case Axis::Y: return "y";
    case Axis::X: return "x";
    case Axis::Channel: return "channel";
  }
  return "?";
}

Axis parse_axis(const std::string& s) {
  if (s == "row") return Axis::Row;
  if (s == "col") return Axis::Col;
  if (s == "y") return Axis::Y;
  if (s == "x") return Axis::X;
  if (s == "channel" || s == "c") return Axis::Channel;
  throw DataError("unknown axis name '" + s + "'");
}

// ---------------------------------------------------------------------------
// View directories

LightField load_view_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a view directory: " + dir.string());
  static const std::regex pattern(R"(view_(\d+)_(\d+)\.(png|PNG|tif|tiff|bmp|jpg))");
  std::map<std::pair<int, int>, fs::path> views;
  int max_index = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const int r = std::stoi(m[1]);
    const int c = std::stoi(m[2]);
    views[{r, c}] = entry.path();
    max_index = std::max({max_index, r, c});
  }
  if (views.empty()) throw DataError("no view_<row>_<col> images in " + dir.string());
  const int n = max_index + 1;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (!views.count({r, c}))
        throw DataError("missing view (" + std::to_string(r) + "," + std::to_string(c) + ")");

  int height = 0, width = 0, channels = 0;
  std::vector<float> data;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const fs::path& p = views[{r, c}];
      cv::Mat img = cv::imread(p.string(), cv::IMREAD_UNCHANGED);
      if (img.empty()) throw DataError("cannot read image " + p.string());
      const int ch = img.channels() == 1 ? 1 : 3;
      if (img.channels() != 1 && img.channels() != 3 && img.channels() != 4)
        throw DataError("unsupported channel count in " + p.string());
      if (data.empty()) {
        height = img.rows;
        width = img.cols;
        channels = ch;
        data.resize(static_cast<std::size_t>(n) * n * height * width * channels);
      } else if (img.rows != height || img.cols != width || ch != channels) {
        throw DataError("inconsistent view dimensions at view (" + std::to_string(r) + "," +
                        std::to_string(c) + ")");
      }
      double scale = 1.0;
      switch (img.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        case CV_32F: scale = 1.0; break;
        default: throw DataError("unsupported pixel depth in " + p.string());
      }
      cv::Mat f;
      img.convertTo(f, CV_32F, scale);
      const int src_ch = f.channels();
      for (int y = 0; y < height; ++y) {
        const float* row = f.ptr<float>(y);
        for (int x = 0; x < width; ++x)
          for (int k = 0; k < channels; ++k) {
            // OpenCV stores BGR(A); the field stores RGB.
            const int src_k = channels == 1 ? 0 : 2 - k;
            const float v = row[x * src_ch + src_k];
            data[((((static_cast<std::size_t>(r) * n + c) * height + y) * width + x) * channels) + k] =
                std::clamp(v, 0.0f, 1.0f);
          }
      }
    }
  return LightField(n, height, width, channels, std::move(data));
}

void save_view_directory(const LightField& lf, const fs::path& dir, bool sixteen_bit) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create directory " + dir.string());
  const int type = lf.channels() == 1 ? (sixteen_bit ? CV_16UC1 : CV_8UC1)
                                      : (sixteen_bit ? CV_16UC3 : CV_8UC3);
  const double maxval = sixteen_bit ? 65535.0 : 255.0;
  for (int r = 0; r < lf.angular(); ++r)
    for (int c = 0; c < lf.angular(); ++c) {
      cv::Mat img(lf.height(), lf.width(), type);
      for (int y = 0; y < lf.height(); ++y)
        for (int x = 0; x < lf.width(); ++x)
          for (int k = 0; k < lf.channels(); ++k) {
            const int dst_k = lf.channels() == 1 ? 0 : 2 - k;
            const double v = std::round(lf.at(r, c, y, x, k) * maxval);
            if (sixteen_bit)
              img.ptr<uint16_t>(y)[x * lf.channels() + dst_k] = static_cast<uint16_t>(v);
            else
              img.ptr<uint8_t>(y)[x * lf.channels() + dst_k] = static_cast<uint8_t>(v);
          }
      const fs::path p = dir / ("view_" + std::to_string(r) + "_" + std::to_string(c) + ".png");
      if (!cv::imwrite(p.string(), img)) throw DataError("cannot write " + p.string());
    }
}

// ---------------------------------------------------------------------------
// HDF5 helpers

struct H5Handle {
  hid_t id = -1;
  herr_t (*close)(hid_t) = nullptr;
  H5Handle(hid_t h, herr_t (*c)(hid_t)) : id(h), close(c) {}
  H5Handle(const H5Handle&) = delete;
  H5Handle& operator=(const H5Handle&) = delete;
  ~H5Handle() {
    if (id >= 0 && close) close(id);
  }
};

class H5Silence {
 public:
  H5Silence() {
    H5Eget_auto2(H5E_DEFAULT, &func_, &data_);
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
  }
  ~H5Silence() { H5Eset_auto2(H5E_DEFAULT, func_, data_); }

 private:
  H5E_auto2_t func_ = nullptr;
  void* data_ = nullptr;
};

void write_string_attr(hid_t obj, const char* name, const std::string& value) {
  H5Handle type(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(type.id, value.size() + 1);
  H5Handle space(H5Screate(H5S_SCALAR), H5Sclose);
  H5Handle attr(H5Acreate2(obj, name, type.id, space.id, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
  if (attr.id < 0 || H5Awrite(attr.id, type.id, value.c_str()) < 0)
    throw DataError(std::string("cannot write attribute ") + name);
}

std::string read_string_attr(hid_t obj, const char* name) {
  if (H5Aexists(obj, name) <= 0) throw DataError(std::string("missing attribute '") + name + "'");
  H5Handle attr(H5Aopen(obj, name, H5P_DEFAULT), H5Aclose);
  H5Handle ftype(H5Aget_type(attr.id), H5Tclose);
  if (H5Tget_class(ftype.id) != H5T_STRING) throw DataError(std::string("attribute ") + name + " is not a string");
  if (H5Tis_variable_str(ftype.id) > 0) {
    H5Handle mtype(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(mtype.id, H5T_VARIABLE);
    char* buf = nullptr;
    if (H5Aread(attr.id, mtype.id, &buf) < 0) throw DataError("cannot read attribute");
    std::string s = buf ? buf : "";
    H5free_memory(buf);
    return s;
  }
  const std::size_t n = H5Tget_size(ftype.id);
  std::string s(n, '\0');
  H5Handle mtype(H5Tcopy(H5T_C_S1), H5Tclose);
  H5Tset_size(mtype.id, n);
  if (H5Aread(attr.id, mtype.id, s.data()) < 0) throw DataError("cannot read attribute");
  s.resize(std::strlen(s.c_str()));
  return s;
}

void write_float_dataset(hid_t file, const char* name, const std::vector<hsize_t>& dims,
                         const float* data) {
  H5Handle space(H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr), H5Sclose);
  H5Handle ds(H5Dcreate2(file, name, H5T_IEEE_F32LE, space.id, H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
              H5Dclose);
  if (ds.id < 0 || H5Dwrite(ds.id, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, data) < 0)
    throw DataError(std::string("cannot write dataset ") + name);
}

std::vector<float> read_float_dataset(hid_t file, const char* name, std::vector<hsize_t>& dims) {
  if (H5Lexists(file, name, H5P_DEFAULT) <= 0) throw DataError(std::string("missing dataset '") + name + "'");
  H5Handle ds(H5Dopen2(file, name, H5P_DEFAULT), H5Dclose);
  H5Handle space(H5Dget_space(ds.id), H5Sclose);
  const int rank = H5Sget_simple_extent_ndims(space.id);
  if (rank <= 0) throw DataError("bad dataset rank");
  dims.resize(rank);
  H5Sget_simple_extent_dims(space.id, dims.data(), nullptr);
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  std::vector<float> out(n);
  if (H5Dread(ds.id, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data()) < 0)
    throw DataError(std::string("cannot read dataset ") + name);
  return out;
}

H5Handle open_h5(const fs::path& path) {
  H5Silence quiet;
  if (!fs::is_regular_file(path) || H5Fis_hdf5(path.c_str()) <= 0)
    throw DataError("not an HDF5 container: " + path.string());
  H5Handle f(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
  if (f.id < 0) throw DataError("cannot open " + path.string());
  return H5Handle(std::exchange(f.id, -1), H5Fclose);
}

H5Handle create_h5(const fs::path& path) {
  H5Silence quiet;
  H5Handle f(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose);
  if (f.id < 0) throw DataError("cannot create " + path.string());
  return H5Handle(std::exchange(f.id, -1), H5Fclose);
}

LightField load_container(const fs::path& path) {
  H5Handle file = open_h5(path);
  H5Silence quiet;
  std::vector<hsize_t> dims;
  std::vector<float> raw = read_float_dataset(file.id, "lightfield", dims);
  H5Handle ds(H5Dopen2(file.id, "lightfield", H5P_DEFAULT), H5Dclose);
  const std::string axes_attr = read_string_attr(ds.id, "axes");

  std::vector<Axis> axes;
  std::stringstream ss(axes_attr);
  for (std::string tok; std::getline(ss, tok, ',');) axes.push_back(parse_axis(tok));
  if (axes.size() != dims.size())
    throw DataError("axes attribute '" + axes_attr + "' does not match dataset rank");
  if (axes.size() == 4) axes.push_back(Axis::Channel), dims.push_back(1);
  if (axes.size() != 5) throw DataError("light field container must have 4 or 5 axes");

  // Size of each canonical axis and its stride in the file layout.
  std::array<std::size_t, 5> size{}, stride{};
  std::array<bool, 5> seen{};
  std::size_t s = 1;
  for (int i = 4; i >= 0; --i) {
    const int k = static_cast<int>(axes[i]);
    if (seen[k]) throw DataError("duplicate axis in '" + axes_attr + "'");
    seen[k] = true;
    size[k] = dims[i];
    stride[k] = s;
    s *= dims[i];
  }
  if (size[0] != size[1]) throw DataError("angular grid must be square");

  LightField lf(static_cast<int>(size[0]), static_cast<int>(size[2]), static_cast<int>(size[3]),
                static_cast<int>(size[4]));
  auto out = lf.data();
  std::size_t idx = 0;
  for (std::size_t r = 0; r < size[0]; ++r)
    for (std::size_t c = 0; c < size[1]; ++c)
      for (std::size_t y = 0; y < size[2]; ++y)
        for (std::size_t x = 0; x < size[3]; ++x)
          for (std::size_t k = 0; k < size[4]; ++k)
            out[idx++] = raw[r * stride[0] + c * stride[1] + y * stride[2] + x * stride[3] + k * stride[4]];
  return LightField(lf.angular(), lf.height(), lf.width(), lf.channels(),
                    std::vector<float>(out.begin(), out.end()));
}

}  // namespace

std::string axes_to_string(const AxisOrder& axes) {
  std::string s;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) s += ',';
    s += axis_name(axes[i]);
  }
  return s;
}

LightField load_lightfield(const fs::path& path, LFFormat hint) {
  if (!fs::exists(path)) throw DataError("no such file or directory: " + path.string());
  switch (hint) {
    case LFFormat::Auto:
      return fs::is_directory(path) ? load_view_directory(path) : load_container(path);
    case LFFormat::ViewDirectory:
    case LFFormat::ViewDirectory16:
      return load_view_directory(path);
    case LFFormat::Container:
      return load_container(path);
  }
  throw UsageError("unknown format");
}

void save_lightfield_container(const LightField& lf, const fs::path& path, const AxisOrder& axes) {
  std::array<bool, 5> seen{};
  for (Axis a : axes) {
    if (seen[static_cast<int>(a)]) throw UsageError("duplicate axis in container order");
    seen[static_cast<int>(a)] = true;
  }
  const std::array<std::size_t, 5> size = {static_cast<std::size_t>(lf.angular()),
                                           static_cast<std::size_t>(lf.angular()),
                                           static_cast<std::size_t>(lf.height()),
                                           static_cast<std::size_t>(lf.width()),
                                           static_cast<std::size_t>(lf.channels())};
  std::vector<hsize_t> dims(5);
  std::array<std::size_t, 5> stride{};
  std::size_t s = 1;
  for (int i = 4; i >= 0; --i) {
    const int k = static_cast<int>(axes[i]);
    dims[i] = size[k];
    stride[k] = s;
    s *= size[k];
  }
  std::vector<float> raw(lf.data().size());
  std::size_t idx = 0;
  for (std::size_t r = 0; r < size[0]; ++r)
    for (std::size_t c = 0; c < size[1]; ++c)
      for (std::size_t y = 0; y < size[2]; ++y)
        for (std::size_t x = 0; x < size[3]; ++x)
          for (std::size_t k = 0; k < size[4]; ++k)
            raw[r * stride[0] + c * stride[1] + y * stride[2] + x * stride[3] + k * stride[4]] = lf.data()[idx++];

  H5Handle file = create_h5(path);
  write_float_dataset(file.id, "lightfield", dims, raw.data());
  H5Handle ds(H5Dopen2(file.id, "lightfield", H5P_DEFAULT), H5Dclose);
  write_string_attr(ds.id, "axes", axes_to_string(axes));
}

void save_lightfield(const LightField& lf, const fs::path& path, LFFormat format) {
  switch (format) {
    case LFFormat::ViewDirectory: return save_view_directory(lf, path, false);
    case LFFormat::ViewDirectory16: return save_view_directory(lf, path, true);
    case LFFormat::Container: return save_lightfield_container(lf, path);
    case LFFormat::Auto:
      if (path.extension() == ".h5" || path.extension() == ".hdf5") return save_lightfield_container(lf, path);
      return save_view_directory(lf, path, false);
  }
}

std::vector<float> ImageStack::channel(int c) const {
  std::vector<float> out(data.size() / channels);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data[i * channels + c];
  return out;
}

void save_image_stack(const ImageStack& stack, const fs::path& path) {
  H5Handle file = create_h5(path);
  const std::vector<hsize_t> dims = {static_cast<hsize_t>(stack.count), static_cast<hsize_t>(stack.height),
                                     static_cast<hsize_t>(stack.width), static_cast<hsize_t>(stack.channels)};
  write_float_dataset(file.id, "coded", dims, stack.data.data());
  H5Handle ds(H5Dopen2(file.id, "coded", H5P_DEFAULT), H5Dclose);
  write_string_attr(ds.id, "axes", "index,y,x,channel");
}

bool is_image_stack_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) return false;
  H5Silence quiet;
  if (H5Fis_hdf5(path.c_str()) <= 0) return false;
  H5Handle f(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
  return f.id >= 0 && H5Lexists(f.id, "coded", H5P_DEFAULT) > 0;
}

ImageStack load_image_stack(const fs::path& path) {
  H5Handle file = open_h5(path);
  H5Silence quiet;
  std::vector<hsize_t> dims;
  ImageStack s;
  s.data = read_float_dataset(file.id, "coded", dims);
  if (dims.size() != 4) throw DataError("coded image stack must have axes (index,y,x,channel)");
  s.count = static_cast<int>(dims[0]);
  s.height = static_cast<int>(dims[1]);
  s.width = static_cast<int>(dims[2]);
  s.channels = static_cast<int>(dims[3]);
  for (float v : s.data)
    if (!std::isfinite(v)) throw DataError("coded image stack contains non-finite values");
  return s;
}

void write_png8(const fs::path& path, const std::vector<float>& image, int height, int width, int channels) {
  cv::Mat img(height, width, channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int k = 0; k < channels; ++k) {
        const float v = std::clamp(image[(static_cast<std::size_t>(y) * width + x) * channels + k], 0.0f, 1.0f);
        img.ptr<uint8_t>(y)[x * channels + (channels == 1 ? 0 : 2 - k)] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

}  // namespace lfgen
