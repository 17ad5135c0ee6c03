#include "lfgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <tuple>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lfgen/error.hpp"

namespace lfgen {

namespace {

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

void check_same_shape(const LightField& a, const LightField& b) {
  if (a.shape() != b.shape() || a.channels() != b.channels()) throw DataError("light field shapes differ");
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

double psnr(std::span<const float> ref, std::span<const float> est) {
  if (ref.size() != est.size()) throw DataError("psnr inputs differ in size");
  if (ref.empty()) throw DataError("psnr of empty inputs");
  double se = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - est[i];
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(ref.size()));
}

double psnr(const LightField& ref, const LightField& est, PsnrMode mode) {
  check_same_shape(ref, est);
  if (mode == PsnrMode::Luminance) return psnr(to_grayscale(ref).data(), to_grayscale(est).data());
  double sum = 0.0;
  for (int c = 0; c < ref.channels(); ++c) sum += psnr(ref.channel(c), est.channel(c));
  return sum / ref.channels();
}

ViewPsnr novel_view_psnr(const LightField& ref, const LightField& est, const AngularMask& known, PsnrMode mode) {
  check_same_shape(ref, est);
  if (known.angular != ref.angular()) throw DataError("view mask does not match the light field");
  const int a = ref.angular();
  const bool all = known.count() == 0;
  if (!all && known.count() == a * a) throw DataError("no novel views to evaluate");
  const LightField r = mode == PsnrMode::Luminance ? to_grayscale(ref) : ref;
  const LightField e = mode == PsnrMode::Luminance ? to_grayscale(est) : est;
  ViewPsnr out;
  out.grid.assign(static_cast<std::size_t>(a) * a, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (int row = 0; row < a; ++row)
    for (int col = 0; col < a; ++col) {
      if (!all && known.at(row, col)) continue;
      double v = 0.0;
      for (int c = 0; c < r.channels(); ++c) v += psnr(r.view(row, col, c), e.view(row, col, c));
      v /= r.channels();
      out.grid[static_cast<std::size_t>(row) * a + col] = v;
      sum += v;
      ++out.count;
    }
  out.mean = sum / out.count;
  return out;
}

std::vector<float> error_map(std::span<const float> ref, std::span<const float> est, double gain) {
  if (ref.size() != est.size()) throw DataError("error map inputs differ in size");
  std::vector<float> out(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    out[i] = static_cast<float>(std::clamp(std::abs(static_cast<double>(ref[i]) - est[i]) * gain, 0.0, 1.0));
  return out;
}

void write_error_map(const std::filesystem::path& path, std::span<const float> map, int height, int width) {
  if (map.size() != static_cast<std::size_t>(height) * width) throw DataError("error map size mismatch");
  cv::Mat img(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(
          std::lround(std::clamp(map[static_cast<std::size_t>(y) * width + x], 0.0f, 1.0f) * 255.0f));
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

void emit_report(std::vector<EvalRecord> records, const std::filesystem::path& path) {
  if (records.empty()) throw DataError("report has no results");
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    return std::tie(a.lf, a.task, a.mask, a.stride, a.loss) < std::tie(b.lf, b.task, b.mask, b.stride, b.loss);
  });

  std::ofstream csv(path);
  if (!csv) throw DataError("cannot write " + path.string());
  csv << "lf,task,mask,stride,loss,mean_psnr_db,runtime_s\n";
  for (const auto& r : records)
    csv << r.lf << ',' << r.task << ',' << r.mask << ',' << r.stride << ',' << r.loss << ','
        << format("%.4f", r.mean_psnr_db) << ',' << format("%.3f", r.runtime_s) << '\n';
  if (!csv) throw DataError("cannot write " + path.string());

  const std::vector<std::string> header = {"lf", "task", "mask", "stride", "loss", "PSNR [dB]", "time [s]"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records)
    rows.push_back({r.lf, r.task, r.mask, std::to_string(r.stride), r.loss, format("%.2f", r.mean_psnr_db),
                    format("%.1f", r.runtime_s)});
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto path_txt = path;
  path_txt.replace_extension(".txt");
  std::ofstream txt(path_txt);
  if (!txt) throw DataError("cannot write " + path_txt.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      // Text columns left aligned, numbers right aligned.
      txt << (c == 0 ? "" : "  ") << (c >= 5 || c == 3 ? pad + cells[c] : cells[c] + pad);
    }
    txt << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  txt << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : rows) line(row);
}

}  // namespace lfgen
