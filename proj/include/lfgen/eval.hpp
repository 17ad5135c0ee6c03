#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lfgen/lightfield.hpp"
#include "lfgen/operators.hpp"

namespace lfgen {

/// Returned for exact matches instead of +inf.
inline constexpr double kPsnrCap = 100.0;

enum class PsnrMode { PerChannelMean, Luminance };

/// 10 log10(1 / MSE) for data in [0,1], capped at kPsnrCap.
double psnr(std::span<const float> ref, std::span<const float> est);
/// PerChannelMean averages the PSNR of each colour channel; Luminance
/// converts both fields to grayscale first.
double psnr(const LightField& ref, const LightField& est, PsnrMode mode);

struct ViewPsnr {
  std::vector<double> grid;  // N_v x N_v row-major, NaN for excluded views
  double mean = 0.0;
  int count = 0;
};

/// PSNR of every view, averaged over the views not marked known. A mask with
/// no known views averages over all views.
ViewPsnr novel_view_psnr(const LightField& ref, const LightField& est, const AngularMask& known, PsnrMode mode);

/// |ref - est| * gain clamped to [0,1].
std::vector<float> error_map(std::span<const float> ref, std::span<const float> est, double gain);
/// 8-bit grayscale PNG.
void write_error_map(const std::filesystem::path& path, std::span<const float> map, int height, int width);

struct EvalRecord {
  std::string lf;
  std::string task;
  std::string mask;
  int stride = 0;
  std::string loss;
  double mean_psnr_db = 0.0;
  double runtime_s = 0.0;
};

/// Writes `path` as CSV (lf,task,mask,stride,loss,mean_psnr_db,runtime_s)
/// and a fixed-width table next to it with extension .txt. Rows are sorted
/// by (lf, task, mask, stride, loss).
void emit_report(std::vector<EvalRecord> records, const std::filesystem::path& path);

}  // namespace lfgen
