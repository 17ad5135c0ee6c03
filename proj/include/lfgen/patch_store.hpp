#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lfgen/patches.hpp"

namespace lfgen {

/// Binary patch store.
///
/// Layout (little endian):
///   char[8]  magic "LFPATCH1"
///   uint32   angular resolution N_v
///   uint32   patch size (25)
///   uint64   patch count
///   uint64   seed used to draw the patches
///   float32  count * N_v * N_v * 25 * 25 values, one record per patch,
///            each packed (row, col, y, x)
inline constexpr char kPatchStoreMagic[8] = {'L', 'F', 'P', 'A', 'T', 'C', 'H', '1'};
inline constexpr std::size_t kPatchStoreHeaderBytes = 32;

struct PatchStoreHeader {
  int angular = 0;
  int patch_size = kPatchSize;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
};

/// Single-writer streaming writer; the header count is fixed up on close.
class PatchStoreWriter {
 public:
  PatchStoreWriter(const std::filesystem::path& path, int angular, std::uint64_t seed);
  ~PatchStoreWriter();
  PatchStoreWriter(const PatchStoreWriter&) = delete;
  PatchStoreWriter& operator=(const PatchStoreWriter&) = delete;

  void append(const LFPatch& patch);
  void close();
  std::uint64_t count() const { return header_.count; }

 private:
  void write_header();

  std::filesystem::path path_;
  std::ofstream out_;
  PatchStoreHeader header_;
};

/// Random-access reader.
class PatchStore {
 public:
  explicit PatchStore(const std::filesystem::path& path);

  const PatchStoreHeader& header() const { return header_; }
  std::size_t size() const { return static_cast<std::size_t>(header_.count); }
  int angular() const { return header_.angular; }

  LFPatch read(std::size_t index);
  std::vector<LFPatch> read_all();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  PatchStoreHeader header_;
};

void write_patch_store(const std::filesystem::path& path, const std::vector<LFPatch>& patches,
                       std::uint64_t seed);

struct PatchSource {
  std::string name;
  std::filesystem::path path;
  double downscale = 1.0;  // applied before cropping; 1.4 for high-disparity sets
};

/// Draws `count` grayscale patches: uniform source choice, then a uniform
/// spatial crop, under `seed`. Returns the number of patches drawn from each
/// source (same order as `sources`).
std::vector<std::uint64_t> build_patch_dataset(const std::vector<PatchSource>& sources,
                                               std::uint64_t count, std::uint64_t seed,
                                               const std::filesystem::path& out);

/// Same draw over already-loaded fields (grayscale conversion and downscale
/// applied here).
std::vector<std::uint64_t> build_patch_dataset(const std::vector<LightField>& fields,
                                               const std::vector<double>& downscale,
                                               std::uint64_t count, std::uint64_t seed,
                                               const std::filesystem::path& out);

}  // namespace lfgen
