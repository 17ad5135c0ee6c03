#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lfgen/nn/tensor.hpp"

namespace lfgen::nn {

/// Versioned named-tensor file.
///
/// Layout (little endian):
///   char[8]  magic "LFCVAEW1"
///   uint32   format version (1)
///   uint64   model config fingerprint
///   uint32 + bytes  kind ("weights" or "checkpoint")
///   uint32 + bytes  model config description
///   uint32   tensor count
///   per tensor: uint32 + bytes name, uint32 rank, uint32[rank] dims, float32[] values
inline constexpr char kTensorFileMagic[8] = {'L', 'F', 'C', 'V', 'A', 'E', 'W', '1'};
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct TensorFile {
  std::string kind;
  std::string config;
  std::uint64_t fingerprint = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace lfgen::nn
