#include "lfgen/patch_store.hpp"

#include <cstring>
#include <random>

#include "lfgen/error.hpp"
#include "lfgen/lightfield_io.hpp"

namespace fs = std::filesystem;

namespace lfgen {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

std::size_t record_floats(int angular) {
  return static_cast<std::size_t>(angular) * angular * kPatchSize * kPatchSize;
}

}  // namespace

PatchStoreWriter::PatchStoreWriter(const fs::path& path, int angular, std::uint64_t seed)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("cannot write patch store " + path.string());
  header_.angular = angular;
  header_.seed = seed;
  write_header();
}

PatchStoreWriter::~PatchStoreWriter() {
  try {
    close();
  } catch (...) {
  }
}

void PatchStoreWriter::write_header() {
  out_.seekp(0);
  out_.write(kPatchStoreMagic, 8);
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(header_.angular));
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(header_.patch_size));
  put<std::uint64_t>(out_, header_.count);
  put<std::uint64_t>(out_, header_.seed);
}

void PatchStoreWriter::append(const LFPatch& patch) {
  if (patch.angular != header_.angular) throw DataError("patch angular size does not match store");
  out_.write(reinterpret_cast<const char*>(patch.data.data()),
             static_cast<std::streamsize>(patch.data.size() * sizeof(float)));
  if (!out_) throw DataError("write failed on " + path_.string());
  ++header_.count;
}

void PatchStoreWriter::close() {
  if (!out_.is_open()) return;
  write_header();
  out_.close();
  if (out_.fail()) throw DataError("cannot finalise patch store " + path_.string());
}

PatchStore::PatchStore(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open patch store " + path.string());
  char magic[8];
  in_.read(magic, 8);
  if (!in_ || std::memcmp(magic, kPatchStoreMagic, 8) != 0)
    throw DataError(path.string() + " is not a patch store (bad magic)");
  header_.angular = static_cast<int>(get<std::uint32_t>(in_));
  header_.patch_size = static_cast<int>(get<std::uint32_t>(in_));
  header_.count = get<std::uint64_t>(in_);
  header_.seed = get<std::uint64_t>(in_);
  if (!in_ || header_.patch_size != kPatchSize || header_.angular <= 0)
    throw DataError("corrupt patch store header in " + path.string());
  const auto expected = kPatchStoreHeaderBytes + header_.count * record_floats(header_.angular) * sizeof(float);
  if (fs::file_size(path) != expected) throw DataError("patch store " + path.string() + " is truncated");
}

LFPatch PatchStore::read(std::size_t index) {
  if (index >= size()) throw DataError("patch index out of range");
  LFPatch p(header_.angular);
  const auto bytes = record_floats(header_.angular) * sizeof(float);
  in_.seekg(static_cast<std::streamoff>(kPatchStoreHeaderBytes + index * bytes));
  in_.read(reinterpret_cast<char*>(p.data.data()), static_cast<std::streamsize>(bytes));
  if (!in_) throw DataError("read failed on " + path_.string());
  return p;
}

std::vector<LFPatch> PatchStore::read_all() {
  std::vector<LFPatch> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(read(i));
  return out;
}

void write_patch_store(const fs::path& path, const std::vector<LFPatch>& patches, std::uint64_t seed) {
  if (patches.empty()) throw DataError("no patches to write");
  PatchStoreWriter w(path, patches.front().angular, seed);
  for (const auto& p : patches) w.append(p);
  w.close();
}

std::vector<std::uint64_t> build_patch_dataset(const std::vector<LightField>& fields,
                                               const std::vector<double>& downscale,
                                               std::uint64_t count, std::uint64_t seed,
                                               const fs::path& out) {
  if (fields.empty()) throw UsageError("no patch sources");
  if (count < 1) throw UsageError("patch count must be >= 1");
  std::vector<LightField> prepared;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    LightField g = to_grayscale(fields[i]);
    const double f = i < downscale.size() ? downscale[i] : 1.0;
    if (f != 1.0) g = spatial_downscale(g, f);
    if (g.height() < kPatchSize || g.width() < kPatchSize)
      throw DataError("source " + std::to_string(i) + " is smaller than the patch size");
    if (!prepared.empty() && g.angular() != prepared.front().angular())
      throw DataError("sources have different angular resolutions");
    prepared.push_back(std::move(g));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, prepared.size() - 1);
  std::vector<std::uint64_t> per_source(prepared.size(), 0);
  PatchStoreWriter w(out, prepared.front().angular(), seed);
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::size_t s = pick(rng);
    const LightField& g = prepared[s];
    std::uniform_int_distribution<int> oy(0, g.height() - kPatchSize);
    std::uniform_int_distribution<int> ox(0, g.width() - kPatchSize);
    const int y = oy(rng);
    const int x = ox(rng);
    w.append(crop_patch(g.data(), g.shape(), y, x));
    ++per_source[s];
  }
  w.close();
  return per_source;
}

std::vector<std::uint64_t> build_patch_dataset(const std::vector<PatchSource>& sources,
                                               std::uint64_t count, std::uint64_t seed,
                                               const fs::path& out) {
  std::vector<LightField> fields;
  std::vector<double> factors;
  for (const auto& s : sources) {
    fields.push_back(load_lightfield(s.path));
    factors.push_back(s.downscale);
  }
  return build_patch_dataset(fields, factors, count, seed, out);
}

}  // namespace lfgen
