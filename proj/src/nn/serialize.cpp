#include "lfgen/nn/serialize.hpp"

#include <cstring>
#include <fstream>

#include "lfgen/error.hpp"

namespace lfgen::nn {

namespace {

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open " + path.string());
  }

  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) throw DataError("corrupt tensor file " + path_.string() + " (string too long)");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }

  void read_floats(float* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
    check();
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  void check() {
    if (!in_) throw DataError("truncated tensor file " + path_.string());
  }
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

const Tensor* TensorFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kTensorFileMagic, sizeof(kTensorFileMagic));
  put<std::uint32_t>(os, kTensorFileVersion);
  put<std::uint64_t>(os, file.fingerprint);
  put_string(os, file.kind);
  put_string(os, file.config);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    put_string(os, name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw DataError("write failed on " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  Reader in(path);
  char magic[8];
  for (char& c : magic) c = in.get<char>();
  if (std::memcmp(magic, kTensorFileMagic, sizeof(magic)) != 0)
    throw DataError(path.string() + " is not a model weight file (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kTensorFileVersion)
    throw DataError("unsupported weight file version " + std::to_string(version));
  TensorFile file;
  file.fingerprint = in.get<std::uint64_t>();
  file.kind = in.get_string();
  file.config = in.get_string();
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.get_string();
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw DataError("corrupt tensor file " + path.string() + " (bad rank)");
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (int& d : shape) {
      d = static_cast<int>(in.get<std::uint32_t>());
      n *= static_cast<std::size_t>(d);
    }
    if (n > (std::size_t{1} << 31)) throw DataError("corrupt tensor file " + path.string() + " (tensor too large)");
    Tensor t(shape);
    in.read_floats(t.data(), t.size());
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!in.at_end()) throw DataError("trailing data in tensor file " + path.string());
  return file;
}

}  // namespace lfgen::nn
