#pragma once

#include <cstdint>
#include <initializer_list>

namespace lfgen {

/// Derives an independent stream seed from a run seed and stream indices
/// (splitmix64 finaliser applied per component).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t s : stream) h = mix(h ^ mix(s));
  return h;
}

}  // namespace lfgen
