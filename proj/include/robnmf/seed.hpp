#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace robnmf {

/// SplitMix64 finalizer. Used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed) noexcept { return mix64(seed); }

/// Stable combination of a parent seed with any number of integer tags.
template <class... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, Tags... rest) noexcept {
  return derive_seed(mix64(seed ^ mix64(tag)), static_cast<std::uint64_t>(rest)...);
}

/// FNV-1a, for turning labels (noise names, config text) into seed tags and hashes.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

/// Uniform draw from (0, 1]; never returns 0.
inline double uniform_open_closed(Rng& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

/// Uniform draw from [0, 1).
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection, independent of the standard library's distributions.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace robnmf
