#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gift {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SplitMix64 finalizer; decorrelates nearby integer keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept { return mix64(a ^ mix64(b)); }

/// Uniform double in [0, 1) from the top 53 bits; identical on every standard library.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

constexpr double unit_from_hash(std::uint64_t h) noexcept { return static_cast<double>(h >> 11) * 0x1.0p-53; }

/// Uniform index in [0, n) by rejection, portable across standard libraries.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

/// Independent stream for (global seed, key, salt); results do not depend on scheduling order.
inline Rng derive_stream(std::uint64_t global_seed, std::string_view key, std::string_view salt = {},
                         std::uint64_t extra = 0) {
  std::uint64_t s = hash_combine(hash_combine(mix64(global_seed), fnv1a(key)), fnv1a(salt));
  return Rng(hash_combine(s, extra));
}

}  // namespace gift
