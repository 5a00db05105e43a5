#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dho {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a; stable across platforms, used for stream names and config hashes.
constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (char ch : text) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for a named purpose ("split", "init", "batches", "teacher", ...).
/// Streams derived from the same seed with different names do not influence each other.
inline Rng named_stream(std::uint64_t seed, std::string_view name) {
  return Rng(splitmix64(seed ^ splitmix64(fnv1a64(name))));
}

}  // namespace dho
