#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mixedabc {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; used to turn (seed, stream id) pairs into
/// well-separated engine seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a, for fanning a root seed out by stage name.
constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Key of the stream numbered `stream` under `seed`. Streams are a pure
/// function of their coordinates, so work items can be generated in any
/// order (or in parallel) and still reproduce the same numbers.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t stream_key(std::uint64_t seed, std::string_view name) noexcept {
  return stream_key(seed, hash_name(name));
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  return Engine(stream_key(seed, stream));
}

inline Engine make_engine(std::uint64_t seed, std::string_view name, std::uint64_t stream = 0) {
  return Engine(stream_key(stream_key(seed, name), stream));
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
inline double uniform_open01(Engine& eng) {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection; independent of the standard
/// library's distribution implementation.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  const std::uint64_t limit = Engine::max() - Engine::max() % n;
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return x % n;
}

}  // namespace mixedabc
