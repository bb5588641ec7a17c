#pragma once

#include <cstdint>

namespace slash {

// MurmurHash3 64-bit finalizer. A bijection on 64-bit words.
constexpr std::uint64_t fmix64(std::uint64_t h) noexcept {
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

// Output function of splitmix64 applied to `state + (counter + 1) * gamma`.
// Distinct counters give distinct outputs for a fixed state.
constexpr std::uint64_t splitmix64_at(std::uint64_t state, std::uint64_t counter) noexcept {
  std::uint64_t z = state + (counter + 1) * kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seeded 64-bit mixer used for every hash in the system: index permutations,
/// densification coins, table addressing and sketch row routing.
constexpr std::uint64_t mix64(std::uint64_t x, std::uint64_t seed) noexcept {
  std::uint64_t h = fmix64(x ^ seed);
  h = fmix64(h + (seed * kGoldenGamma | 1));
  return h;
}

// Map a uniform 64-bit value onto [0, n) without modulo bias (Lemire's reduction).
constexpr std::uint64_t reduce_range(std::uint64_t h, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(h) * n) >> 64);
}

// Domain tags so that independent seed streams never share a counter space.
namespace seed_domain {
inline constexpr std::uint64_t kLshTables = 0x6c73682d7461626cULL;
inline constexpr std::uint64_t kDoph = 0x646f70682d707274ULL;
inline constexpr std::uint64_t kDensify = 0x64656e73652d636eULL;
inline constexpr std::uint64_t kSketchRows = 0x736b657463682d72ULL;
}  // namespace seed_domain

}  // namespace slash
