#pragma once

#include <cstdint>
#include <ranges>
#include <span>
#include <vector>

#include "slash/core.hpp"
#include "slash/mix.hpp"

namespace slash {

/// Width of individual MinHash / DOPH outputs.
inline constexpr unsigned kUniverseBits = 64;

/// MinHash of `v`: minimum over its active indices of mix64(index, seed).
std::uint64_t minhash(const SparseVector& v, std::uint64_t seed);

namespace detail {

std::uint64_t densify_seed(std::uint64_t seed) noexcept;

// Fills empty bins from the nearest non-empty bin. At distance t from bin b the
// two candidates (b - t) and (b + t) are probed in an order decided by a coin
// seeded with (seed, b, t); indices wrap circularly. The probe sequence does
// not depend on the data, which keeps per-slot collisions at the Jaccard rate.
void densify(std::vector<std::uint64_t>& bins, const std::vector<std::uint8_t>& filled, std::uint64_t seed);

}  // namespace detail

/// Densified one-permutation hashing over any range of active indices.
///
/// Each index is hashed once and routed to bin floor(h * n / 2^64), keeping the
/// per-bin minimum. Empty bins are filled by detail::densify.
template <std::ranges::input_range Indices>
std::vector<std::uint64_t> doph_hashes_of(Indices&& indices, std::size_t num_hashes, std::uint64_t seed) {
  if (num_hashes == 0) throw std::invalid_argument("doph_hashes: number of hashes must be >= 1");
  std::vector<std::uint64_t> bins(num_hashes, ~std::uint64_t{0});
  std::vector<std::uint8_t> filled(num_hashes, 0);
  bool any = false;
  for (auto&& index : indices) {
    const std::uint64_t h = mix64(static_cast<std::uint64_t>(index), seed);
    const std::size_t bin = static_cast<std::size_t>(reduce_range(h, num_hashes));
    if (!filled[bin] || h < bins[bin]) {
      bins[bin] = h;
      filled[bin] = 1;
    }
    any = true;
  }
  if (!any) throw EmptyVector();
  detail::densify(bins, filled, detail::densify_seed(seed));
  return bins;
}

std::vector<std::uint64_t> doph_hashes(const SparseVector& v, std::size_t num_hashes, std::uint64_t seed);

/// Combine K hash values into an address in [0, range). `seeds` carries one
/// seed per hash (a row of the seed matrix). Equal hash vectors always map to
/// the same address.
std::uint32_t table_address(std::span<const std::uint64_t> hashes, std::span<const std::uint64_t> seeds,
                            std::uint64_t range);

/// The L composite hash functions shared by every node. One DOPH evaluation
/// yields K*L values, sliced row-major into L groups of K.
class HashFamily {
 public:
  explicit HashFamily(const LshConfig& config);

  /// L table addresses for `v`. Throws EmptyVector.
  std::vector<std::uint32_t> addresses(const SparseVector& v) const;
  void addresses(const SparseVector& v, std::span<std::uint32_t> out) const;

  const SeedMatrix& seeds() const noexcept { return seeds_; }
  std::uint64_t doph_seed() const noexcept { return doph_seed_; }
  std::uint32_t num_tables() const noexcept { return seeds_.rows(); }
  std::uint32_t hashes_per_table() const noexcept { return seeds_.cols(); }

 private:
  SeedMatrix seeds_;
  std::uint64_t doph_seed_;
  std::uint64_t range_;
};

}  // namespace slash
