#include "slash/hashing.hpp"

#include <bit>

namespace slash {

std::uint64_t minhash(const SparseVector& v, std::uint64_t seed) {
  if (v.empty()) throw EmptyVector();
  std::uint64_t best = ~std::uint64_t{0};
  for (std::uint32_t index : v.indices()) {
    const std::uint64_t h = mix64(index, seed);
    if (h < best) best = h;
  }
  return best;
}

namespace detail {

std::uint64_t densify_seed(std::uint64_t seed) noexcept { return mix64(seed, seed_domain::kDensify); }

void densify(std::vector<std::uint64_t>& bins, const std::vector<std::uint8_t>& filled, std::uint64_t seed) {
  const std::size_t n = bins.size();
  // Only originally filled bins act as sources; their values never change here.
  for (std::size_t b = 0; b < n; ++b) {
    if (filled[b]) continue;
    bool done = false;
    for (std::size_t t = 1; t <= n / 2 && !done; ++t) {
      const std::size_t left = (b + n - t) % n;
      const std::size_t right = (b + t) % n;
      const bool right_first = mix64((std::uint64_t{b} << 32) ^ t, seed) >> 63;
      const std::size_t first = right_first ? right : left;
      const std::size_t second = right_first ? left : right;
      if (filled[first]) {
        bins[b] = bins[first];
        done = true;
      } else if (filled[second]) {
        bins[b] = bins[second];
        done = true;
      }
    }
  }
}

}  // namespace detail

std::vector<std::uint64_t> doph_hashes(const SparseVector& v, std::size_t num_hashes, std::uint64_t seed) {
  return doph_hashes_of(v.indices(), num_hashes, seed);
}

std::uint32_t table_address(std::span<const std::uint64_t> hashes, std::span<const std::uint64_t> seeds,
                            std::uint64_t range) {
  if (range < 2 || !std::has_single_bit(range) || range > (std::uint64_t{1} << 32)) {
    throw ConfigError("table range must be a power of two in [2, 2^32]");
  }
  if (seeds.size() != hashes.size()) throw std::invalid_argument("table_address: one seed per hash required");
  std::uint64_t acc = 0x7461626c652d6164ULL;
  for (std::size_t j = 0; j < hashes.size(); ++j) acc = mix64(acc ^ hashes[j], seeds[j]);
  const int bits = std::countr_zero(range);
  return static_cast<std::uint32_t>(acc >> (64 - bits));
}

HashFamily::HashFamily(const LshConfig& config)
    : seeds_(derive_seeds(config.master_seed, config.hashes_per_table, config.num_tables)),
      doph_seed_(derive_stream(config.master_seed, seed_domain::kDoph, 1).front()),
      range_(config.range) {
  config.validate();
}

std::vector<std::uint32_t> HashFamily::addresses(const SparseVector& v) const {
  std::vector<std::uint32_t> out(num_tables());
  addresses(v, out);
  return out;
}

void HashFamily::addresses(const SparseVector& v, std::span<std::uint32_t> out) const {
  const std::uint32_t k = hashes_per_table();
  const std::uint32_t l = num_tables();
  if (out.size() != l) throw std::invalid_argument("address buffer must hold L entries");
  const auto slots = doph_hashes(v, std::size_t{k} * l, doph_seed_);
  for (std::uint32_t table = 0; table < l; ++table) {
    out[table] = table_address(std::span(slots).subspan(std::size_t{table} * k, k), seeds_.row(table), range_);
  }
}

}  // namespace slash
