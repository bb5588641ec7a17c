#include "slash/core.hpp"

#include <bit>
#include <cmath>

#include "slash/mix.hpp"

namespace slash {

namespace {

std::atomic<std::uint64_t> g_distance_computations{0};
std::atomic<std::uint64_t> g_evaluation_computations{0};

std::uint64_t intersect(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  std::uint64_t n = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

double cosine_of(const SparseVector& a, const SparseVector& b) {
  if (a.empty() || b.empty()) return 0.0;
  const double inter = static_cast<double>(intersect(a.indices(), b.indices()));
  return inter / std::sqrt(static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

SparseVector::SparseVector(std::vector<std::uint32_t> indices, std::uint64_t dim)
    : indices_(std::move(indices)), dim_(dim) {
  if (dim_ == 0) throw InvalidVector("dimensionality must be positive");
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= dim_) {
      throw InvalidVector("index " + std::to_string(indices_[i]) + " out of range for dimensionality " +
                          std::to_string(dim_));
    }
    if (i > 0 && indices_[i] <= indices_[i - 1]) {
      throw InvalidVector("indices not strictly increasing at position " + std::to_string(i) + " (" +
                          std::to_string(indices_[i - 1]) + " then " + std::to_string(indices_[i]) + ")");
    }
  }
}

void LshConfig::validate() const {
  if (hashes_per_table == 0) throw ConfigError("K (hashes per table) must be >= 1");
  if (num_tables == 0) throw ConfigError("L (number of tables) must be >= 1");
  if (range < 2 || !std::has_single_bit(range)) {
    throw ConfigError("table range must be a power of two >= 2, got " + std::to_string(range));
  }
  if (range > (std::uint64_t{1} << 32)) throw ConfigError("table range must not exceed 2^32");
  if (sketch_rows == 0) throw ConfigError("sketch rows (W) must be >= 1");
  if (sketch_cols == 0) throw ConfigError("sketch columns (B) must be >= 1");
  if (top_k == 0) throw ConfigError("top_k must be >= 1");
}

std::uint32_t LshConfig::range_bits() const { return static_cast<std::uint32_t>(std::countr_zero(range)); }

std::uint64_t LshConfig::fingerprint() const {
  std::uint64_t h = 0x736c6173682d6366ULL;
  for (std::uint64_t field : {std::uint64_t{hashes_per_table}, std::uint64_t{num_tables}, range,
                              std::uint64_t{sketch_rows}, std::uint64_t{sketch_cols}, master_seed,
                              std::uint64_t{top_k}}) {
    h = mix64(field, h);
  }
  return h;
}

SeedMatrix::SeedMatrix(std::uint32_t rows, std::uint32_t cols, std::vector<std::uint64_t> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != std::size_t{rows_} * cols_) throw std::invalid_argument("seed matrix size mismatch");
}

SeedMatrix derive_seeds(std::uint64_t master_seed, std::uint32_t hashes_per_table, std::uint32_t num_tables) {
  if (hashes_per_table == 0 || num_tables == 0) throw ConfigError("seed matrix needs K >= 1 and L >= 1");
  return SeedMatrix(num_tables, hashes_per_table,
                    derive_stream(master_seed, seed_domain::kLshTables,
                                  std::size_t{hashes_per_table} * num_tables));
}

std::vector<std::uint64_t> derive_stream(std::uint64_t master_seed, std::uint64_t domain, std::size_t count) {
  const std::uint64_t state = mix64(master_seed, domain);
  std::vector<std::uint64_t> out(count);
  for (std::size_t c = 0; c < count; ++c) out[c] = splitmix64_at(state, c);
  return out;
}

std::uint64_t intersection_size(const SparseVector& a, const SparseVector& b) {
  g_distance_computations.fetch_add(1, std::memory_order_relaxed);
  return intersect(a.indices(), b.indices());
}

double jaccard(const SparseVector& a, const SparseVector& b) {
  g_distance_computations.fetch_add(1, std::memory_order_relaxed);
  const auto inter = intersect(a.indices(), b.indices());
  const auto uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double cosine(const SparseVector& a, const SparseVector& b) {
  g_distance_computations.fetch_add(1, std::memory_order_relaxed);
  return cosine_of(a, b);
}

std::uint64_t distance_computations() noexcept { return g_distance_computations.load(); }
void reset_distance_computations() noexcept { g_distance_computations.store(0); }

double evaluation_cosine(const SparseVector& a, const SparseVector& b) {
  g_evaluation_computations.fetch_add(1, std::memory_order_relaxed);
  return cosine_of(a, b);
}

std::uint64_t evaluation_computations() noexcept { return g_evaluation_computations.load(); }

}  // namespace slash
