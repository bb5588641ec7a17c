#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slash/errors.hpp"

namespace slash {

/// Global identifier of a dataset vector. The all-ones value is reserved as
/// the "no heavy hitter" marker inside sketches.
using VectorId = std::uint64_t;
inline constexpr VectorId kNullId = ~VectorId{0};

/// A binary vector stored as its sorted active dimensions.
///
/// Construction validates instead of repairing: unsorted or duplicate indices
/// and indices outside [0, dim) raise InvalidVector. An empty vector can be
/// represented, but the hashing and indexing paths reject it with EmptyVector.
class SparseVector {
 public:
  SparseVector() = default;
  SparseVector(std::vector<std::uint32_t> indices, std::uint64_t dim);

  std::span<const std::uint32_t> indices() const noexcept { return indices_; }
  std::uint64_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<std::uint32_t> indices_;
  std::uint64_t dim_ = 0;
};

/// Dimensionality used when the caller does not know d; every 32-bit index is valid.
inline constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

struct Record {
  VectorId id = 0;
  SparseVector vector;
};

/// One node's share of the dataset.
struct DatasetPartition {
  std::uint32_t node_id = 0;
  std::vector<Record> records;
};

/// (K, L) LSH parameters plus sketch shape. Every node of a deployment must
/// hold an identical copy, master seed included.
struct LshConfig {
  std::uint32_t hashes_per_table = 4;  // K
  std::uint32_t num_tables = 16;       // L
  std::uint64_t range = std::uint64_t{1} << 20;  // addresses per table, power of two
  std::uint32_t sketch_rows = 4;       // W
  std::uint32_t sketch_cols = 32;      // B
  std::uint64_t master_seed = 0x5eed5eed5eedULL;
  std::uint32_t top_k = 8;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// log2(range); valid only after validate().
  std::uint32_t range_bits() const;

  /// Stable 64-bit digest over every field; nodes compare it before querying.
  std::uint64_t fingerprint() const;

  /// Default sketch width for a given k: B = 4k.
  static std::uint32_t default_sketch_cols(std::uint32_t top_k) { return 4 * top_k; }

  friend bool operator==(const LshConfig&, const LshConfig&) = default;
};

/// L x K matrix of 64-bit seeds, row-major by table.
class SeedMatrix {
 public:
  SeedMatrix(std::uint32_t rows, std::uint32_t cols, std::vector<std::uint64_t> values);

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }
  std::uint64_t operator()(std::uint32_t row, std::uint32_t col) const { return values_[row * cols_ + col]; }
  std::span<const std::uint64_t> row(std::uint32_t r) const {
    return std::span<const std::uint64_t>(values_).subspan(std::size_t{r} * cols_, cols_);
  }
  std::span<const std::uint64_t> values() const noexcept { return values_; }

  friend bool operator==(const SeedMatrix&, const SeedMatrix&) = default;

 private:
  std::uint32_t rows_;
  std::uint32_t cols_;
  std::vector<std::uint64_t> values_;
};

/// Counter-mode expansion of the master seed into L x K hash seeds. Pure; all
/// entries are distinct because the underlying output function is a bijection.
SeedMatrix derive_seeds(std::uint64_t master_seed, std::uint32_t hashes_per_table, std::uint32_t num_tables);

/// `count` seeds from an independent stream tagged by `domain`.
std::vector<std::uint64_t> derive_stream(std::uint64_t master_seed, std::uint64_t domain, std::size_t count);

// ---------------------------------------------------------------------------
// Similarity between binary vectors. Every call increments a process-wide
// counter so query paths can prove they never compute a distance.

std::uint64_t intersection_size(const SparseVector& a, const SparseVector& b);
double jaccard(const SparseVector& a, const SparseVector& b);
double cosine(const SparseVector& a, const SparseVector& b);

std::uint64_t distance_computations() noexcept;
void reset_distance_computations() noexcept;

// Evaluation metrics (S@k) use a separate counter so they never mask a
// distance computation on the query path.
double evaluation_cosine(const SparseVector& a, const SparseVector& b);
std::uint64_t evaluation_computations() noexcept;

using VectorLookup = std::function<const SparseVector*(VectorId)>;

}  // namespace slash
