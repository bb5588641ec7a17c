#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "slash/bytes.hpp"
#include "slash/core.hpp"

namespace slash {

struct SketchCell {
  VectorId heavy_hitter = kNullId;
  std::uint64_t count = 0;

  friend bool operator==(const SketchCell&, const SketchCell&) = default;
};

struct HeavyHitter {
  VectorId id = 0;
  std::uint64_t count = 0;

  friend bool operator==(const HeavyHitter&, const HeavyHitter&) = default;
};

/// Candidates sorted by descending count, ties by ascending id; ids unique.
using HeavyHitterSet = std::vector<HeavyHitter>;

using RowSeeds = std::shared_ptr<const std::vector<std::uint64_t>>;

/// W row seeds for the sketches of one deployment, independent of LSH seeds.
RowSeeds sketch_row_seeds(std::uint64_t master_seed, std::uint32_t rows);

/// Topkapi heavy-hitter sketch: a W x B grid of (candidate, counter) cells.
///
/// Each row routes an id to one column through its own seeded hash. Insert
/// follows the majority-vote rule per cell; merge combines two sketches with
/// the same shape and row seeds cell by cell. The grid is allocated once and
/// never grows.
///
/// Not internally synchronized: callers serialize concurrent inserts.
class TopkapiSketch {
 public:
  TopkapiSketch(std::uint32_t rows, std::uint32_t cols, RowSeeds row_seeds);

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }
  const RowSeeds& row_seeds() const noexcept { return seeds_; }

  std::size_t column(std::uint32_t row, VectorId id) const;
  const SketchCell& cell(std::uint32_t row, std::size_t col) const { return cells_[row * std::size_t{cols_} + col]; }
  std::span<const SketchCell> cells() const noexcept { return cells_; }

  void insert(VectorId id);

  /// In-place merge: this sketch is the left operand. Throws ShapeMismatch.
  void merge(const TopkapiSketch& other);

  /// Heavy hitters with count > threshold; per id the maximum over rows.
  HeavyHitterSet query(std::uint64_t threshold = 0) const;

  /// True when every cell is (null, 0).
  bool is_empty() const;

  bool same_shape(const TopkapiSketch& other) const;

  /// Bytes owned by this sketch; constant for its lifetime.
  std::size_t footprint_bytes() const noexcept { return sizeof(*this) + cells_.capacity() * sizeof(SketchCell); }

  /// u64 body length, u32 W, u32 B, W x u64 row seeds, W*B x (u64 id, u64 count).
  void serialize(ByteWriter& out) const;
  Bytes serialize() const;

  /// `shared_seeds`, when equal in content to the decoded seeds, is reused
  /// instead of allocating a fresh copy.
  static TopkapiSketch deserialize(ByteReader& in, const RowSeeds& shared_seeds = nullptr);

  friend bool operator==(const TopkapiSketch& a, const TopkapiSketch& b);

 private:
  std::uint32_t rows_;
  std::uint32_t cols_;
  RowSeeds seeds_;
  std::vector<SketchCell> cells_;
};

TopkapiSketch merged(const TopkapiSketch& a, const TopkapiSketch& b);

/// Merge rule for a single pair of cells; `a` is the left operand.
SketchCell merge_cells(const SketchCell& a, const SketchCell& b) noexcept;

/// Exact multiset counting, used as a test oracle and by the exact query mode.
using FrequencyMap = std::map<VectorId, std::uint64_t>;

FrequencyMap exact_counter(std::span<const VectorId> stream);

/// Adds `other` into `into`.
void merge_frequencies(FrequencyMap& into, const FrequencyMap& other);

void serialize_frequencies(const FrequencyMap& map, ByteWriter& out);
FrequencyMap deserialize_frequencies(ByteReader& in);

}  // namespace slash
