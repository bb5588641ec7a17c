#include "slash/sketch.hpp"

#include <algorithm>
#include <unordered_map>

#include "slash/mix.hpp"

namespace slash {

RowSeeds sketch_row_seeds(std::uint64_t master_seed, std::uint32_t rows) {
  return std::make_shared<const std::vector<std::uint64_t>>(
      derive_stream(master_seed, seed_domain::kSketchRows, rows));
}

TopkapiSketch::TopkapiSketch(std::uint32_t rows, std::uint32_t cols, RowSeeds row_seeds)
    : rows_(rows), cols_(cols), seeds_(std::move(row_seeds)) {
  if (rows_ == 0 || cols_ == 0) throw ConfigError("sketch needs W >= 1 and B >= 1");
  if (!seeds_ || seeds_->size() != rows_) throw ConfigError("sketch needs exactly one seed per row");
  cells_.assign(std::size_t{rows_} * cols_, SketchCell{});
}

std::size_t TopkapiSketch::column(std::uint32_t row, VectorId id) const {
  return static_cast<std::size_t>(reduce_range(mix64(id, (*seeds_)[row]), cols_));
}

void TopkapiSketch::insert(VectorId id) {
  if (id == kNullId) throw std::invalid_argument("the all-ones id is reserved");
  for (std::uint32_t r = 0; r < rows_; ++r) {
    SketchCell& c = cells_[r * std::size_t{cols_} + column(r, id)];
    if (c.heavy_hitter == id) {
      ++c.count;
    } else if (c.count == 0) {
      c = SketchCell{id, 1};
    } else {
      --c.count;
    }
  }
}

SketchCell merge_cells(const SketchCell& a, const SketchCell& b) noexcept {
  if (a.heavy_hitter == b.heavy_hitter) return {a.heavy_hitter, a.count + b.count};
  if (a.count > b.count) return {a.heavy_hitter, a.count - b.count};
  if (b.count > a.count) return {b.heavy_hitter, b.count - a.count};
  // Equal counts, different candidates: no majority survives.
  return {std::min(a.heavy_hitter, b.heavy_hitter), 0};
}

bool TopkapiSketch::same_shape(const TopkapiSketch& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ && (seeds_ == other.seeds_ || *seeds_ == *other.seeds_);
}

void TopkapiSketch::merge(const TopkapiSketch& other) {
  if (!same_shape(other)) {
    throw ShapeMismatch("cannot merge sketches of shape " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                        " and " + std::to_string(other.rows_) + "x" + std::to_string(other.cols_) +
                        " (or differing row seeds)");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] = merge_cells(cells_[i], other.cells_[i]);
}

TopkapiSketch merged(const TopkapiSketch& a, const TopkapiSketch& b) {
  TopkapiSketch out = a;
  out.merge(b);
  return out;
}

HeavyHitterSet TopkapiSketch::query(std::uint64_t threshold) const {
  std::unordered_map<VectorId, std::uint64_t> best;
  for (const SketchCell& c : cells_) {
    if (c.heavy_hitter == kNullId || c.count <= threshold) continue;
    auto [it, inserted] = best.try_emplace(c.heavy_hitter, c.count);
    if (!inserted && c.count > it->second) it->second = c.count;
  }
  HeavyHitterSet out;
  out.reserve(best.size());
  for (const auto& [id, count] : best) out.push_back({id, count});
  std::sort(out.begin(), out.end(), [](const HeavyHitter& x, const HeavyHitter& y) {
    return x.count != y.count ? x.count > y.count : x.id < y.id;
  });
  return out;
}

bool TopkapiSketch::is_empty() const {
  return std::all_of(cells_.begin(), cells_.end(), [](const SketchCell& c) { return c == SketchCell{}; });
}

void TopkapiSketch::serialize(ByteWriter& out) const {
  const std::size_t body = 4 + 4 + 8 * std::size_t{rows_} + 16 * cells_.size();
  out.put_u64(body);
  out.put_u32(rows_);
  out.put_u32(cols_);
  for (std::uint64_t s : *seeds_) out.put_u64(s);
  for (const SketchCell& c : cells_) {
    out.put_u64(c.heavy_hitter);
    out.put_u64(c.count);
  }
}

Bytes TopkapiSketch::serialize() const {
  Bytes out;
  ByteWriter w(out);
  serialize(w);
  return out;
}

TopkapiSketch TopkapiSketch::deserialize(ByteReader& in, const RowSeeds& shared_seeds) {
  const std::uint64_t body = in.get_u64();
  if (body > in.remaining()) throw FormatError("sketch length prefix exceeds available bytes");
  const std::size_t start = in.position();
  const std::uint32_t rows = in.get_u32();
  const std::uint32_t cols = in.get_u32();
  if (rows == 0 || cols == 0) throw FormatError("sketch header has zero rows or columns");
  const std::uint64_t expected = 8 + 8 * std::uint64_t{rows} + 16 * std::uint64_t{rows} * cols;
  if (expected != body) throw FormatError("sketch length prefix does not match its W x B header");

  std::vector<std::uint64_t> seeds(rows);
  for (auto& s : seeds) s = in.get_u64();
  RowSeeds row_seeds = (shared_seeds && *shared_seeds == seeds)
                           ? shared_seeds
                           : std::make_shared<const std::vector<std::uint64_t>>(std::move(seeds));
  TopkapiSketch sketch(rows, cols, std::move(row_seeds));
  for (SketchCell& c : sketch.cells_) {
    c.heavy_hitter = in.get_u64();
    c.count = in.get_u64();
  }
  if (in.position() - start != body) throw FormatError("sketch body length mismatch");
  return sketch;
}

bool operator==(const TopkapiSketch& a, const TopkapiSketch& b) { return a.same_shape(b) && a.cells_ == b.cells_; }

FrequencyMap exact_counter(std::span<const VectorId> stream) {
  FrequencyMap counts;
  for (VectorId id : stream) ++counts[id];
  return counts;
}

void merge_frequencies(FrequencyMap& into, const FrequencyMap& other) {
  for (const auto& [id, count] : other) into[id] += count;
}

void serialize_frequencies(const FrequencyMap& map, ByteWriter& out) {
  out.put_u64(map.size());
  for (const auto& [id, count] : map) {
    out.put_u64(id);
    out.put_u64(count);
  }
}

FrequencyMap deserialize_frequencies(ByteReader& in) {
  const std::uint64_t n = in.get_u64();
  if (n > in.remaining() / 16) throw FormatError("frequency map count exceeds available bytes");
  FrequencyMap out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const VectorId id = in.get_u64();
    out[id] = in.get_u64();
  }
  return out;
}

}  // namespace slash
