#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "slash/core.hpp"
#include "slash/query.hpp"

namespace slash {

/// Uniformly random `size`-subset of [0, dim).
SparseVector random_set(std::mt19937_64& rng, std::uint32_t size, std::uint64_t dim);

/// Copy of `base` with `edits` indices removed and as many fresh ones added.
/// Jaccard to `base` is (s - edits) / (s + edits).
SparseVector perturb(std::mt19937_64& rng, const SparseVector& base, std::uint32_t edits);

struct PlantedConfig {
  std::uint64_t background = 10000;
  std::uint32_t queries = 200;
  std::uint32_t planted_per_query = 8;
  std::uint32_t set_size = 80;
  std::uint32_t max_edits = 2;  // each planted neighbor differs by 1..max_edits swaps
  std::uint64_t dim = std::uint64_t{1} << 20;
  std::uint64_t seed = 7;
};

/// Random background sets plus, per query, planted near neighbors. Ids are a
/// seeded permutation of 0..N-1, so planted ids are spread among background
/// ids; records are stored in id order.
struct PlantedInstance {
  std::vector<Record> records;
  std::vector<Query> queries;
  std::vector<std::vector<VectorId>> planted;  // per query, ascending
  std::uint64_t dim = 0;

  const SparseVector* find(VectorId id) const {
    return id < records.size() ? &records[id].vector : nullptr;
  }
  VectorLookup lookup() const {
    return [this](VectorId id) { return find(id); };
  }
  QueryBatch batch() const { return QueryBatch(queries); }
};

PlantedInstance make_planted_instance(const PlantedConfig& config);

/// Fraction of planted neighbors found among each query's hits, averaged over queries.
double planted_recall(const PlantedInstance& inst, std::span<const QueryResult> results);

/// Fraction of queries whose hits contain every planted neighbor.
double full_recall_fraction(const PlantedInstance& inst, std::span<const QueryResult> results);

}  // namespace slash
