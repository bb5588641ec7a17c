#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slash/cluster.hpp"
#include "slash/core.hpp"
#include "slash/index.hpp"
#include "slash/sketch.hpp"

namespace slash {

enum class QueryMode {
  kSketchTree,
  kSketchLinear,
  kExact,
};

std::string_view to_string(QueryMode mode);
/// Accepts "sketch_tree", "sketch_linear", "exact". Throws ConfigError.
QueryMode parse_query_mode(std::string_view text);

struct Query {
  VectorId id = 0;
  SparseVector vector;
};

/// Non-empty list of queries with non-empty vectors.
class QueryBatch {
 public:
  explicit QueryBatch(std::vector<Query> queries);

  std::span<const Query> queries() const noexcept { return queries_; }
  std::size_t size() const noexcept { return queries_.size(); }
  const Query& operator[](std::size_t i) const { return queries_[i]; }

 private:
  std::vector<Query> queries_;
};

using Hit = HeavyHitter;

struct QueryResult {
  VectorId query_id = 0;
  std::vector<Hit> hits;  // descending count, ties by ascending id

  friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

/// Wall time per phase on this rank, in milliseconds.
struct QueryMetrics {
  double hash_ms = 0;
  double gather_ms = 0;
  double local_merge_ms = 0;
  double reduce_ms = 0;
  double extract_ms = 0;
  ReduceStats reduce;

  double total_ms() const { return hash_ms + gather_ms + local_merge_ms + reduce_ms + extract_ms; }
};

struct QueryOptions {
  std::uint64_t batch_id = 0;
  QueryMetrics* metrics = nullptr;
  /// Rank 0 only, sketch modes: receives the fully reduced per-query sketches.
  std::vector<TopkapiSketch>* reduced = nullptr;
};

/// Run one batch through every rank. All ranks call this with the same batch
/// and mode; rank 0 gets the results, other ranks get nullopt.
///
/// Each rank hashes a contiguous slice of the batch, the addresses are
/// allgathered, every rank merges its local candidates per query, and the
/// per-query state is reduced to rank 0. Throws ConfigError on every rank if
/// the index configurations differ.
std::optional<std::vector<QueryResult>> query_batch(Transport& transport, const NodeIndex& index,
                                                     const QueryBatch& batch, QueryMode mode,
                                                     const QueryOptions& options = {});

/// Run query_batch over `indexes` (one per rank) on the simulated backend.
std::vector<QueryResult> query_simulated(std::span<const NodeIndex> indexes, const QueryBatch& batch, QueryMode mode,
                                         std::vector<QueryMetrics>* metrics = nullptr,
                                         std::vector<TopkapiSketch>* reduced = nullptr);

/// Top `k` by count, ties by ascending id; zero counts dropped. Throws
/// std::invalid_argument if k == 0.
std::vector<Hit> top_k_extract(const HeavyHitterSet& candidates, std::size_t k);
std::vector<Hit> top_k_extract(const TopkapiSketch& sketch, std::size_t k);
std::vector<Hit> top_k_extract(const FrequencyMap& counts, std::size_t k);

/// Mean over queries of the mean cosine between the query and its first k
/// hits. A query with no hits contributes 0. Throws Error on an id the
/// lookup cannot resolve.
double s_at_k(std::span<const QueryResult> results, const QueryBatch& batch, const VectorLookup& lookup,
              std::size_t k);

/// One line per query: query_id, then "id:count" fields, tab separated. With
/// metrics, a trailing "# metrics" line carries the phase timings.
void write_results(std::ostream& out, std::span<const QueryResult> results, const QueryMetrics* metrics = nullptr);
std::vector<QueryResult> read_results(std::istream& in);

}  // namespace slash
