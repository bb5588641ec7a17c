#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "slash/core.hpp"
#include "slash/hashing.hpp"
#include "slash/sketch.hpp"

namespace slash {

struct IndexOptions {
  /// Worker threads used by preprocess.
  unsigned threads = 1;
  /// Also keep plain id buckets so the exact aggregation mode can run.
  bool keep_exact = true;
};

/// One node's L hash tables. Every occupied address holds a Topkapi sketch
/// (and, with keep_exact, the plain list of ids that landed there). Slots are
/// created on first insert.
///
/// Inserts may run concurrently: a table-level shared lock guards slot
/// creation and each slot carries its own mutex around the sketch update.
class NodeIndex {
 public:
  NodeIndex(const LshConfig& config, std::uint32_t node_id, IndexOptions options = {});

  NodeIndex(NodeIndex&&) noexcept = default;
  NodeIndex& operator=(NodeIndex&&) noexcept = default;

  const LshConfig& config() const noexcept { return config_; }
  std::uint32_t node_id() const noexcept { return node_id_; }
  std::uint64_t vector_count() const noexcept { return vector_count_; }
  bool keeps_exact() const noexcept { return options_.keep_exact; }
  const HashFamily& hash_family() const noexcept { return *family_; }
  const RowSeeds& row_seeds() const noexcept { return row_seeds_; }

  /// Hash and insert one vector into all L tables. Throws EmptyVector.
  void insert(VectorId id, const SparseVector& v);

  /// Insert with precomputed addresses (one per table). Thread-safe.
  void insert_addresses(VectorId id, std::span<const std::uint32_t> addresses);

  /// nullptr when the slot was never written.
  const TopkapiSketch* sketch_at(std::uint32_t table, std::uint32_t address) const;
  std::span<const VectorId> bucket_at(std::uint32_t table, std::uint32_t address) const;

  std::size_t materialized_slots() const;
  std::size_t materialized_slots(std::uint32_t table) const;

  /// Addresses of occupied slots in `table`, ascending.
  std::vector<std::uint32_t> occupied_addresses(std::uint32_t table) const;

  /// Sketch storage in bytes (exact buckets excluded).
  std::size_t sketch_footprint_bytes() const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static NodeIndex load(std::istream& in);
  static NodeIndex load(const std::filesystem::path& path);

 private:
  struct Slot {
    explicit Slot(TopkapiSketch s) : sketch(std::move(s)) {}
    std::mutex lock;
    TopkapiSketch sketch;
    std::vector<VectorId> ids;
  };

  struct Table {
    mutable std::shared_mutex lock;
    std::unordered_map<std::uint32_t, std::unique_ptr<Slot>> slots;
  };

  Slot& slot_for(std::uint32_t table, std::uint32_t address);
  const Slot* find_slot(std::uint32_t table, std::uint32_t address) const;

  LshConfig config_;
  std::uint32_t node_id_;
  IndexOptions options_;
  std::unique_ptr<HashFamily> family_;
  RowSeeds row_seeds_;
  std::vector<std::unique_ptr<Table>> tables_;
  std::uint64_t vector_count_ = 0;
};

struct RecordError {
  VectorId id = 0;
  std::string message;
};

struct BuildReport {
  NodeIndex index;
  std::vector<RecordError> errors;
  double seconds = 0.0;
};

/// Index a partition: every valid vector goes into the sketch at its address
/// in each of the L tables. Invalid (empty) vectors are reported and skipped.
BuildReport preprocess(const DatasetPartition& partition, const LshConfig& config, IndexOptions options = {});

/// Merge, in table order, the sketches addressed by one query. Empty slots
/// contribute the identity sketch.
TopkapiSketch local_candidates(const NodeIndex& index, std::span<const std::uint32_t> addresses);

/// Exact counts of ids across the addressed buckets. Requires keep_exact.
FrequencyMap local_exact_candidates(const NodeIndex& index, std::span<const std::uint32_t> addresses);

}  // namespace slash
