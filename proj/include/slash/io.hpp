#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slash/cluster.hpp"
#include "slash/core.hpp"
#include "slash/index.hpp"

namespace slash {

// ---------------------------------------------------------------------------
// libsvm-style records: "[label] idx:val idx:val ...", 1-based indices.

struct ParsedRecord {
  std::optional<std::string> label;
  SparseVector vector;
};

/// Values are presence flags and are ignored. Indices must be strictly
/// increasing and within [1, dim]. Throws ParseError (with `line_no` and the
/// 1-based column) or EmptyVector when no features are present.
ParsedRecord parse_record(std::string_view line, std::uint64_t dim, std::uint64_t line_no = 1);

/// Inverse of parse_record: "label idx:1 ...", indices back to 1-based.
std::string format_record(const SparseVector& v, std::string_view label = "0");

// ---------------------------------------------------------------------------
// Buffered sequential reading.

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  /// Fill up to `buffer.size()` bytes; 0 means end of input.
  virtual std::size_t read(std::span<char> buffer) = 0;
};

/// Unbuffered POSIX file: every read() is one system call.
class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path);
  ~FileSource() override;
  FileSource(const FileSource&) = delete;
  FileSource& operator=(const FileSource&) = delete;

  std::size_t read(std::span<char> buffer) override;

 private:
  int fd_ = -1;
  std::filesystem::path path_;
};

inline constexpr std::size_t kReadBlockBytes = std::size_t{1} << 20;

/// Splits a source into lines while pulling it in fixed-size blocks. A
/// trailing '\r' is stripped.
class LineReader {
 public:
  explicit LineReader(ByteSource& source, std::size_t block_bytes = kReadBlockBytes);

  bool next(std::string& line);
  std::uint64_t line_number() const noexcept { return line_no_; }

 private:
  bool refill();

  ByteSource& source_;
  std::vector<char> block_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  bool eof_ = false;
  std::uint64_t line_no_ = 0;
};

struct LoadResult {
  DatasetPartition partition;
  std::vector<RecordError> errors;
};

/// Read a partition file. Line j (0-based) gets id offset + j * stride.
/// Malformed lines are reported with their id and line number and skipped.
LoadResult load_partition(const std::filesystem::path& path, std::uint64_t dim, std::uint32_t node_id = 0,
                          std::uint64_t offset = 0, std::uint64_t stride = 1);
LoadResult load_partition(ByteSource& source, std::uint64_t dim, std::uint32_t node_id = 0, std::uint64_t offset = 0,
                          std::uint64_t stride = 1);

// ---------------------------------------------------------------------------
// Partitioning.

struct PartitionInfo {
  std::string file;  // relative to the manifest's directory
  std::uint64_t records = 0;
  std::uint64_t offset = 0;
  std::uint64_t stride = 1;

  friend bool operator==(const PartitionInfo&, const PartitionInfo&) = default;
};

struct DatasetManifest {
  std::vector<std::string> sources;
  std::uint64_t dim = 0;
  std::uint64_t records = 0;
  std::uint64_t invalid_records = 0;
  std::uint64_t checksum = 0;  // FNV-1a 64 over the input lines
  std::vector<PartitionInfo> partitions;

  /// key=value header, then a "[partitions]" tab-separated table.
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Route input line i to partition i mod m, copying lines verbatim, and write
/// the manifest into `out_dir`. `dim` of 0 means infer it as the largest
/// index seen. On failure every file written so far is removed.
DatasetManifest partition_dataset(const std::filesystem::path& input, std::uint32_t m,
                                  const std::filesystem::path& out_dir, std::uint64_t dim = 0);

/// In-memory counterpart of partition_dataset: record j goes to node j mod m.
std::vector<DatasetPartition> split_round_robin(std::span<const Record> records, std::uint32_t m);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

// ---------------------------------------------------------------------------
// Flat key=value run configuration.

struct RunConfig {
  LshConfig lsh;
  std::string mode = "sketch_tree";
  std::map<std::uint32_t, Endpoint> nodes;  // node.N=host:port
  std::uint64_t dim = 0;
  double C1 = 2.0;
  double C2 = 1.5;

  /// Ranks 0..m-1 in order. Throws ConfigError on gaps.
  std::vector<Endpoint> members() const;
};

/// Parse key=value lines; '#' starts a comment. Throws ParseError on bad lines.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Apply one setting. Throws ConfigError naming the key on bad values or
/// unknown keys.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

Endpoint parse_endpoint(std::string_view text);

}  // namespace slash
