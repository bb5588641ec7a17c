#include "slash/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "slash/query.hpp"

namespace slash {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_u64_any_base(std::string_view s, std::uint64_t& out) {
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 16);
    return ec == std::errc{} && p == s.data() + s.size();
  }
  return parse_number(s, out);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------

ParsedRecord parse_record(std::string_view line, std::uint64_t dim, std::uint64_t line_no) {
  if (dim == 0 || dim > kMaxDim) throw std::invalid_argument("dimensionality must be in [1, 2^32]");
  ParsedRecord rec;
  std::vector<std::uint32_t> indices;
  std::size_t pos = 0;
  bool first = true;
  while (true) {
    while (pos < line.size() && is_space(line[pos])) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !is_space(line[end])) ++end;
    const std::string_view tok = line.substr(pos, end - pos);
    const std::size_t column = pos + 1;
    const std::size_t colon = tok.find(':');
    if (colon == std::string_view::npos) {
      if (!first) throw ParseError(line_no, column, "expected index:value, got '" + std::string(tok) + "'");
      rec.label = std::string(tok);
    } else {
      std::uint64_t idx = 0;
      if (!parse_number(tok.substr(0, colon), idx)) {
        throw ParseError(line_no, column, "malformed index in '" + std::string(tok) + "'");
      }
      double value = 0;
      if (!parse_number(tok.substr(colon + 1), value)) {
        throw ParseError(line_no, column, "malformed value in '" + std::string(tok) + "'");
      }
      if (idx == 0) throw ParseError(line_no, column, "indices are 1-based; got 0");
      if (idx > dim) {
        throw ParseError(line_no, column,
                         "index " + std::to_string(idx) + " exceeds dimensionality " + std::to_string(dim));
      }
      const auto zero_based = static_cast<std::uint32_t>(idx - 1);
      if (!indices.empty() && zero_based <= indices.back()) {
        throw ParseError(line_no, column, "indices must be strictly increasing; " + std::to_string(idx) +
                                              " follows " + std::to_string(indices.back() + 1));
      }
      indices.push_back(zero_based);
    }
    first = false;
    pos = end;
  }
  if (indices.empty()) throw EmptyVector("line " + std::to_string(line_no) + ": record has no features");
  rec.vector = SparseVector(std::move(indices), dim);
  return rec;
}

std::string format_record(const SparseVector& v, std::string_view label) {
  std::string out(label);
  for (std::uint32_t i : v.indices()) {
    out += ' ';
    out += std::to_string(std::uint64_t{i} + 1);
    out += ":1";
  }
  return out;
}

// ---------------------------------------------------------------------------

FileSource::FileSource(const std::filesystem::path& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
}

FileSource::~FileSource() {
  if (fd_ >= 0) ::close(fd_);
}

std::size_t FileSource::read(std::span<char> buffer) {
  while (true) {
    const ssize_t n = ::read(fd_, buffer.data(), buffer.size());
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno != EINTR) throw IoError("error reading " + path_.string() + ": " + std::strerror(errno));
  }
}

LineReader::LineReader(ByteSource& source, std::size_t block_bytes) : source_(source), block_(block_bytes) {
  if (block_bytes == 0) throw std::invalid_argument("block size must be >= 1");
}

bool LineReader::refill() {
  if (eof_) return false;
  pos_ = 0;
  end_ = source_.read(block_);
  if (end_ == 0) eof_ = true;
  return end_ > 0;
}

bool LineReader::next(std::string& line) {
  line.clear();
  bool partial = false;
  while (true) {
    if (pos_ == end_ && !refill()) {
      if (!partial) return false;
      break;
    }
    const char* start = block_.data() + pos_;
    const void* nl = std::memchr(start, '\n', end_ - pos_);
    if (nl) {
      const auto len = static_cast<std::size_t>(static_cast<const char*>(nl) - start);
      line.append(start, len);
      pos_ += len + 1;
      break;
    }
    line.append(start, end_ - pos_);
    pos_ = end_;
    partial = true;
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  ++line_no_;
  return true;
}

LoadResult load_partition(ByteSource& source, std::uint64_t dim, std::uint32_t node_id, std::uint64_t offset,
                          std::uint64_t stride) {
  if (stride == 0) throw std::invalid_argument("stride must be >= 1");
  LoadResult res;
  res.partition.node_id = node_id;
  LineReader reader(source);
  std::string line;
  std::uint64_t j = 0;
  while (reader.next(line)) {
    const VectorId id = offset + j * stride;
    ++j;
    try {
      res.partition.records.push_back({id, parse_record(line, dim, reader.line_number()).vector});
    } catch (const ParseError& e) {
      res.errors.push_back({id, e.what()});
    } catch (const EmptyVector& e) {
      res.errors.push_back({id, e.what()});
    }
  }
  return res;
}

LoadResult load_partition(const std::filesystem::path& path, std::uint64_t dim, std::uint32_t node_id,
                          std::uint64_t offset, std::uint64_t stride) {
  FileSource source(path);
  return load_partition(source, dim, node_id, offset, stride);
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# dataset manifest\n";
  out << "version=1\n";
  for (std::size_t i = 0; i < sources.size(); ++i) out << "source." << i << '=' << sources[i] << '\n';
  out << "dim=" << dim << '\n';
  out << "records=" << records << '\n';
  out << "invalid_records=" << invalid_records << '\n';
  out << "partitions=" << partitions.size() << '\n';
  out << "checksum=0x" << std::hex << std::setw(16) << std::setfill('0') << checksum << std::dec << '\n';
  out << "[partitions]\n";
  out << "index\tfile\trecords\toffset\tstride\n";
  for (std::size_t r = 0; r < partitions.size(); ++r) {
    const auto& p = partitions[r];
    out << r << '\t' << p.file << '\t' << p.records << '\t' << p.offset << '\t' << p.stride << '\n';
  }
  out.flush();
  if (!out) throw IoError("error writing " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  const std::size_t table = text.find("[partitions]\n");
  if (table == std::string::npos) throw FormatError(path.string() + ": missing [partitions] table");
  const auto kv = parse_key_values(std::string_view(text).substr(0, table));

  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing key '" + key + "'");
    std::uint64_t v = 0;
    if (!parse_u64_any_base(it->second, v)) throw FormatError(path.string() + ": bad value for '" + key + "'");
    return v;
  };

  DatasetManifest m;
  if (get("version") != 1) throw FormatError(path.string() + ": unsupported manifest version");
  for (std::size_t i = 0;; ++i) {
    const auto it = kv.find("source." + std::to_string(i));
    if (it == kv.end()) break;
    m.sources.push_back(it->second);
  }
  m.dim = get("dim");
  m.records = get("records");
  m.invalid_records = get("invalid_records");
  m.checksum = get("checksum");
  const std::uint64_t count = get("partitions");

  std::istringstream rows(text.substr(table + std::strlen("[partitions]\n")));
  std::string line;
  std::getline(rows, line);  // column names
  std::uint64_t total = 0;
  while (std::getline(rows, line)) {
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    std::uint64_t index = 0;
    PartitionInfo p;
    if (!(fields >> index >> p.file >> p.records >> p.offset >> p.stride)) {
      throw FormatError(path.string() + ": malformed partition row '" + line + "'");
    }
    if (index != m.partitions.size()) throw FormatError(path.string() + ": partition rows out of order");
    total += p.records;
    m.partitions.push_back(std::move(p));
  }
  if (m.partitions.size() != count) throw FormatError(path.string() + ": partition count mismatch");
  if (total != m.records) throw FormatError(path.string() + ": partition record counts do not sum to total");
  return m;
}

DatasetManifest partition_dataset(const std::filesystem::path& input, std::uint32_t m,
                                  const std::filesystem::path& out_dir, std::uint64_t dim) {
  if (m == 0) throw ConfigError("partition count must be >= 1");
  if (dim > kMaxDim) throw ConfigError("dimensionality must be <= 2^32");

  FileSource source(input);
  std::filesystem::create_directories(out_dir);

  std::vector<std::filesystem::path> written;
  try {
    DatasetManifest manifest;
    manifest.sources.push_back(input.string());
    std::vector<std::ofstream> outs(m);
    for (std::uint32_t r = 0; r < m; ++r) {
      PartitionInfo info;
      info.file = "part-" + std::to_string(r) + ".svm";
      info.offset = r;
      info.stride = m;
      manifest.partitions.push_back(info);
      const auto path = out_dir / info.file;
      outs[r].open(path, std::ios::trunc | std::ios::binary);
      if (!outs[r]) throw IoError("cannot create " + path.string());
      written.push_back(path);
    }

    LineReader reader(source);
    std::string line;
    std::uint64_t i = 0;
    std::uint64_t max_index = 0;
    std::uint64_t checksum = fnv1a64("");
    while (reader.next(line)) {
      const std::uint32_t r = static_cast<std::uint32_t>(i % m);
      outs[r] << line << '\n';
      checksum = fnv1a64(line, checksum);
      checksum = fnv1a64("\n", checksum);
      ++manifest.partitions[r].records;
      try {
        const auto rec = parse_record(line, dim == 0 ? kMaxDim : dim, reader.line_number());
        max_index = std::max<std::uint64_t>(max_index, std::uint64_t{rec.vector.indices().back()} + 1);
      } catch (const ParseError&) {
        ++manifest.invalid_records;
      } catch (const EmptyVector&) {
        ++manifest.invalid_records;
      }
      ++i;
    }
    for (std::uint32_t r = 0; r < m; ++r) {
      outs[r].close();
      if (!outs[r]) throw IoError("error writing " + written[r].string());
    }
    manifest.records = i;
    manifest.checksum = checksum;
    manifest.dim = dim == 0 ? max_index : dim;
    const auto manifest_path = out_dir / kManifestName;
    written.push_back(manifest_path);
    manifest.save(manifest_path);
    return manifest;
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) std::filesystem::remove(p, ec);
    throw;
  }
}

std::vector<DatasetPartition> split_round_robin(std::span<const Record> records, std::uint32_t m) {
  if (m == 0) throw ConfigError("partition count must be >= 1");
  std::vector<DatasetPartition> parts(m);
  for (std::uint32_t r = 0; r < m; ++r) {
    parts[r].node_id = r;
    parts[r].records.reserve(records.size() / m + 1);
  }
  for (std::size_t j = 0; j < records.size(); ++j) parts[j % m].records.push_back(records[j]);
  return parts;
}

// ---------------------------------------------------------------------------

std::vector<Endpoint> RunConfig::members() const {
  std::vector<Endpoint> out;
  for (const auto& [rank, ep] : nodes) {
    if (rank != out.size()) throw ConfigError("cluster membership has no entry for node." + std::to_string(out.size()));
    out.push_back(ep);
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::uint64_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, 1, "expected key=value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(line_no, 1, "empty key");
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ParseError(line_no, 1, "duplicate key '" + key + "'");
    }
  }
  return out;
}

Endpoint parse_endpoint(std::string_view text) {
  const std::size_t colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ConfigError("expected host:port, got '" + std::string(text) + "'");
  }
  std::uint32_t port = 0;
  if (!parse_number(text.substr(colon + 1), port) || port == 0 || port > 65535) {
    throw ConfigError("bad port in '" + std::string(text) + "'");
  }
  return Endpoint{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const std::string k(key);
  auto bad = [&] { return ConfigError("invalid value '" + std::string(value) + "' for " + k); };
  auto u32 = [&](std::uint32_t& out) {
    std::uint64_t v = 0;
    if (!parse_u64_any_base(value, v) || v > 0xffffffffULL) throw bad();
    out = static_cast<std::uint32_t>(v);
  };
  auto u64 = [&](std::uint64_t& out) {
    if (!parse_u64_any_base(value, out)) throw bad();
  };
  auto real = [&](double& out) {
    if (!parse_number(value, out)) throw bad();
  };

  if (k == "K") {
    u32(config.lsh.hashes_per_table);
  } else if (k == "L") {
    u32(config.lsh.num_tables);
  } else if (k == "range") {
    u64(config.lsh.range);
  } else if (k == "sketch_w") {
    u32(config.lsh.sketch_rows);
  } else if (k == "sketch_b") {
    u32(config.lsh.sketch_cols);
  } else if (k == "master_seed") {
    u64(config.lsh.master_seed);
  } else if (k == "top_k") {
    u32(config.lsh.top_k);
  } else if (k == "mode") {
    parse_query_mode(value);
    config.mode = std::string(value);
  } else if (k == "dim") {
    u64(config.dim);
  } else if (k == "C1") {
    real(config.C1);
  } else if (k == "C2") {
    real(config.C2);
  } else if (k.rfind("node.", 0) == 0) {
    std::uint32_t rank = 0;
    if (!parse_number(std::string_view(k).substr(5), rank)) throw ConfigError("bad node key '" + k + "'");
    config.nodes[rank] = parse_endpoint(value);
  } else {
    throw ConfigError("unknown configuration key '" + k + "'");
  }
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  const std::string text = read_text_file(path);
  std::map<std::string, std::string> kv;
  try {
    kv = parse_key_values(text);
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& [key, value] : kv) {
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return base;
}

}  // namespace slash
