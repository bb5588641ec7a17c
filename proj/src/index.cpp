#include "slash/index.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include "slash/bytes.hpp"

namespace slash {

namespace {

constexpr char kIndexMagic[8] = {'S', 'L', 'A', 'S', 'H', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::uint32_t kFlagExact = 1;

void write_bytes(std::ostream& out, const Bytes& bytes) {
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("index write failed");
}

Bytes read_exact(std::istream& in, std::size_t n) {
  Bytes buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("index file truncated");
  return buf;
}

std::uint64_t read_u64(std::istream& in) {
  const Bytes b = read_exact(in, 8);
  ByteReader r(b);
  return r.get_u64();
}

}  // namespace

NodeIndex::NodeIndex(const LshConfig& config, std::uint32_t node_id, IndexOptions options)
    : config_(config), node_id_(node_id), options_(options) {
  config_.validate();
  family_ = std::make_unique<HashFamily>(config_);
  row_seeds_ = sketch_row_seeds(config_.master_seed, config_.sketch_rows);
  tables_.reserve(config_.num_tables);
  for (std::uint32_t i = 0; i < config_.num_tables; ++i) tables_.push_back(std::make_unique<Table>());
}

NodeIndex::Slot& NodeIndex::slot_for(std::uint32_t table, std::uint32_t address) {
  Table& t = *tables_[table];
  {
    std::shared_lock read(t.lock);
    auto it = t.slots.find(address);
    if (it != t.slots.end()) return *it->second;
  }
  std::unique_lock write(t.lock);
  auto [it, inserted] = t.slots.try_emplace(address);
  if (inserted) {
    it->second = std::make_unique<Slot>(TopkapiSketch(config_.sketch_rows, config_.sketch_cols, row_seeds_));
  }
  return *it->second;
}

const NodeIndex::Slot* NodeIndex::find_slot(std::uint32_t table, std::uint32_t address) const {
  if (table >= tables_.size()) throw std::out_of_range("table index out of range");
  const Table& t = *tables_[table];
  std::shared_lock read(t.lock);
  auto it = t.slots.find(address);
  return it == t.slots.end() ? nullptr : it->second.get();
}

void NodeIndex::insert(VectorId id, const SparseVector& v) {
  const auto addresses = family_->addresses(v);
  insert_addresses(id, addresses);
}

void NodeIndex::insert_addresses(VectorId id, std::span<const std::uint32_t> addresses) {
  if (addresses.size() != config_.num_tables) throw std::invalid_argument("need one address per table");
  for (std::uint32_t i = 0; i < config_.num_tables; ++i) {
    if (addresses[i] >= config_.range) throw std::out_of_range("address outside table range");
    Slot& slot = slot_for(i, addresses[i]);
    std::lock_guard guard(slot.lock);
    slot.sketch.insert(id);
    if (options_.keep_exact) slot.ids.push_back(id);
  }
  std::atomic_ref<std::uint64_t>(vector_count_).fetch_add(1, std::memory_order_relaxed);
}

const TopkapiSketch* NodeIndex::sketch_at(std::uint32_t table, std::uint32_t address) const {
  const Slot* s = find_slot(table, address);
  return s ? &s->sketch : nullptr;
}

std::span<const VectorId> NodeIndex::bucket_at(std::uint32_t table, std::uint32_t address) const {
  const Slot* s = find_slot(table, address);
  return s ? std::span<const VectorId>(s->ids) : std::span<const VectorId>{};
}

std::size_t NodeIndex::materialized_slots() const {
  std::size_t n = 0;
  for (std::uint32_t i = 0; i < tables_.size(); ++i) n += materialized_slots(i);
  return n;
}

std::size_t NodeIndex::materialized_slots(std::uint32_t table) const {
  std::shared_lock read(tables_[table]->lock);
  return tables_[table]->slots.size();
}

std::vector<std::uint32_t> NodeIndex::occupied_addresses(std::uint32_t table) const {
  const Table& t = *tables_[table];
  std::shared_lock read(t.lock);
  std::vector<std::uint32_t> out;
  out.reserve(t.slots.size());
  for (const auto& entry : t.slots) out.push_back(entry.first);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t NodeIndex::sketch_footprint_bytes() const {
  std::size_t total = 0;
  for (const auto& t : tables_) {
    std::shared_lock read(t->lock);
    for (const auto& entry : t->slots) total += entry.second->sketch.footprint_bytes();
  }
  return total;
}

// Layout (little-endian):
//   "SLASHIDX", u32 version, u64 config fingerprint,
//   u32 K, u32 L, u64 range, u32 W, u32 B, u64 master_seed, u32 top_k,
//   u32 node_id, u64 vector_count, u32 flags,
//   per table: u64 occupied slots, then per slot in ascending address order:
//     u32 address, sketch (length-prefixed), [u64 n, n x u64 ids when exact].
void NodeIndex::save(std::ostream& out) const {
  Bytes header;
  ByteWriter w(header);
  w.put_bytes(std::as_bytes(std::span(kIndexMagic)));
  w.put_u32(kIndexVersion);
  w.put_u64(config_.fingerprint());
  w.put_u32(config_.hashes_per_table);
  w.put_u32(config_.num_tables);
  w.put_u64(config_.range);
  w.put_u32(config_.sketch_rows);
  w.put_u32(config_.sketch_cols);
  w.put_u64(config_.master_seed);
  w.put_u32(config_.top_k);
  w.put_u32(node_id_);
  w.put_u64(vector_count_);
  w.put_u32(options_.keep_exact ? kFlagExact : 0);
  write_bytes(out, header);

  Bytes chunk;
  for (std::uint32_t i = 0; i < tables_.size(); ++i) {
    const auto addresses = occupied_addresses(i);
    chunk.clear();
    ByteWriter cw(chunk);
    cw.put_u64(addresses.size());
    for (std::uint32_t address : addresses) {
      const Slot& slot = *find_slot(i, address);
      cw.put_u32(address);
      slot.sketch.serialize(cw);
      if (options_.keep_exact) {
        cw.put_u64(slot.ids.size());
        for (VectorId id : slot.ids) cw.put_u64(id);
      }
      if (chunk.size() > (std::size_t{1} << 22)) {
        write_bytes(out, chunk);
        chunk.clear();
      }
    }
    write_bytes(out, chunk);
  }
}

void NodeIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save(out);
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

NodeIndex NodeIndex::load(std::istream& in) {
  const Bytes header = read_exact(in, 8 + 4 + 8 + 4 + 4 + 8 + 4 + 4 + 8 + 4 + 4 + 8 + 4);
  ByteReader r(header);
  const auto magic = r.get_bytes(8);
  if (!std::equal(magic.begin(), magic.end(), std::as_bytes(std::span(kIndexMagic)).begin())) {
    throw FormatError("not an index file (bad magic)");
  }
  const std::uint32_t version = r.get_u32();
  if (version != kIndexVersion) throw FormatError("unsupported index version " + std::to_string(version));
  const std::uint64_t fingerprint = r.get_u64();
  LshConfig config;
  config.hashes_per_table = r.get_u32();
  config.num_tables = r.get_u32();
  config.range = r.get_u64();
  config.sketch_rows = r.get_u32();
  config.sketch_cols = r.get_u32();
  config.master_seed = r.get_u64();
  config.top_k = r.get_u32();
  if (config.fingerprint() != fingerprint) throw FormatError("index config fingerprint mismatch");
  const std::uint32_t node_id = r.get_u32();
  const std::uint64_t vector_count = r.get_u64();
  const std::uint32_t flags = r.get_u32();

  IndexOptions options;
  options.keep_exact = (flags & kFlagExact) != 0;
  NodeIndex index(config, node_id, options);
  index.vector_count_ = vector_count;

  const std::size_t sketch_bytes = 8 + 8 + 8 * std::size_t{config.sketch_rows} +
                                   16 * std::size_t{config.sketch_rows} * config.sketch_cols;
  for (std::uint32_t i = 0; i < config.num_tables; ++i) {
    const std::uint64_t occupied = read_u64(in);
    if (occupied > config.range) throw FormatError("occupied slot count exceeds table range");
    Table& table = *index.tables_[i];
    table.slots.reserve(occupied);
    for (std::uint64_t s = 0; s < occupied; ++s) {
      const Bytes rec = read_exact(in, 4 + sketch_bytes);
      ByteReader rr(rec);
      const std::uint32_t address = rr.get_u32();
      if (address >= config.range) throw FormatError("slot address outside table range");
      TopkapiSketch sketch = TopkapiSketch::deserialize(rr, index.row_seeds_);
      if (sketch.row_seeds() != index.row_seeds_) throw FormatError("sketch row seeds differ from the index seeds");
      auto slot = std::make_unique<Slot>(std::move(sketch));
      if (options.keep_exact) {
        const std::uint64_t n = read_u64(in);
        const Bytes ids = read_exact(in, n * 8);
        ByteReader ir(ids);
        slot->ids.resize(n);
        for (auto& id : slot->ids) id = ir.get_u64();
      }
      if (!table.slots.emplace(address, std::move(slot)).second) throw FormatError("duplicate slot address");
    }
  }
  return index;
}

NodeIndex NodeIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open index file " + path.string());
  return load(in);
}

BuildReport preprocess(const DatasetPartition& partition, const LshConfig& config, IndexOptions options) {
  const auto start = std::chrono::steady_clock::now();
  BuildReport report{NodeIndex(config, partition.node_id, options), {}, 0.0};
  NodeIndex& index = report.index;
  const auto& records = partition.records;
  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, records.size()));

  std::vector<std::vector<RecordError>> errors(workers);
  auto work = [&](unsigned w) {
    std::vector<std::uint32_t> addresses(config.num_tables);
    // Strided split keeps each worker's share balanced.
    for (std::size_t i = w; i < records.size(); i += workers) {
      const Record& rec = records[i];
      if (rec.vector.empty()) {
        errors[w].push_back({rec.id, "empty vector"});
        continue;
      }
      index.hash_family().addresses(rec.vector, addresses);
      index.insert_addresses(rec.id, addresses);
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors) report.errors.insert(report.errors.end(), e.begin(), e.end());
  std::sort(report.errors.begin(), report.errors.end(),
            [](const RecordError& a, const RecordError& b) { return a.id < b.id; });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TopkapiSketch local_candidates(const NodeIndex& index, std::span<const std::uint32_t> addresses) {
  const LshConfig& config = index.config();
  if (addresses.size() != config.num_tables) throw std::invalid_argument("need one address per table");
  TopkapiSketch out(config.sketch_rows, config.sketch_cols, index.row_seeds());
  for (std::uint32_t i = 0; i < config.num_tables; ++i) {
    if (const TopkapiSketch* s = index.sketch_at(i, addresses[i])) out.merge(*s);
  }
  return out;
}

FrequencyMap local_exact_candidates(const NodeIndex& index, std::span<const std::uint32_t> addresses) {
  if (!index.keeps_exact()) throw ConfigError("index was built without exact buckets");
  if (addresses.size() != index.config().num_tables) throw std::invalid_argument("need one address per table");
  std::vector<VectorId> stream;
  for (std::uint32_t i = 0; i < addresses.size(); ++i) {
    const auto bucket = index.bucket_at(i, addresses[i]);
    stream.insert(stream.end(), bucket.begin(), bucket.end());
  }
  return exact_counter(stream);
}

}  // namespace slash
