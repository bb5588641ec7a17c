#include "slash/query.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <istream>
#include <ostream>
#include <sstream>

namespace slash {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool hit_order(const Hit& a, const Hit& b) {
  if (a.count != b.count) return a.count > b.count;
  return a.id < b.id;
}

std::vector<Hit> rank_hits(std::vector<Hit> hits, std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k_extract: k must be >= 1");
  std::erase_if(hits, [](const Hit& h) { return h.count == 0; });
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_order);
  hits.resize(keep);
  return hits;
}

// Ranks agree on the configuration before any hashing happens.
void check_configs(Transport& transport, const NodeIndex& index, QueryMode mode, std::uint64_t batch_id) {
  Bytes mine;
  ByteWriter w(mine);
  w.put_u64(index.config().fingerprint());
  w.put_u8(index.keeps_exact() ? 1 : 0);
  const auto all = allgather(transport, batch_id, mine);
  for (int r = 0; r < transport.world_size(); ++r) {
    ByteReader rd(all[r]);
    const std::uint64_t fp = rd.get_u64();
    const bool exact = rd.get_u8() != 0;
    if (fp != index.config().fingerprint()) {
      throw ConfigError("index configuration of rank " + std::to_string(r) + " differs from rank " +
                        std::to_string(transport.rank()));
    }
    if (mode == QueryMode::kExact && !exact) {
      throw ConfigError("rank " + std::to_string(r) + " has no exact buckets; rebuild with exact mode enabled");
    }
  }
}

}  // namespace

std::string_view to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::kSketchTree:
      return "sketch_tree";
    case QueryMode::kSketchLinear:
      return "sketch_linear";
    case QueryMode::kExact:
      return "exact";
  }
  return "unknown";
}

QueryMode parse_query_mode(std::string_view text) {
  if (text == "sketch_tree") return QueryMode::kSketchTree;
  if (text == "sketch_linear") return QueryMode::kSketchLinear;
  if (text == "exact") return QueryMode::kExact;
  throw ConfigError("unknown query mode '" + std::string(text) + "' (expected sketch_tree, sketch_linear or exact)");
}

QueryBatch::QueryBatch(std::vector<Query> queries) : queries_(std::move(queries)) {
  if (queries_.empty()) throw std::invalid_argument("query batch is empty");
  for (const auto& q : queries_) {
    if (q.vector.empty()) throw EmptyVector("query " + std::to_string(q.id) + " has no active indices");
  }
}

std::optional<std::vector<QueryResult>> query_batch(Transport& transport, const NodeIndex& index,
                                                     const QueryBatch& batch, QueryMode mode,
                                                     const QueryOptions& options) {
  QueryMetrics metrics;
  const int m = transport.world_size();
  const int me = transport.rank();
  const std::size_t nq = batch.size();
  const std::uint32_t L = index.config().num_tables;

  auto t = Clock::now();
  check_configs(transport, index, mode, options.batch_id);
  metrics.gather_ms += ms_since(t);

  // 1. Hash this rank's contiguous slice.
  t = Clock::now();
  const std::size_t lo = nq * static_cast<std::size_t>(me) / static_cast<std::size_t>(m);
  const std::size_t hi = nq * static_cast<std::size_t>(me + 1) / static_cast<std::size_t>(m);
  Bytes slice;
  slice.reserve((hi - lo) * L * 4);
  {
    ByteWriter w(slice);
    std::vector<std::uint32_t> addr(L);
    for (std::size_t q = lo; q < hi; ++q) {
      index.hash_family().addresses(batch[q].vector, addr);
      for (std::uint32_t a : addr) w.put_u32(a);
    }
  }
  metrics.hash_ms = ms_since(t);

  // 2. Every rank gets every query's addresses.
  t = Clock::now();
  const Bytes gathered = concat(allgather(transport, options.batch_id, slice));
  if (gathered.size() != nq * L * 4) throw TransportError("allgather returned a malformed address table");
  std::vector<std::uint32_t> addresses(nq * L);
  {
    ByteReader r(gathered);
    for (auto& a : addresses) a = r.get_u32();
  }
  metrics.gather_ms += ms_since(t);

  auto query_addresses = [&](std::size_t q) {
    return std::span<const std::uint32_t>(addresses).subspan(q * L, L);
  };

  std::optional<std::vector<QueryResult>> out;
  const std::size_t k = index.config().top_k;

  if (mode == QueryMode::kExact) {
    t = Clock::now();
    std::vector<FrequencyMap> maps(nq);
    for (std::size_t q = 0; q < nq; ++q) maps[q] = local_exact_candidates(index, query_addresses(q));
    metrics.local_merge_ms = ms_since(t);

    t = Clock::now();
    tree_reduce_frequencies(transport, options.batch_id, maps, &metrics.reduce);
    metrics.reduce_ms = ms_since(t);

    if (me == 0) {
      t = Clock::now();
      out.emplace();
      out->reserve(nq);
      for (std::size_t q = 0; q < nq; ++q) out->push_back({batch[q].id, top_k_extract(maps[q], k)});
      metrics.extract_ms = ms_since(t);
    }
  } else {
    t = Clock::now();
    std::vector<TopkapiSketch> sketches;
    sketches.reserve(nq);
    for (std::size_t q = 0; q < nq; ++q) sketches.push_back(local_candidates(index, query_addresses(q)));
    metrics.local_merge_ms = ms_since(t);

    t = Clock::now();
    if (mode == QueryMode::kSketchTree) {
      tree_reduce_sketches(transport, options.batch_id, sketches, &metrics.reduce);
    } else {
      linear_reduce_sketches(transport, options.batch_id, sketches, &metrics.reduce);
    }
    metrics.reduce_ms = ms_since(t);

    if (me == 0) {
      t = Clock::now();
      out.emplace();
      out->reserve(nq);
      for (std::size_t q = 0; q < nq; ++q) out->push_back({batch[q].id, top_k_extract(sketches[q], k)});
      metrics.extract_ms = ms_since(t);
      if (options.reduced) *options.reduced = std::move(sketches);
    }
  }

  if (options.metrics) *options.metrics = metrics;
  return out;
}

std::vector<QueryResult> query_simulated(std::span<const NodeIndex> indexes, const QueryBatch& batch, QueryMode mode,
                                         std::vector<QueryMetrics>* metrics, std::vector<TopkapiSketch>* reduced) {
  const int m = static_cast<int>(indexes.size());
  if (m == 0) throw ConfigError("no indexes to query");
  std::vector<QueryResult> results;
  std::vector<QueryMetrics> per_rank(m);
  run_simulated(m, [&](Transport& transport) {
    const int r = transport.rank();
    QueryOptions opts;
    opts.metrics = &per_rank[r];
    if (r == 0) opts.reduced = reduced;
    auto res = query_batch(transport, indexes[r], batch, mode, opts);
    if (res) results = std::move(*res);
  });
  if (metrics) *metrics = std::move(per_rank);
  return results;
}

std::vector<Hit> top_k_extract(const HeavyHitterSet& candidates, std::size_t k) {
  return rank_hits(candidates, k);
}

std::vector<Hit> top_k_extract(const TopkapiSketch& sketch, std::size_t k) { return rank_hits(sketch.query(0), k); }

std::vector<Hit> top_k_extract(const FrequencyMap& counts, std::size_t k) {
  std::vector<Hit> hits;
  hits.reserve(counts.size());
  for (const auto& [id, c] : counts) hits.push_back({id, c});
  return rank_hits(std::move(hits), k);
}

double s_at_k(std::span<const QueryResult> results, const QueryBatch& batch, const VectorLookup& lookup,
              std::size_t k) {
  if (k == 0) throw std::invalid_argument("s_at_k: k must be >= 1");
  if (results.size() != batch.size()) throw std::invalid_argument("s_at_k: one result per query required");
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    if (results[q].query_id != batch[q].id) throw std::invalid_argument("s_at_k: results out of query order");
    const std::size_t n = std::min(k, results[q].hits.size());
    if (n == 0) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const VectorId id = results[q].hits[i].id;
      const SparseVector* x = lookup(id);
      if (!x) throw Error("result references unknown vector id " + std::to_string(id));
      sum += evaluation_cosine(batch[q].vector, *x);
    }
    total += sum / static_cast<double>(n);
  }
  return total / static_cast<double>(results.size());
}

void write_results(std::ostream& out, std::span<const QueryResult> results, const QueryMetrics* metrics) {
  for (const auto& r : results) {
    out << r.query_id;
    for (const auto& h : r.hits) out << '\t' << h.id << ':' << h.count;
    out << '\n';
  }
  if (metrics) {
    out << "# metrics hash_ms=" << metrics->hash_ms << " gather_ms=" << metrics->gather_ms
        << " local_merge_ms=" << metrics->local_merge_ms << " reduce_ms=" << metrics->reduce_ms
        << " extract_ms=" << metrics->extract_ms << '\n';
  }
}

std::vector<QueryResult> read_results(std::istream& in) {
  std::vector<QueryResult> out;
  std::string line;
  std::uint64_t line_no = 0;
  auto parse_u64 = [&](std::string_view s, std::size_t col) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError(line_no, col, "expected an integer");
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    QueryResult r;
    std::size_t pos = 0;
    bool first = true;
    while (pos <= line.size()) {
      std::size_t next = line.find('\t', pos);
      if (next == std::string::npos) next = line.size();
      const std::string_view field = std::string_view(line).substr(pos, next - pos);
      if (first) {
        r.query_id = parse_u64(field, pos + 1);
        first = false;
      } else {
        const std::size_t colon = field.find(':');
        if (colon == std::string_view::npos) throw ParseError(line_no, pos + 1, "expected id:count");
        r.hits.push_back({parse_u64(field.substr(0, colon), pos + 1), parse_u64(field.substr(colon + 1), pos + 1)});
      }
      pos = next + 1;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace slash
