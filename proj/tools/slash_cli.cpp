#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "slash/cluster.hpp"
#include "slash/index.hpp"
#include "slash/io.hpp"
#include "slash/params.hpp"
#include "slash/query.hpp"
#include "slash/synthetic.hpp"

namespace fs = std::filesystem;
using namespace slash;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kTransport = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Flags that mirror config keys. Only flags given on the command line override
// the config file.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options.emplace_back(key, app->add_option(flag, values[key], help));
  }

  void add_lsh(CLI::App* app) {
    app->add_option("--config", config_path, "key=value configuration file");
    add(app, "--K", "K", "hashes per table");
    add(app, "--L", "L", "number of tables");
    add(app, "--range", "range", "addresses per table (power of two)");
    add(app, "--sketch-w", "sketch_w", "sketch rows");
    add(app, "--sketch-b", "sketch_b", "sketch columns");
    add(app, "--seed", "master_seed", "master seed");
    add(app, "--top-k", "top_k", "results per query");
    add(app, "--dim", "dim", "dimensionality of the input");
  }

  RunConfig resolve(RunConfig cfg = {}) const {
    if (!config_path.empty()) cfg = load_run_config(config_path, cfg);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) apply_setting(cfg, key, values.at(key));
    }
    return cfg;
  }
};

fs::path index_file(const fs::path& dir, std::uint32_t rank) { return dir / ("node-" + std::to_string(rank) + ".idx"); }

// Settings given for a query must agree with the index they run against.
void check_against_index(const ConfigFlags& flags, const LshConfig& built) {
  RunConfig base;
  base.lsh = built;
  const RunConfig asked = flags.resolve(base);
  if (asked.lsh != built) {
    throw ConfigError("query settings disagree with the index (fingerprint " + std::to_string(asked.lsh.fingerprint()) +
                      " vs " + std::to_string(built.fingerprint()) + ")");
  }
}

std::uint32_t count_index_files(const fs::path& dir) {
  std::uint32_t m = 0;
  while (fs::exists(index_file(dir, m))) ++m;
  if (m == 0) throw IoError("no node-0.idx in " + dir.string());
  return m;
}

QueryBatch load_queries(const fs::path& path, std::uint64_t dim) {
  auto loaded = load_partition(path, dim == 0 ? kMaxDim : dim);
  if (!loaded.errors.empty()) {
    throw FormatError(path.string() + ": query " + std::to_string(loaded.errors.front().id) + ": " +
                      loaded.errors.front().message);
  }
  std::vector<Query> queries;
  for (auto& r : loaded.partition.records) queries.push_back({r.id, std::move(r.vector)});
  if (queries.empty()) throw FormatError(path.string() + ": no queries");
  return QueryBatch(std::move(queries));
}

std::vector<std::uint32_t> parse_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
    } catch (const std::exception&) {
      throw ConfigError("bad list entry '" + item + "'");
    }
    if (out.back() == 0) throw ConfigError("list entries must be >= 1");
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

// ---------------------------------------------------------------------------

int cmd_partition(const std::string& input, std::uint32_t parts, const std::string& out, std::uint64_t dim) {
  const auto manifest = partition_dataset(input, parts, out, dim);
  std::cout << "records=" << manifest.records << '\n';
  std::cout << "invalid_records=" << manifest.invalid_records << '\n';
  std::cout << "dim=" << manifest.dim << '\n';
  std::cout << "checksum=0x" << std::hex << manifest.checksum << std::dec << '\n';
  for (std::size_t r = 0; r < manifest.partitions.size(); ++r) {
    std::cout << "partition." << r << '=' << manifest.partitions[r].file << ' ' << manifest.partitions[r].records
              << '\n';
  }
  return kOk;
}

int cmd_index(const ConfigFlags& flags, const std::string& manifest_path, const std::string& out_dir, int only_rank,
              unsigned threads, bool no_exact) {
  const RunConfig cfg = flags.resolve();
  cfg.lsh.validate();
  const fs::path mpath = manifest_path;
  const auto manifest = DatasetManifest::load(mpath);
  const std::uint64_t dim = cfg.dim != 0 ? cfg.dim : std::max<std::uint64_t>(manifest.dim, 1);
  fs::create_directories(out_dir);

  IndexOptions options;
  options.threads = std::max(1u, threads);
  options.keep_exact = !no_exact;

  double slowest = 0.0;
  const auto total_start = Clock::now();
  for (std::uint32_t r = 0; r < manifest.partitions.size(); ++r) {
    if (only_rank >= 0 && static_cast<std::uint32_t>(only_rank) != r) continue;
    const auto& p = manifest.partitions[r];
    const auto start = Clock::now();
    auto loaded = load_partition(mpath.parent_path() / p.file, dim, r, p.offset, p.stride);
    auto report = preprocess(loaded.partition, cfg.lsh, options);
    report.index.save(index_file(out_dir, r));
    const double secs = seconds_since(start);
    slowest = std::max(slowest, secs);
    for (const auto& e : loaded.errors) std::cerr << "node " << r << ": skipped record " << e.id << ": " << e.message << '\n';
    for (const auto& e : report.errors) std::cerr << "node " << r << ": skipped record " << e.id << ": " << e.message << '\n';
    std::cout << "node=" << r << " vectors=" << report.index.vector_count()
              << " skipped=" << loaded.errors.size() + report.errors.size()
              << " slots=" << report.index.materialized_slots() << " build_seconds=" << report.seconds
              << " wall_seconds=" << secs << '\n';
  }
  std::cout << "total_seconds=" << seconds_since(total_start) << " max_node_seconds=" << slowest << '\n';
  return kOk;
}

int cmd_query(const ConfigFlags& flags, const std::string& index_dir, const std::string& queries_path,
              const std::string& out_path, const std::string& mode_flag, const std::string& backend, int rank,
              int timeout_s) {
  RunConfig cfg = flags.resolve();
  if (!mode_flag.empty()) apply_setting(cfg, "mode", mode_flag);
  const QueryMode mode = parse_query_mode(cfg.mode);
  const QueryBatch batch = load_queries(queries_path, cfg.dim);

  std::vector<QueryResult> results;
  QueryMetrics metrics;
  bool have_results = false;

  if (backend == "simulated") {
    const std::uint32_t m = count_index_files(index_dir);
    std::vector<NodeIndex> indexes;
    for (std::uint32_t r = 0; r < m; ++r) indexes.push_back(NodeIndex::load(index_file(index_dir, r)));
    check_against_index(flags, indexes[0].config());
    std::vector<QueryMetrics> per_rank;
    results = query_simulated(indexes, batch, mode, &per_rank);
    metrics = per_rank.at(0);
    have_results = true;
  } else if (backend == "tcp") {
    const auto members = cfg.members();
    if (members.empty()) throw ConfigError("tcp backend needs node.N=host:port entries in the config");
    if (rank < 0 || rank >= static_cast<int>(members.size())) throw ConfigError("--rank must name a configured node");
    const NodeIndex index = NodeIndex::load(index_file(index_dir, static_cast<std::uint32_t>(rank)));
    check_against_index(flags, index.config());
    TcpTransport transport(rank, members, std::chrono::seconds(timeout_s));
    QueryOptions opts;
    opts.metrics = &metrics;
    auto res = query_batch(transport, index, batch, mode, opts);
    if (res) {
      results = std::move(*res);
      have_results = true;
    }
  } else {
    throw ConfigError("unknown backend '" + backend + "' (expected simulated or tcp)");
  }

  if (!have_results) {
    std::cerr << "rank " << rank << " done in " << metrics.total_ms() << " ms\n";
    return kOk;
  }
  if (out_path.empty() || out_path == "-") {
    write_results(std::cout, results, &metrics);
  } else {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    write_results(out, results, &metrics);
    if (!out) throw IoError("error writing " + out_path);
  }
  return kOk;
}

int cmd_params(double p1, double p2, double n, double C1, double C2, std::uint32_t k) {
  const LshSensitivity sens{0.0, 1.0, p1, p2};
  const auto p = recommend_params(sens, n, C1, C2, k);
  print_params(std::cout, p);
  return kOk;
}

// ---------------------------------------------------------------------------

struct BenchSetup {
  PlantedInstance instance;
  LshConfig config;
};

BenchSetup make_bench(std::uint64_t background, std::uint32_t queries, std::uint64_t seed, std::uint64_t range) {
  PlantedConfig pc;
  pc.background = background;
  pc.queries = queries;
  pc.seed = seed;
  BenchSetup s{make_planted_instance(pc), {}};
  const auto p = recommend_params({0.0, 1.0, 0.95, 0.2}, static_cast<double>(s.instance.records.size()));
  s.config.hashes_per_table = p.K_rec;
  s.config.num_tables = static_cast<std::uint32_t>(p.L_rec);
  s.config.range = range;
  s.config.top_k = pc.planted_per_query;
  s.config.sketch_cols = LshConfig::default_sketch_cols(s.config.top_k);
  s.config.master_seed = seed;
  return s;
}

std::vector<NodeIndex> build_nodes(const BenchSetup& s, std::uint32_t m, double* max_seconds) {
  std::vector<NodeIndex> nodes;
  double slowest = 0.0;
  for (auto& part : split_round_robin(s.instance.records, m)) {
    auto report = preprocess(part, s.config);
    slowest = std::max(slowest, report.seconds);
    nodes.push_back(std::move(report.index));
  }
  if (max_seconds) *max_seconds = slowest;
  return nodes;
}

int cmd_bench(const std::string& what, std::uint64_t background, std::uint32_t queries, const std::string& nodes_list,
              std::uint64_t range, std::uint64_t seed, const std::string& out_path) {
  const auto ms = parse_list(nodes_list);
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw IoError("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << std::setprecision(6);

  if (what == "merges") {
    out << "m,mode,max_merges_per_rank,rank0_merges,schedule_rounds,bytes_sent\n";
    const BenchSetup s = make_bench(std::min<std::uint64_t>(background, 2000), std::min<std::uint32_t>(queries, 16),
                                    seed, range);
    const QueryBatch batch = s.instance.batch();
    for (std::uint32_t m : ms) {
      const auto nodes = build_nodes(s, m, nullptr);
      for (QueryMode mode : {QueryMode::kSketchTree, QueryMode::kSketchLinear}) {
        std::vector<QueryMetrics> per_rank;
        query_simulated(nodes, batch, mode, &per_rank);
        std::size_t max_merges = 0;
        std::size_t bytes = 0;
        for (const auto& q : per_rank) {
          max_merges = std::max(max_merges, q.reduce.merge_rounds);
          bytes += q.reduce.bytes_sent;
        }
        const auto sched = mode == QueryMode::kSketchTree ? ReductionSchedule::tree(static_cast<int>(m))
                                                          : ReductionSchedule::linear(static_cast<int>(m));
        out << m << ',' << to_string(mode) << ',' << max_merges << ',' << per_rank[0].reduce.merge_rounds << ','
            << sched.rounds.size() << ',' << bytes << '\n';
      }
    }
    return kOk;
  }

  const BenchSetup s = make_bench(background, queries, seed, range);
  const QueryBatch batch = s.instance.batch();

  if (what == "indexing") {
    out << "m,vectors,max_node_seconds,sum_node_seconds\n";
    for (std::uint32_t m : ms) {
      double slowest = 0.0;
      const auto start = Clock::now();
      build_nodes(s, m, &slowest);
      out << m << ',' << s.instance.records.size() << ',' << slowest << ',' << seconds_since(start) << '\n';
    }
    return kOk;
  }

  if (what == "compare") {
    out << "m,mode,mean_query_ms,recall,s_at_k\n";
    for (std::uint32_t m : ms) {
      const auto nodes = build_nodes(s, m, nullptr);
      for (QueryMode mode : {QueryMode::kSketchTree, QueryMode::kSketchLinear, QueryMode::kExact}) {
        const auto start = Clock::now();
        const auto results = query_simulated(nodes, batch, mode);
        const double ms_per_query = seconds_since(start) * 1000.0 / static_cast<double>(batch.size());
        out << m << ',' << to_string(mode) << ',' << ms_per_query << ',' << planted_recall(s.instance, results) << ','
            << s_at_k(results, batch, s.instance.lookup(), s.config.top_k) << '\n';
      }
    }
    return kOk;
  }
  throw ConfigError("unknown bench mode '" + what + "' (expected compare, merges or indexing)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed sketched LSH similarity search"};
  app.require_subcommand(1);

  // partition
  auto* part = app.add_subcommand("partition", "split a libsvm file round-robin into m partitions");
  std::string part_input, part_out;
  std::uint32_t part_m = 1;
  std::uint64_t part_dim = 0;
  part->add_option("--input", part_input, "libsvm input file")->required();
  part->add_option("--parts,-m", part_m, "number of partitions")->required();
  part->add_option("--out", part_out, "output directory")->required();
  part->add_option("--dim", part_dim, "dimensionality (default: largest index seen)");

  // index
  auto* idx = app.add_subcommand("index", "build and save one index per partition");
  ConfigFlags idx_flags;
  idx_flags.add_lsh(idx);
  std::string idx_manifest, idx_out;
  int idx_rank = -1;
  unsigned idx_threads = 1;
  bool idx_no_exact = false;
  idx->add_option("--manifest", idx_manifest, "manifest written by partition")->required();
  idx->add_option("--out", idx_out, "directory for node-<r>.idx files")->required();
  idx->add_option("--rank", idx_rank, "build only this partition");
  idx->add_option("--threads", idx_threads, "worker threads per node");
  idx->add_flag("--no-exact", idx_no_exact, "omit exact buckets (disables exact mode)");

  // query
  auto* qry = app.add_subcommand("query", "run a query batch against saved indexes");
  ConfigFlags qry_flags;
  qry_flags.add_lsh(qry);
  std::string qry_index, qry_queries, qry_out, qry_mode, qry_backend = "simulated";
  int qry_rank = 0;
  int qry_timeout = 60;
  qry->add_option("--index", qry_index, "directory holding node-<r>.idx")->required();
  qry->add_option("--queries", qry_queries, "libsvm query file; query ids are line numbers from 0")->required();
  qry->add_option("--out", qry_out, "result file (default stdout)");
  qry->add_option("--mode", qry_mode, "sketch_tree, sketch_linear or exact");
  qry->add_option("--backend", qry_backend, "simulated or tcp");
  qry->add_option("--rank", qry_rank, "this process's rank (tcp)");
  qry->add_option("--timeout", qry_timeout, "seconds to wait for peers (tcp)");

  // bench
  auto* bench = app.add_subcommand("bench", "synthetic trend experiments, CSV output");
  std::string bench_mode = "compare", bench_nodes = "1,2,4,8", bench_out;
  std::uint64_t bench_background = 20000, bench_range = std::uint64_t{1} << 16, bench_seed = 7;
  std::uint32_t bench_queries = 100;
  bench->add_option("--mode", bench_mode, "compare, merges or indexing");
  bench->add_option("--background", bench_background, "background vectors");
  bench->add_option("--queries", bench_queries, "queries (8 planted neighbors each)");
  bench->add_option("--nodes", bench_nodes, "comma-separated node counts");
  bench->add_option("--range", bench_range, "addresses per table");
  bench->add_option("--seed", bench_seed, "seed");
  bench->add_option("--out", bench_out, "CSV file (default stdout)");

  // params
  auto* prm = app.add_subcommand("params", "theorem-driven K and L");
  double p1 = 0, p2 = 0, n = 0, C1 = kDefaultC1, C2 = kDefaultC2;
  std::uint32_t kb = 8;
  prm->add_option("--p1", p1, "collision probability within r")->required();
  prm->add_option("--p2", p2, "collision probability beyond cr")->required();
  prm->add_option("--n", n, "dataset size")->required();
  prm->add_option("--C1", C1, "signal constant (> 1)");
  prm->add_option("--C2", C2, "noise constant (> 1)");
  prm->add_option("--k", kb, "k of the k-bounded instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*part) return cmd_partition(part_input, part_m, part_out, part_dim);
    if (*idx) return cmd_index(idx_flags, idx_manifest, idx_out, idx_rank, idx_threads, idx_no_exact);
    if (*qry) return cmd_query(qry_flags, qry_index, qry_queries, qry_out, qry_mode, qry_backend, qry_rank, qry_timeout);
    if (*bench) return cmd_bench(bench_mode, bench_background, bench_queries, bench_nodes, bench_range, bench_seed, bench_out);
    if (*prm) return cmd_params(p1, p2, n, C1, C2, kb);
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kTransport;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const InfeasibleParams& e) {
    std::cerr << "infeasible parameters: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const EmptyVector& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const InvalidVector& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
