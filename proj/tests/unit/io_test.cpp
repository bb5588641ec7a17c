#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slash/io.hpp"
#include "slash/query.hpp"
#include "slash/synthetic.hpp"

using namespace slash;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("slash-io-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class StringSource final : public ByteSource {
 public:
  explicit StringSource(std::string text) : text_(std::move(text)) {}
  std::size_t read(std::span<char> buffer) override {
    ++calls;
    max_request = std::max(max_request, buffer.size());
    const std::size_t n = std::min(buffer.size(), text_.size() - pos_);
    std::copy_n(text_.data() + pos_, n, buffer.data());
    pos_ += n;
    return n;
  }
  std::size_t calls = 0;
  std::size_t max_request = 0;

 private:
  std::string text_;
  std::size_t pos_ = 0;
};

std::vector<std::string> all_lines(ByteSource& src, std::size_t block) {
  LineReader reader(src, block);
  std::vector<std::string> out;
  std::string line;
  while (reader.next(line)) out.push_back(line);
  return out;
}

struct Run {
  int status;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(SLASH_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::string dataset_text(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string text;
  for (std::size_t i = 0; i < n; ++i) text += format_record(random_set(rng, 12, 5000), std::to_string(i % 2)) + "\n";
  return text;
}

}  // namespace

TEST(ParseRecord, LabelAndFeatures) {
  const auto r = parse_record("+1 3:0.5 7:1 10:2e3", 10);
  ASSERT_TRUE(r.label.has_value());
  EXPECT_EQ(*r.label, "+1");
  EXPECT_EQ(std::vector<std::uint32_t>(r.vector.indices().begin(), r.vector.indices().end()),
            (std::vector<std::uint32_t>{2, 6, 9}));
  EXPECT_EQ(r.vector.dim(), 10u);
}

TEST(ParseRecord, NoLabelAndExtraWhitespace) {
  const auto r = parse_record("  1:1\t\t2:1  ", 4);
  EXPECT_FALSE(r.label.has_value());
  EXPECT_EQ(r.vector.size(), 2u);
}

TEST(ParseRecord, ErrorsCarryLineAndColumn) {
  try {
    parse_record("0 1:1 x:1", 10, 7);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
    EXPECT_EQ(e.column(), 7u);
  }
  EXPECT_THROW(parse_record("0 0:1", 10), ParseError);
  EXPECT_THROW(parse_record("0 11:1", 10), ParseError);
  EXPECT_THROW(parse_record("0 5:1 3:1", 10), ParseError);
  EXPECT_THROW(parse_record("0 5:1 5:1", 10), ParseError);
  EXPECT_THROW(parse_record("0 5:abc", 10), ParseError);
  EXPECT_THROW(parse_record("0 5:1 junk", 10), ParseError);
  EXPECT_THROW(parse_record("0", 10), EmptyVector);
  EXPECT_THROW(parse_record("", 10), EmptyVector);
  EXPECT_THROW(parse_record("1:1", 0), std::invalid_argument);
}

TEST(ParseRecord, RoundTripsThroughFormat) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto v = random_set(rng, 1 + i % 50, 1u << 20);
    const auto back = parse_record(format_record(v), 1u << 20).vector;
    EXPECT_EQ(back, v);
  }
}

TEST(ParseRecord, FuzzNeverCrashes) {
  std::mt19937_64 rng(4);
  const std::string alphabet = "0123456789: \t.-+eabc";
  for (int i = 0; i < 5000; ++i) {
    std::string s(rng() % 24, ' ');
    for (auto& ch : s) ch = alphabet[rng() % alphabet.size()];
    try {
      const auto r = parse_record(s, 1000);
      EXPECT_FALSE(r.vector.empty());
    } catch (const ParseError&) {
    } catch (const EmptyVector&) {
    }
  }
}

TEST(LineReader, ReadsInFixedBlocks) {
  std::string text;
  for (int i = 0; i < 5000; ++i) text += "line " + std::to_string(i) + "\n";
  StringSource src(text);
  const auto lines = all_lines(src, 4096);
  ASSERT_EQ(lines.size(), 5000u);
  EXPECT_EQ(lines[4999], "line 4999");
  EXPECT_EQ(src.max_request, 4096u);
  EXPECT_LE(src.calls, text.size() / 4096 + 2);
}

TEST(LineReader, LinesLongerThanBlockAndCrlf) {
  const std::string long_line(1000, 'x');
  StringSource src(long_line + "\r\nb\n\nlast");
  EXPECT_EQ(all_lines(src, 7), (std::vector<std::string>{long_line, "b", "", "last"}));
}

TEST(LoadPartition, AssignsStridedIdsAndReportsBadLines) {
  StringSource src("0 1:1\n0 bad\n0 2:1 3:1\n");
  const auto res = load_partition(src, 10, 1, 1, 3);
  ASSERT_EQ(res.partition.records.size(), 2u);
  EXPECT_EQ(res.partition.records[0].id, 1u);
  EXPECT_EQ(res.partition.records[1].id, 7u);
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_EQ(res.errors[0].id, 4u);
  EXPECT_NE(res.errors[0].message.find("line 2"), std::string::npos);
}

TEST(LoadPartition, MissingFileIsIoError) {
  EXPECT_THROW(load_partition(fs::path("/nonexistent/x.svm"), 10), IoError);
}

TEST(Partition, SinglePartitionIsIdentical) {
  TempDir dir;
  const std::string text = dataset_text(50, 1);
  write_file(dir / "in.svm", text);
  const auto m = partition_dataset(dir / "in.svm", 1, dir / "out");
  EXPECT_EQ(read_file(dir / "out/part-0.svm"), text);
  EXPECT_EQ(m.records, 50u);
  EXPECT_EQ(m.invalid_records, 0u);
}

TEST(Partition, RoundRobinSizes) {
  TempDir dir;
  write_file(dir / "in.svm", dataset_text(10, 2));
  const auto m = partition_dataset(dir / "in.svm", 3, dir / "out");
  ASSERT_EQ(m.partitions.size(), 3u);
  EXPECT_EQ(m.partitions[0].records, 4u);
  EXPECT_EQ(m.partitions[1].records, 3u);
  EXPECT_EQ(m.partitions[2].records, 3u);
  EXPECT_EQ(m.partitions[2].offset, 2u);
  EXPECT_EQ(m.partitions[2].stride, 3u);
}

TEST(Partition, ManifestRoundTripAndStableChecksum) {
  TempDir dir;
  const std::string text = dataset_text(30, 3) + "0 bad:line\n";
  write_file(dir / "in.svm", text);
  const auto a = partition_dataset(dir / "in.svm", 2, dir / "a");
  const auto b = partition_dataset(dir / "in.svm", 5, dir / "b");
  EXPECT_EQ(a.checksum, b.checksum);
  EXPECT_EQ(a.checksum, fnv1a64(text));
  EXPECT_EQ(a.invalid_records, 1u);
  EXPECT_EQ(DatasetManifest::load(dir / "a" / kManifestName), a);
  EXPECT_EQ(DatasetManifest::load(dir / "b" / kManifestName), b);
}

TEST(Partition, InfersDimension) {
  TempDir dir;
  write_file(dir / "in.svm", "0 1:1 17:1\n0 3:1\n");
  EXPECT_EQ(partition_dataset(dir / "in.svm", 2, dir / "out").dim, 17u);
  EXPECT_EQ(partition_dataset(dir / "in.svm", 2, dir / "out2", 100).dim, 100u);
}

TEST(Partition, CleansUpOnFailure) {
  TempDir dir;
  write_file(dir / "in.svm", dataset_text(5, 4));
  fs::create_directories(dir / "out/part-1.svm");  // blocks the second output
  EXPECT_THROW(partition_dataset(dir / "in.svm", 2, dir / "out"), IoError);
  EXPECT_FALSE(fs::exists(dir / "out/part-0.svm"));
  EXPECT_FALSE(fs::exists(dir / "out" / kManifestName));
  EXPECT_TRUE(fs::is_directory(dir / "out/part-1.svm"));
}

TEST(Partition, CorruptManifestIsRejected) {
  TempDir dir;
  write_file(dir / "in.svm", dataset_text(6, 5));
  partition_dataset(dir / "in.svm", 2, dir / "out");
  std::string text = read_file(dir / "out" / kManifestName);
  const auto pos = text.find("records=6");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 9, "records=7");
  write_file(dir / "out" / kManifestName, text);
  EXPECT_THROW(DatasetManifest::load(dir / "out" / kManifestName), FormatError);
}

TEST(Partition, RepartitioningKeepsExactResults) {
  TempDir dir;
  PlantedConfig pc;
  pc.background = 1500;
  pc.queries = 20;
  pc.seed = 9;
  const auto inst = make_planted_instance(pc);
  std::string text;
  for (const auto& r : inst.records) text += format_record(r.vector) + "\n";
  write_file(dir / "in.svm", text);

  LshConfig cfg;
  cfg.hashes_per_table = 4;
  cfg.num_tables = 12;
  cfg.range = 1u << 12;
  auto run = [&](std::uint32_t m) {
    const auto out = dir / ("m" + std::to_string(m));
    const auto manifest = partition_dataset(dir / "in.svm", m, out, inst.dim);
    std::vector<NodeIndex> nodes;
    for (const auto& p : manifest.partitions) {
      const auto loaded = load_partition(out / p.file, manifest.dim, 0, p.offset, p.stride);
      EXPECT_TRUE(loaded.errors.empty());
      nodes.push_back(preprocess(loaded.partition, cfg).index);
    }
    return query_simulated(nodes, inst.batch(), QueryMode::kExact);
  };
  EXPECT_EQ(run(2), run(4));
}

TEST(RunConfigFile, ParsesKeysAndNodes) {
  TempDir dir;
  write_file(dir / "run.cfg",
             "# cluster\nK = 6\nL=20\nrange=4096\nsketch_w=3\nsketch_b=64\nmaster_seed=0x10\n"
             "top_k=5\nmode=exact\ndim=1000\nC1=3\nnode.0=127.0.0.1:7000\nnode.1=localhost:7001\n");
  const auto c = load_run_config(dir / "run.cfg");
  EXPECT_EQ(c.lsh.hashes_per_table, 6u);
  EXPECT_EQ(c.lsh.num_tables, 20u);
  EXPECT_EQ(c.lsh.range, 4096u);
  EXPECT_EQ(c.lsh.sketch_rows, 3u);
  EXPECT_EQ(c.lsh.sketch_cols, 64u);
  EXPECT_EQ(c.lsh.master_seed, 16u);
  EXPECT_EQ(c.lsh.top_k, 5u);
  EXPECT_EQ(c.mode, "exact");
  EXPECT_EQ(c.dim, 1000u);
  EXPECT_DOUBLE_EQ(c.C1, 3.0);
  EXPECT_EQ(c.members(), (std::vector<Endpoint>{{"127.0.0.1", 7000}, {"localhost", 7001}}));
}

TEST(RunConfigFile, Errors) {
  EXPECT_THROW(parse_key_values("K=1\nK=2\n"), ParseError);
  EXPECT_THROW(parse_key_values("no equals sign\n"), ParseError);
  RunConfig c;
  EXPECT_THROW(apply_setting(c, "bogus", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "K", "-3"), ConfigError);
  EXPECT_THROW(apply_setting(c, "mode", "fast"), ConfigError);
  EXPECT_THROW(parse_endpoint("nohost"), ConfigError);
  apply_setting(c, "node.2", "h:1");
  EXPECT_THROW(c.members(), ConfigError);
}

TEST(RunConfigFile, LaterSettingsOverrideBase) {
  RunConfig base;
  base.lsh.num_tables = 99;
  TempDir dir;
  write_file(dir / "run.cfg", "K=3\n");
  const auto c = load_run_config(dir / "run.cfg", base);
  EXPECT_EQ(c.lsh.hashes_per_table, 3u);
  EXPECT_EQ(c.lsh.num_tables, 99u);
}

TEST(Cli, ParamsPrintsRecommendation) {
  const auto r = run_cli("params --p1 0.95 --p2 0.3 --n 10000");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("\nK=12\n"), std::string::npos);
  EXPECT_NE(r.out.find("\nL=14\n"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("params --p1 0.6 --p2 0.5 --n 10000").status, 2);
  EXPECT_EQ(run_cli("params --p1 0.95").status, 2);
  EXPECT_EQ(run_cli("partition --input /nonexistent/in.svm -m 2 --out /tmp/x").status, 3);
  EXPECT_EQ(run_cli("bench --mode nonsense --nodes 1").status, 2);
}

TEST(Cli, IndexAndQuerySmoke) {
  TempDir dir;
  write_file(dir / "data.svm", "0 2:1 5:1 9:1\n");
  write_file(dir / "cfg", "K=2\nL=8\nrange=1024\n");
  ASSERT_EQ(run_cli("partition --input " + (dir / "data.svm").string() + " -m 1 --out " + (dir / "p").string()).status,
            0);
  const std::string common = " --config " + (dir / "cfg").string();
  ASSERT_EQ(run_cli("index --manifest " + (dir / "p/manifest.txt").string() + " --out " + (dir / "idx").string() +
                    common)
                .status,
            0);
  const auto q = run_cli("query --index " + (dir / "idx").string() + " --queries " + (dir / "data.svm").string() +
                         " --dim 9" + common);
  EXPECT_EQ(q.status, 0);
  EXPECT_EQ(q.out.substr(0, q.out.find('\n')), "0\t0:8");
  // Flag beats config: a different L changes the fingerprint.
  EXPECT_EQ(run_cli("query --index " + (dir / "idx").string() + " --queries " + (dir / "data.svm").string() +
                    " --dim 9 --L 9" + common)
                .status,
            2);
}

TEST(Cli, BenchCsvHeader) {
  const auto r = run_cli("bench --mode compare --background 300 --queries 4 --nodes 1,2 --range 1024");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "m,mode,mean_query_ms,recall,s_at_k");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 7);
}
