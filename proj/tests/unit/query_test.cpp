#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "slash/io.hpp"
#include "slash/query.hpp"
#include "slash/synthetic.hpp"
#include "test_support.hpp"

using namespace slash;

namespace {

LshConfig query_config(std::uint32_t K = 4, std::uint32_t L = 16) {
  LshConfig c;
  c.hashes_per_table = K;
  c.num_tables = L;
  c.range = 1u << 14;
  c.sketch_rows = 4;
  c.sketch_cols = 32;
  c.master_seed = 77;
  c.top_k = 8;
  return c;
}

std::vector<NodeIndex> build_nodes(const PlantedInstance& inst, const LshConfig& cfg, std::uint32_t m) {
  std::vector<NodeIndex> out;
  for (const auto& part : split_round_robin(inst.records, m)) out.push_back(preprocess(part, cfg).index);
  return out;
}

PlantedConfig small_planted(std::uint64_t background = 3000, std::uint32_t queries = 40) {
  PlantedConfig pc;
  pc.background = background;
  pc.queries = queries;
  pc.planted_per_query = 6;
  pc.dim = 1u << 20;
  pc.seed = 5;
  return pc;
}

// Sort oracle for top-k: every (id, count), ordered by count desc then id asc.
std::vector<Hit> sort_oracle(const FrequencyMap& counts, std::size_t k) {
  std::vector<Hit> all;
  for (const auto& [id, n] : counts) {
    if (n > 0) all.push_back({id, n});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.count != b.count ? a.count > b.count : a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace

TEST(QueryMode, ParseAndPrint) {
  for (auto m : {QueryMode::kSketchTree, QueryMode::kSketchLinear, QueryMode::kExact}) {
    EXPECT_EQ(parse_query_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_query_mode("fast"), ConfigError);
}

TEST(QueryBatch, RejectsEmpty) {
  EXPECT_THROW(QueryBatch({}), std::invalid_argument);
  EXPECT_THROW(QueryBatch({Query{1, SparseVector({}, 10)}}), EmptyVector);
}

TEST(Query, IdenticalVectorRanksFirst) {
  std::mt19937_64 rng(1);
  DatasetPartition p;
  for (VectorId i = 0; i < 500; ++i) p.records.push_back({i, random_set(rng, 40, 1u << 20)});
  const auto cfg = query_config(4, 16);
  std::vector<NodeIndex> nodes;
  nodes.push_back(preprocess(p, cfg).index);
  const QueryBatch batch({Query{1000, p.records[123].vector}});
  const auto res = query_simulated(nodes, batch, QueryMode::kSketchTree);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].query_id, 1000u);
  ASSERT_FALSE(res[0].hits.empty());
  EXPECT_EQ(res[0].hits[0].id, 123u);
  EXPECT_GE(res[0].hits[0].count, 14u);
}

TEST(Query, EmptyIndexesGiveEmptyHits) {
  const auto cfg = query_config();
  std::vector<NodeIndex> nodes;
  for (int r = 0; r < 3; ++r) nodes.push_back(preprocess(DatasetPartition{}, cfg).index);
  const QueryBatch batch({Query{1, SparseVector({1, 2}, 10)}, Query{2, SparseVector({3}, 10)}});
  for (auto mode : {QueryMode::kSketchTree, QueryMode::kSketchLinear, QueryMode::kExact}) {
    const auto res = query_simulated(nodes, batch, mode);
    ASSERT_EQ(res.size(), 2u);
    EXPECT_EQ(res[1].query_id, 2u);
    for (const auto& r : res) EXPECT_TRUE(r.hits.empty());
  }
}

TEST(Query, SketchAgreesWithExactTopOne) {
  PlantedConfig pc;
  pc.background = 10000;
  pc.queries = 200;
  pc.seed = 11;
  const auto inst = make_planted_instance(pc);
  const auto cfg = query_config(4, 16);
  const auto nodes = build_nodes(inst, cfg, 4);
  const auto batch = inst.batch();
  const auto sketch = query_simulated(nodes, batch, QueryMode::kSketchTree);
  const auto exact = query_simulated(nodes, batch, QueryMode::kExact);
  std::size_t agree = 0;
  for (std::size_t q = 0; q < batch.size(); ++q) {
    ASSERT_FALSE(exact[q].hits.empty());
    if (!sketch[q].hits.empty() && sketch[q].hits[0].count == exact[q].hits[0].count) {
      // Ties at the top are broken by id in both modes only when counts agree.
      agree += sketch[q].hits[0].id == exact[q].hits[0].id;
    }
  }
  EXPECT_GE(static_cast<double>(agree) / batch.size(), 0.95);
}

TEST(Query, ExactModeIndependentOfNodeCount) {
  const auto inst = make_planted_instance(small_planted());
  const auto cfg = query_config();
  const auto batch = inst.batch();
  const auto base = query_simulated(build_nodes(inst, cfg, 1), batch, QueryMode::kExact);
  for (std::uint32_t m : {2u, 4u, 8u}) {
    EXPECT_EQ(query_simulated(build_nodes(inst, cfg, m), batch, QueryMode::kExact), base) << "m=" << m;
  }
}

TEST(Query, SketchModesDeterministic) {
  const auto inst = make_planted_instance(small_planted());
  const auto cfg = query_config();
  const auto nodes = build_nodes(inst, cfg, 3);
  const auto batch = inst.batch();
  for (auto mode : {QueryMode::kSketchTree, QueryMode::kSketchLinear}) {
    EXPECT_EQ(query_simulated(nodes, batch, mode), query_simulated(nodes, batch, mode));
  }
}

TEST(Query, NoDistanceComputations) {
  const auto inst = make_planted_instance(small_planted());
  const auto nodes = build_nodes(inst, query_config(), 2);
  reset_distance_computations();
  for (auto mode : {QueryMode::kSketchTree, QueryMode::kSketchLinear, QueryMode::kExact}) {
    query_simulated(nodes, inst.batch(), mode);
  }
  EXPECT_EQ(distance_computations(), 0u);
}

TEST(Query, MoreTablesDoNotHurtRecall) {
  const auto inst = make_planted_instance(small_planted(5000, 60));
  const auto batch = inst.batch();
  const double r8 = planted_recall(inst, query_simulated(build_nodes(inst, query_config(4, 8), 2), batch,
                                                         QueryMode::kExact));
  const double r32 = planted_recall(inst, query_simulated(build_nodes(inst, query_config(4, 32), 2), batch,
                                                          QueryMode::kExact));
  EXPECT_GE(r32 + 1e-9, r8);
}

TEST(Query, MetricsAndReducedSketches) {
  const auto inst = make_planted_instance(small_planted(1000, 10));
  const auto nodes = build_nodes(inst, query_config(), 4);
  std::vector<QueryMetrics> metrics;
  std::vector<TopkapiSketch> reduced;
  const auto res = query_simulated(nodes, inst.batch(), QueryMode::kSketchTree, &metrics, &reduced);
  ASSERT_EQ(metrics.size(), 4u);
  ASSERT_EQ(reduced.size(), 10u);
  EXPECT_EQ(metrics[0].reduce.merge_rounds, 2u);
  EXPECT_GE(metrics[0].total_ms(), 0.0);
  for (std::size_t q = 0; q < 10; ++q) EXPECT_EQ(res[q].hits, top_k_extract(reduced[q], 8));
}

TEST(Query, ConfigMismatchFailsEveryRank) {
  auto cfg = query_config();
  std::vector<NodeIndex> nodes;
  nodes.push_back(preprocess(DatasetPartition{}, cfg).index);
  cfg.master_seed++;
  nodes.push_back(preprocess(DatasetPartition{}, cfg).index);
  const QueryBatch batch({Query{1, SparseVector({1}, 10)}});
  EXPECT_THROW(query_simulated(nodes, batch, QueryMode::kSketchTree), ConfigError);
}

TEST(Query, ExactModeNeedsExactBuckets) {
  IndexOptions opts;
  opts.keep_exact = false;
  std::vector<NodeIndex> nodes;
  nodes.push_back(preprocess(DatasetPartition{}, query_config(), opts).index);
  const QueryBatch batch({Query{1, SparseVector({1}, 10)}});
  EXPECT_THROW(query_simulated(nodes, batch, QueryMode::kExact), ConfigError);
  EXPECT_NO_THROW(query_simulated(nodes, batch, QueryMode::kSketchTree));
}

TEST(TopK, FewerCandidatesThanK) {
  const FrequencyMap f{{3, 2}, {1, 5}};
  EXPECT_EQ(top_k_extract(f, 8), (std::vector<Hit>{{1, 5}, {3, 2}}));
}

TEST(TopK, TiesByAscendingId) {
  const FrequencyMap f{{9, 4}, {2, 4}, {5, 4}, {1, 1}};
  EXPECT_EQ(top_k_extract(f, 2), (std::vector<Hit>{{2, 4}, {5, 4}}));
}

TEST(TopK, DropsZeroCountsAndRejectsZeroK) {
  EXPECT_TRUE(top_k_extract(FrequencyMap{{1, 0}}, 3).empty());
  EXPECT_THROW(top_k_extract(FrequencyMap{}, 0), std::invalid_argument);
}

TEST(TopK, MatchesSortOracleOnZipf) {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 30; ++t) {
    const auto counts = exact_counter(testing_support::zipf_stream(rng, 3000, 300, 0.9));
    for (std::size_t k : {1u, 5u, 50u, 1000u}) EXPECT_EQ(top_k_extract(counts, k), sort_oracle(counts, k));
  }
}

TEST(TopK, SketchOverloadUsesQueryOrder) {
  TopkapiSketch s(4, 16, sketch_row_seeds(1, 4));
  for (int i = 0; i < 5; ++i) s.insert(7);
  for (int i = 0; i < 3; ++i) s.insert(2);
  const auto hits = top_k_extract(s, 1);
  EXPECT_EQ(hits, (std::vector<Hit>{{7, 5}}));
}

TEST(SAtK, ExactMatchesScoreOne) {
  std::vector<Record> recs{{0, SparseVector({1, 2, 3}, 10)}, {1, SparseVector({7, 8}, 10)}};
  VectorLookup lookup = [&](VectorId id) { return id < recs.size() ? &recs[id].vector : nullptr; };
  const QueryBatch batch({Query{100, recs[0].vector}});
  const std::vector<QueryResult> hit{{100, {{0, 3}}}};
  EXPECT_DOUBLE_EQ(s_at_k(hit, batch, lookup, 1), 1.0);
  const std::vector<QueryResult> miss{{100, {{1, 3}}}};
  EXPECT_DOUBLE_EQ(s_at_k(miss, batch, lookup, 1), 0.0);
  const std::vector<QueryResult> both{{100, {{0, 3}, {1, 1}}}};
  EXPECT_DOUBLE_EQ(s_at_k(both, batch, lookup, 2), 0.5);
}

TEST(SAtK, EmptyHitsCountAsZero) {
  std::vector<Record> recs{{0, SparseVector({1}, 10)}};
  VectorLookup lookup = [&](VectorId id) { return id < recs.size() ? &recs[id].vector : nullptr; };
  const QueryBatch batch({Query{1, recs[0].vector}, Query{2, recs[0].vector}});
  const std::vector<QueryResult> res{{1, {{0, 1}}}, {2, {}}};
  EXPECT_DOUBLE_EQ(s_at_k(res, batch, lookup, 1), 0.5);
}

TEST(SAtK, Errors) {
  std::vector<Record> recs{{0, SparseVector({1}, 10)}};
  VectorLookup lookup = [&](VectorId id) { return id < recs.size() ? &recs[id].vector : nullptr; };
  const QueryBatch batch({Query{1, recs[0].vector}});
  EXPECT_THROW(s_at_k(std::vector<QueryResult>{{1, {{5, 1}}}}, batch, lookup, 1), Error);
  EXPECT_THROW(s_at_k(std::vector<QueryResult>{{2, {}}}, batch, lookup, 1), std::invalid_argument);
}

TEST(SAtK, DoesNotTouchRetrievalCounter) {
  std::vector<Record> recs{{0, SparseVector({1}, 10)}};
  VectorLookup lookup = [&](VectorId id) { return id < recs.size() ? &recs[id].vector : nullptr; };
  const QueryBatch batch({Query{1, recs[0].vector}});
  reset_distance_computations();
  s_at_k(std::vector<QueryResult>{{1, {{0, 1}}}}, batch, lookup, 1);
  EXPECT_EQ(distance_computations(), 0u);
}

TEST(Results, WriteReadRoundTrip) {
  const std::vector<QueryResult> res{{4, {{1, 9}, {7, 3}}}, {5, {}}, {6, {{2, 1}}}};
  QueryMetrics m;
  m.hash_ms = 1.5;
  std::stringstream s;
  write_results(s, res, &m);
  EXPECT_NE(s.str().find("# metrics hash_ms="), std::string::npos);
  EXPECT_EQ(read_results(s), res);
}
