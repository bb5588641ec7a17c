#include "slash/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace slash {

SparseVector random_set(std::mt19937_64& rng, std::uint32_t size, std::uint64_t dim) {
  if (size > dim) throw std::invalid_argument("random_set: size exceeds dimensionality");
  std::uniform_int_distribution<std::uint64_t> pick(0, dim - 1);
  std::vector<std::uint32_t> idx;
  idx.reserve(size);
  std::unordered_set<std::uint32_t> seen;
  while (idx.size() < size) {
    const auto v = static_cast<std::uint32_t>(pick(rng));
    if (seen.insert(v).second) idx.push_back(v);
  }
  std::sort(idx.begin(), idx.end());
  return SparseVector(std::move(idx), dim);
}

SparseVector perturb(std::mt19937_64& rng, const SparseVector& base, std::uint32_t edits) {
  if (edits > base.size()) throw std::invalid_argument("perturb: more edits than indices");
  std::vector<std::uint32_t> idx(base.indices().begin(), base.indices().end());
  std::unordered_set<std::uint32_t> original(idx.begin(), idx.end());
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(idx.size() - edits);
  std::uniform_int_distribution<std::uint64_t> pick(0, base.dim() - 1);
  std::unordered_set<std::uint32_t> added;
  while (added.size() < edits) {
    const auto v = static_cast<std::uint32_t>(pick(rng));
    if (!original.count(v) && added.insert(v).second) idx.push_back(v);
  }
  std::sort(idx.begin(), idx.end());
  return SparseVector(std::move(idx), base.dim());
}

PlantedInstance make_planted_instance(const PlantedConfig& config) {
  if (config.max_edits == 0) throw std::invalid_argument("max_edits must be >= 1");
  std::mt19937_64 rng(config.seed);
  PlantedInstance inst;
  inst.dim = config.dim;

  const std::uint64_t total = config.background + std::uint64_t{config.queries} * config.planted_per_query;
  std::vector<VectorId> ids(total);
  std::iota(ids.begin(), ids.end(), VectorId{0});
  std::shuffle(ids.begin(), ids.end(), rng);

  inst.records.resize(total);
  std::uint64_t next = 0;
  for (std::uint64_t i = 0; i < config.background; ++i) {
    const VectorId id = ids[next++];
    inst.records[id] = {id, random_set(rng, config.set_size, config.dim)};
  }
  std::uniform_int_distribution<std::uint32_t> edits(1, config.max_edits);
  inst.queries.reserve(config.queries);
  inst.planted.resize(config.queries);
  for (std::uint32_t q = 0; q < config.queries; ++q) {
    Query query{q, random_set(rng, config.set_size, config.dim)};
    for (std::uint32_t j = 0; j < config.planted_per_query; ++j) {
      const VectorId id = ids[next++];
      inst.records[id] = {id, perturb(rng, query.vector, edits(rng))};
      inst.planted[q].push_back(id);
    }
    std::sort(inst.planted[q].begin(), inst.planted[q].end());
    inst.queries.push_back(std::move(query));
  }
  return inst;
}

namespace {

std::size_t found(const std::vector<VectorId>& planted, const QueryResult& r) {
  std::size_t n = 0;
  for (const auto& h : r.hits) {
    if (std::binary_search(planted.begin(), planted.end(), h.id)) ++n;
  }
  return n;
}

}  // namespace

double planted_recall(const PlantedInstance& inst, std::span<const QueryResult> results) {
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& planted = inst.planted.at(q);
    if (planted.empty()) continue;
    sum += static_cast<double>(found(planted, results[q])) / static_cast<double>(planted.size());
  }
  return sum / static_cast<double>(results.size());
}

double full_recall_fraction(const PlantedInstance& inst, std::span<const QueryResult> results) {
  if (results.empty()) return 0.0;
  std::size_t full = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    if (found(inst.planted.at(q), results[q]) == inst.planted.at(q).size()) ++full;
  }
  return static_cast<double>(full) / static_cast<double>(results.size());
}

}  // namespace slash
