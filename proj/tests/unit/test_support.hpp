#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "slash/core.hpp"
#include "slash/sketch.hpp"

namespace testing_support {

// Reference splitmix64 written from the published algorithm, used to check the
// library's counter-mode seed expansion.
struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

inline double jaccard_oracle(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::set<std::uint32_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::vector<std::uint32_t> inter, uni;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
  return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline std::vector<std::uint32_t> indices_of(const slash::SparseVector& v) {
  return {v.indices().begin(), v.indices().end()};
}

// Pair of sets sharing `shared` elements with `only_a` / `only_b` private ones.
inline std::pair<slash::SparseVector, slash::SparseVector> pair_with_overlap(std::mt19937_64& rng, std::uint32_t shared,
                                                                             std::uint32_t only_a,
                                                                             std::uint32_t only_b,
                                                                             std::uint64_t dim = 1u << 24) {
  std::set<std::uint32_t> used;
  std::uniform_int_distribution<std::uint64_t> pick(0, dim - 1);
  auto fresh = [&] {
    while (true) {
      const auto v = static_cast<std::uint32_t>(pick(rng));
      if (used.insert(v).second) return v;
    }
  };
  std::vector<std::uint32_t> a, b;
  for (std::uint32_t i = 0; i < shared; ++i) {
    const auto v = fresh();
    a.push_back(v);
    b.push_back(v);
  }
  for (std::uint32_t i = 0; i < only_a; ++i) a.push_back(fresh());
  for (std::uint32_t i = 0; i < only_b; ++i) b.push_back(fresh());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {slash::SparseVector(a, dim), slash::SparseVector(b, dim)};
}

// Zipf-distributed ids in [0, n) with exponent s.
inline std::vector<slash::VectorId> zipf_stream(std::mt19937_64& rng, std::size_t length, std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  std::vector<slash::VectorId> out(length);
  for (auto& x : out) x = d(rng);
  return out;
}

// Exact per-cell sub-streams: for each (row, column), the multiset of ids routed there.
inline std::vector<std::map<slash::VectorId, std::uint64_t>> per_cell_counts(const slash::TopkapiSketch& shape,
                                                                             const std::vector<slash::VectorId>& stream) {
  std::vector<std::map<slash::VectorId, std::uint64_t>> cells(std::size_t{shape.rows()} * shape.cols());
  for (auto id : stream) {
    for (std::uint32_t r = 0; r < shape.rows(); ++r) ++cells[r * std::size_t{shape.cols()} + shape.column(r, id)][id];
  }
  return cells;
}

}  // namespace testing_support
