// Copyright 2026 The BFtS Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "bfts/missingness.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace bfts {
namespace {

using testing::make_graph;
using testing::bitmask_min_union;
using testing::path_edges;

std::vector<std::size_t> observed_nodes(const Mask& m) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (m[v]) out.push_back(v);
  }
  return out;
}

std::vector<Edge> star_edges(std::size_t leaves) {
  std::vector<Edge> e;
  for (std::size_t v = 1; v <= leaves; ++v) e.emplace_back(0, v);
  return e;
}

CoverageInstance random_instance(Rng& rng, std::size_t sets, std::size_t universe) {
  CoverageInstance inst;
  inst.universe = universe;
  inst.sets.resize(sets);
  for (auto& s : inst.sets) {
    for (std::size_t item = 0; item < universe; ++item) {
      if (rng.bernoulli(0.25)) s.push_back(item);
    }
  }
  return inst;
}

TEST(Mcar, ExtremesAndCount) {
  EXPECT_EQ(mcar_mask(10, 10, 1), Mask(10, 1));
  EXPECT_EQ(mcar_mask(10, 0, 1), Mask(10, 0));
  EXPECT_EQ(observed_nodes(mcar_mask(50, 17, 3)).size(), 17u);
  EXPECT_EQ(mcar_mask(50, 17, 3), mcar_mask(50, 17, 3));
  EXPECT_NE(mcar_mask(50, 17, 3), mcar_mask(50, 17, 4));
  EXPECT_THROW(mcar_mask(3, 4, 0), DataError);
}

TEST(Mcar, EachNodeObservedAtRateKOverN) {
  const std::size_t n = 20, k = 6, trials = 1000;
  std::vector<double> hits(n, 0);
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    const Mask m = mcar_mask(n, k, seed);
    for (std::size_t v = 0; v < n; ++v) hits[v] += m[v];
  }
  const double p = static_cast<double>(k) / n;
  const double sigma = std::sqrt(trials * p * (1 - p));
  for (std::size_t v = 0; v < n; ++v) {
    EXPECT_NEAR(hits[v], trials * p, 3.0 * sigma + 1.0) << v;
  }
}

TEST(DegreeAdversary, StarKeepsCenter) {
  const Graph g = make_graph(6, star_edges(5));
  EXPECT_EQ(observed_nodes(degree_adversary(g, 1)), (std::vector<std::size_t>{0}));
}

TEST(DegreeAdversary, PathHidesEndpoints) {
  const Graph g = make_graph(4, path_edges(4));
  EXPECT_EQ(observed_nodes(degree_adversary(g, 2)), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(degree_adversary(g, 4), Mask(4, 1));
  EXPECT_THROW(degree_adversary(g, 5), DataError);
}

TEST(DegreeAdversary, TiesHideLowerIndexFirst) {
  const Graph g = make_graph(5, {});
  EXPECT_EQ(observed_nodes(degree_adversary(g, 2)), (std::vector<std::size_t>{3, 4}));
}

TEST(DegreeAdversary, InvariantToEdgeOrder) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed, Stream::kTest);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < 15; ++u) {
      for (std::size_t v = u + 1; v < 15; ++v) {
        if (rng.bernoulli(0.2)) edges.emplace_back(u, v);
      }
    }
    std::vector<Edge> shuffled = edges;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& [u, v] : shuffled) {
      if (rng.bernoulli(0.5)) std::swap(u, v);
    }
    EXPECT_EQ(degree_adversary(make_graph(15, edges), 6),
              degree_adversary(make_graph(15, shuffled), 6));
  }
}

TEST(DegreeAdversary, ObservedDegreesDominateHidden) {
  const Graph g = generate_sbm(testing::tiny_sbm(2));
  const Mask m = degree_adversary(g, 20);
  const auto deg = degrees(g);
  std::size_t min_obs = SIZE_MAX, max_hidden = 0;
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (m[v]) min_obs = std::min(min_obs, deg[v]);
    else max_hidden = std::max(max_hidden, deg[v]);
  }
  EXPECT_GE(min_obs, max_hidden);
}

TEST(Coverage, TargetsAreMismatchedNodes) {
  const Graph g = make_graph(4, {}, {0, 1, 0, 1}, {0, 0, 1, 1});
  EXPECT_FALSE(is_bias_target(g, 0));
  EXPECT_TRUE(is_bias_target(g, 1));
  EXPECT_TRUE(is_bias_target(g, 2));
  EXPECT_FALSE(is_bias_target(g, 3));
}

TEST(Coverage, RadiusZeroCoversSelf) {
  const Graph g = make_graph(4, path_edges(4), {0, 1, 0, 1}, {0, 0, 1, 1});
  const auto inst = build_coverage_instance(g, 0);
  EXPECT_EQ(inst.sets, (std::vector<std::vector<std::size_t>>{{}, {1}, {2}, {}}));
}

TEST(Coverage, CompleteGraphCoversAllTargets) {
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < 5; ++u) {
    for (std::size_t v = u + 1; v < 5; ++v) edges.emplace_back(u, v);
  }
  const Graph g = make_graph(5, edges, {1, 1, 0, 0, 1}, {0, 1, 1, 0, 0});
  for (const auto& s : build_coverage_instance(g, 1).sets) {
    EXPECT_EQ(s, (std::vector<std::size_t>{0, 2, 4}));
  }
}

TEST(Coverage, PathMatchesHopDistance) {
  // Path 0-1-2-3-4-5; targets are the nodes with y=1, s=0.
  const Graph g = make_graph(6, path_edges(6), {1, 0, 1, 0, 0, 1}, {0, 0, 0, 0, 0, 0});
  const auto r1 = build_coverage_instance(g, 1);
  EXPECT_EQ(r1.sets[0], (std::vector<std::size_t>{0}));
  EXPECT_EQ(r1.sets[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(r1.sets[3], (std::vector<std::size_t>{2}));
  EXPECT_EQ(r1.sets[4], (std::vector<std::size_t>{5}));
  const auto r2 = build_coverage_instance(g, 2);
  EXPECT_EQ(r2.sets[3], (std::vector<std::size_t>{2, 5}));
  EXPECT_EQ(r2.sets[0], (std::vector<std::size_t>{0, 2}));
}

TEST(MinKUnion, DisjointSingletons) {
  CoverageInstance inst{{{0}, {1}, {2}, {3}}, 4};
  EXPECT_EQ(greedy_min_k_union(inst, 2).union_size, 2u);
  EXPECT_EQ(exact_min_k_union(inst, 2).union_size, 2u);
}

TEST(MinKUnion, EmptySetPickedFirst) {
  CoverageInstance inst{{{0, 1}, {2}, {}, {1, 3}}, 4};
  const auto r = greedy_min_k_union(inst, 1);
  EXPECT_EQ(r.chosen, (std::vector<std::size_t>{2}));
  EXPECT_EQ(r.union_size, 0u);
}

TEST(MinKUnion, ExtremesOfK) {
  Rng rng(3);
  const auto inst = random_instance(rng, 8, 12);
  EXPECT_EQ(exact_min_k_union(inst, 0).union_size, 0u);
  std::vector<std::size_t> all(8);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(exact_min_k_union(inst, 8).union_size, union_size(inst, all));
  EXPECT_EQ(greedy_min_k_union(inst, 8).union_size, union_size(inst, all));
}

TEST(MinKUnion, GreedyNeverBeatsExact) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed, Stream::kTest, 1);
    const auto inst = random_instance(rng, 8, 14);
    for (std::size_t k = 0; k <= 8; ++k) {
      const auto g = greedy_min_k_union(inst, k);
      const auto e = exact_min_k_union(inst, k);
      EXPECT_GE(g.union_size, e.union_size);
      EXPECT_EQ(g.chosen.size(), k);
      EXPECT_EQ(union_size(inst, g.chosen), g.union_size);
      EXPECT_EQ(union_size(inst, e.chosen), e.union_size);
    }
  }
}

TEST(MinKUnion, ExactMatchesBitmaskEnumeration) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed, Stream::kTest, 2);
    const auto inst = random_instance(rng, 10, 16);
    const std::size_t k = seed % 11;
    EXPECT_EQ(exact_min_k_union(inst, k).union_size, bitmask_min_union(inst, k)) << seed;
  }
}

TEST(MinKUnion, LimitsAreEnforced) {
  CoverageInstance big;
  big.universe = 1;
  big.sets.resize(kMaxExactSets + 1);
  EXPECT_THROW(exact_min_k_union(big, 2), InstanceTooLargeError);
  CoverageInstance small{{{0}}, 1};
  EXPECT_THROW(greedy_min_k_union(small, 2), DataError);
  EXPECT_THROW(exact_min_k_union(small, 2), DataError);
}

TEST(ObservedMask, EveryKindHonoursK) {
  const Graph g = make_graph(12, path_edges(12), {1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0},
                             {0, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 1});
  for (auto kind : {MissingnessKind::kMcar, MissingnessKind::kDegree,
                    MissingnessKind::kCoverageGreedy, MissingnessKind::kCoverageExact}) {
    MissingnessSpec spec{kind, 5, 7, 1};
    EXPECT_EQ(observed_nodes(make_observed_mask(g, spec)).size(), 5u) << to_string(kind);
    EXPECT_EQ(parse_missingness_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_missingness_kind("random"), DataError);
  EXPECT_THROW(make_observed_mask(g, {MissingnessKind::kMcar, 13, 0, 1}), DataError);
}

TEST(ObservedMask, CoverageExactTooLargeIsReported) {
  const Graph g = make_graph(25, path_edges(25));
  EXPECT_THROW(make_observed_mask(g, {MissingnessKind::kCoverageExact, 3, 0, 1}),
               InstanceTooLargeError);
}

TEST(ObservedCount, RoundsAndValidates) {
  EXPECT_EQ(observed_count(1000, 0.3), 300u);
  EXPECT_EQ(observed_count(7, 0.5), 4u);
  EXPECT_THROW(observed_count(10, 1.5), DataError);
  EXPECT_THROW(observed_count(10, std::nan("")), DataError);
}

}  // namespace
}  // namespace bfts
