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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "bfts/error.hpp"
#include "bfts/graph.hpp"
#include "bfts/rng.hpp"

namespace bfts {

// Processes that decide which nodes keep their sensitive value. k always
// counts observed nodes.
enum class MissingnessKind { kMcar, kDegree, kCoverageGreedy, kCoverageExact };

inline std::string to_string(MissingnessKind k) {
  switch (k) {
    case MissingnessKind::kMcar: return "mcar";
    case MissingnessKind::kDegree: return "degree";
    case MissingnessKind::kCoverageGreedy: return "coverage-greedy";
    case MissingnessKind::kCoverageExact: return "coverage-exact";
  }
  return "?";
}

inline MissingnessKind parse_missingness_kind(const std::string& s) {
  if (s == "mcar") return MissingnessKind::kMcar;
  if (s == "degree") return MissingnessKind::kDegree;
  if (s == "coverage-greedy") return MissingnessKind::kCoverageGreedy;
  if (s == "coverage-exact") return MissingnessKind::kCoverageExact;
  throw DataError("unknown missingness kind '" + s + "'");
}

struct MissingnessSpec {
  MissingnessKind kind = MissingnessKind::kDegree;
  std::size_t k_observed = 0;
  std::uint64_t seed = 0;
  std::size_t radius = 1;
};

// Uniformly random k-subset observed.
inline Mask mcar_mask(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw DataError("mcar_mask: k exceeds node count");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, Stream::kMask);
  std::shuffle(order.begin(), order.end(), rng);
  Mask m(n, 0);
  for (std::size_t i = 0; i < k; ++i) m[order[i]] = 1;
  return m;
}

// Hides the n - k lowest-degree nodes (ties: lower index hidden first).
inline Mask degree_adversary(const Graph& g, std::size_t k) {
  const std::size_t n = g.n_nodes();
  if (k > n) throw DataError("degree_adversary: k exceeds node count");
  const auto deg = degrees(g);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return deg[a] < deg[b];
  });
  Mask m(n, 1);
  for (std::size_t i = 0; i < n - k; ++i) m[order[i]] = 0;
  return m;
}

// One candidate set per node: the target nodes it would make predictable
// if its sensitive value were observed.
struct CoverageInstance {
  std::vector<std::vector<std::size_t>> sets;
  std::size_t universe = 0;
};

inline bool is_bias_target(const Graph& g, std::size_t v) {
  const auto s = g.sensitive()[v];
  const auto y = g.labels()[v];
  return (s == 0 && y == 1) || (s == 1 && y == 0);
}

// A node covers every target within `radius` hops (itself included).
inline CoverageInstance build_coverage_instance(const Graph& g,
                                                std::size_t radius = 1) {
  const std::size_t n = g.n_nodes();
  CoverageInstance inst;
  inst.universe = n;
  inst.sets.resize(n);
  std::vector<std::size_t> dist(n);
  const auto unreached = std::numeric_limits<std::size_t>::max();
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), unreached);
    std::queue<std::size_t> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      if (dist[u] == radius) continue;
      for (std::size_t w : g.neighbors()[u]) {
        if (dist[w] == unreached) {
          dist[w] = dist[u] + 1;
          q.push(w);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (dist[v] != unreached && is_bias_target(g, v)) {
        inst.sets[src].push_back(v);
      }
    }
  }
  return inst;
}

struct KUnionResult {
  std::vector<std::size_t> chosen;  // ascending set indices
  std::size_t union_size = 0;
};

inline std::size_t union_size(const CoverageInstance& inst,
                              const std::vector<std::size_t>& chosen) {
  std::vector<std::uint8_t> hit(inst.universe, 0);
  std::size_t total = 0;
  for (auto i : chosen) {
    for (auto item : inst.sets[i]) {
      if (!hit[item]) {
        hit[item] = 1;
        ++total;
      }
    }
  }
  return total;
}

// Picks, k times, the candidate whose addition grows the union least
// (ties: lowest index).
inline KUnionResult greedy_min_k_union(const CoverageInstance& inst,
                                       std::size_t k) {
  const std::size_t m = inst.sets.size();
  if (k > m) throw DataError("greedy_min_k_union: k exceeds number of sets");
  std::vector<std::uint8_t> hit(inst.universe, 0), taken(m, 0);
  KUnionResult r;
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = m, best_gain = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < m; ++i) {
      if (taken[i]) continue;
      std::size_t gain = 0;
      for (auto item : inst.sets[i]) gain += hit[item] ? 0 : 1;
      if (gain < best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    taken[best] = 1;
    r.chosen.push_back(best);
    for (auto item : inst.sets[best]) {
      if (!hit[item]) {
        hit[item] = 1;
        ++r.union_size;
      }
    }
  }
  std::sort(r.chosen.begin(), r.chosen.end());
  return r;
}

inline constexpr std::size_t kMaxExactSets = 20;

// Exhaustive minimum k-union by depth-first enumeration of k-combinations
// with union-size pruning.
inline KUnionResult exact_min_k_union(const CoverageInstance& inst,
                                      std::size_t k) {
  const std::size_t m = inst.sets.size();
  if (m > kMaxExactSets) {
    throw InstanceTooLargeError("exact_min_k_union: " + std::to_string(m) +
                                " sets exceed the limit of " +
                                std::to_string(kMaxExactSets));
  }
  if (k > m) throw DataError("exact_min_k_union: k exceeds number of sets");
  KUnionResult best;
  best.union_size = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> cover(inst.universe, 0);
  std::vector<std::size_t> chosen;
  std::size_t current = 0;

  auto recurse = [&](auto&& self, std::size_t start) -> void {
    if (current >= best.union_size) return;
    if (chosen.size() == k) {
      best.union_size = current;
      best.chosen = chosen;
      return;
    }
    for (std::size_t i = start; i + (k - chosen.size()) <= m; ++i) {
      for (auto item : inst.sets[i]) {
        if (cover[item]++ == 0) ++current;
      }
      chosen.push_back(i);
      self(self, i + 1);
      chosen.pop_back();
      for (auto item : inst.sets[i]) {
        if (--cover[item] == 0) --current;
      }
    }
  };
  recurse(recurse, 0);
  return best;
}

// Observed mask with exactly spec.k_observed entries.
inline Mask make_observed_mask(const Graph& g, const MissingnessSpec& spec) {
  const std::size_t n = g.n_nodes();
  if (spec.k_observed > n) throw DataError("k_observed exceeds node count");
  switch (spec.kind) {
    case MissingnessKind::kMcar:
      return mcar_mask(n, spec.k_observed, spec.seed);
    case MissingnessKind::kDegree:
      return degree_adversary(g, spec.k_observed);
    case MissingnessKind::kCoverageGreedy:
    case MissingnessKind::kCoverageExact: {
      const auto inst = build_coverage_instance(g, spec.radius);
      const auto r = spec.kind == MissingnessKind::kCoverageGreedy
                         ? greedy_min_k_union(inst, spec.k_observed)
                         : exact_min_k_union(inst, spec.k_observed);
      Mask m(n, 0);
      for (auto v : r.chosen) m[v] = 1;
      return m;
    }
  }
  throw DataError("unknown missingness kind");
}

inline std::size_t observed_count(std::size_t n, double frac) {
  if (!(frac >= 0.0 && frac <= 1.0)) {
    throw DataError("observed fraction must lie in [0,1]");
  }
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
}

}  // namespace bfts
