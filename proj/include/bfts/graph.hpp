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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/rng.hpp"

namespace bfts {

using Mask = std::vector<std::uint8_t>;
using Edge = std::pair<std::size_t, std::size_t>;

inline std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(
      m.begin(), m.end(), [](std::uint8_t v) { return v != 0; }));
}

// Node-level data of an undirected graph. Plain aggregate used to build a
// Graph; validation happens in the Graph constructor.
struct GraphData {
  std::size_t n_nodes = 0;
  std::vector<Edge> edges;
  Matrix features;                // n_nodes x d, never contains s
  std::vector<std::uint8_t> labels;     // y in {0,1}
  std::vector<std::uint8_t> sensitive;  // s in {0,1}
  Mask observed;                  // v in V_S
  Mask train;                     // v in V_L
  Mask val;
  Mask test;
};

// Immutable undirected graph with features, labels, sensitive attributes and
// observation/split masks. Edges are stored with u < v in insertion order.
class Graph {
 public:
  Graph() = default;

  explicit Graph(GraphData data) : d_(std::move(data)) {
    const std::size_t n = d_.n_nodes;
    auto check_len = [n](std::size_t len, const char* what) {
      if (len != n) {
        throw DataError(std::string(what) + " has " + std::to_string(len) +
                        " entries, expected " + std::to_string(n));
      }
    };
    check_len(d_.labels.size(), "labels");
    check_len(d_.sensitive.size(), "sensitive");
    if (d_.observed.empty()) d_.observed.assign(n, 0);
    if (d_.train.empty()) d_.train.assign(n, 0);
    if (d_.val.empty()) d_.val.assign(n, 0);
    if (d_.test.empty()) d_.test.assign(n, 0);
    check_len(d_.observed.size(), "observed mask");
    check_len(d_.train.size(), "train mask");
    check_len(d_.val.size(), "val mask");
    check_len(d_.test.size(), "test mask");
    if (d_.features.rows != n) {
      throw DataError("feature matrix has " + std::to_string(d_.features.rows) +
                      " rows, expected " + std::to_string(n));
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (d_.labels[v] > 1 || d_.sensitive[v] > 1) {
        throw DataError("node " + std::to_string(v) +
                        ": labels and sensitive values must be 0 or 1");
      }
      if ((d_.train[v] != 0) + (d_.val[v] != 0) + (d_.test[v] != 0) > 1) {
        throw DataError("node " + std::to_string(v) +
                        " is in more than one of train/val/test");
      }
    }
    std::set<Edge> seen;
    for (auto& e : d_.edges) {
      if (e.first >= n || e.second >= n) {
        throw DataError("edge (" + std::to_string(e.first) + "," +
                        std::to_string(e.second) + ") out of range");
      }
      if (e.first == e.second) {
        throw DataError("self-loop on node " + std::to_string(e.first));
      }
      if (e.first > e.second) std::swap(e.first, e.second);
      if (!seen.insert(e).second) {
        throw DataError("duplicate edge (" + std::to_string(e.first) + "," +
                        std::to_string(e.second) + ")");
      }
    }
    adjacency_.assign(n, {});
    for (const auto& [u, v] : d_.edges) {
      adjacency_[u].push_back(v);
      adjacency_[v].push_back(u);
    }
    for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
  }

  std::size_t n_nodes() const { return d_.n_nodes; }
  std::size_t n_features() const { return d_.features.cols; }
  const std::vector<Edge>& edges() const { return d_.edges; }
  const Matrix& features() const { return d_.features; }
  const std::vector<std::uint8_t>& labels() const { return d_.labels; }
  const std::vector<std::uint8_t>& sensitive() const { return d_.sensitive; }
  const Mask& observed() const { return d_.observed; }
  const Mask& train() const { return d_.train; }
  const Mask& val() const { return d_.val; }
  const Mask& test() const { return d_.test; }
  const std::vector<std::vector<std::size_t>>& neighbors() const {
    return adjacency_;
  }
  const GraphData& data() const { return d_; }

  Graph with_observed(Mask observed) const {
    GraphData d = d_;
    d.observed = std::move(observed);
    return Graph(std::move(d));
  }
  Graph with_splits(Mask train, Mask val, Mask test) const {
    GraphData d = d_;
    d.train = std::move(train);
    d.val = std::move(val);
    d.test = std::move(test);
    return Graph(std::move(d));
  }

  bool operator==(const Graph& o) const {
    const auto& a = d_;
    const auto& b = o.d_;
    return a.n_nodes == b.n_nodes && a.edges == b.edges &&
           a.features == b.features && a.labels == b.labels &&
           a.sensitive == b.sensitive && a.observed == b.observed &&
           a.train == b.train && a.val == b.val && a.test == b.test;
  }

 private:
  GraphData d_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

inline std::vector<std::size_t> degrees(const Graph& g) {
  std::vector<std::size_t> deg(g.n_nodes(), 0);
  for (const auto& [u, v] : g.edges()) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline Matrix normalized_adjacency(const Graph& g) {
  const std::size_t n = g.n_nodes();
  const auto deg = degrees(g);
  std::vector<double> inv_sqrt(n);
  for (std::size_t v = 0; v < n; ++v) {
    inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(deg[v] + 1));
  }
  Matrix a(n, n);
  for (std::size_t v = 0; v < n; ++v) a(v, v) = inv_sqrt[v] * inv_sqrt[v];
  for (const auto& [u, v] : g.edges()) {
    const double w = inv_sqrt[u] * inv_sqrt[v];
    a(u, v) = w;
    a(v, u) = w;
  }
  return a;
}

// Newman's attribute assortativity over the class labels.
inline double label_assortativity(const Graph& g) {
  if (g.edges().empty()) throw DataError("assortativity of an edgeless graph");
  double e[2][2] = {{0, 0}, {0, 0}};
  for (const auto& [u, v] : g.edges()) {
    e[g.labels()[u]][g.labels()[v]] += 1.0;
    e[g.labels()[v]][g.labels()[u]] += 1.0;
  }
  const double total = 2.0 * static_cast<double>(g.edges().size());
  double trace = 0.0, ab = 0.0;
  for (int i = 0; i < 2; ++i) {
    trace += e[i][i] / total;
    const double a = (e[i][0] + e[i][1]) / total;
    const double b = (e[0][i] + e[1][i]) / total;
    ab += a * b;
  }
  const double denom = 1.0 - ab;
  if (std::abs(denom) < 1e-15) return 1.0;
  return (trace - ab) / denom;
}

// Stochastic block model benchmark. Block 0 carries label y=1 (majority,
// desired class); every other block carries y=0.
struct SbmConfig {
  std::vector<std::size_t> block_sizes{600, 400};
  double p_in = 0.03;
  double p_out = 0.002;
  double p_bias = 0.7;  // P(s=1 | y=1); P(s=1 | y=0) = 1 - p_bias
  std::size_t n_features = 20;
  std::size_t n_noise = 8;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  // Random node splits drawn after generation; the rest is the test set.
  double train_frac = 0.3;
  double val_frac = 0.2;

  std::size_t n_nodes() const {
    return std::accumulate(block_sizes.begin(), block_sizes.end(),
                           std::size_t{0});
  }

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw DataError(std::string(name) + " must lie in [0,1]");
      }
    };
    prob(p_in, "p_in");
    prob(p_out, "p_out");
    prob(p_bias, "p_bias");
    prob(train_frac, "train_frac");
    prob(val_frac, "val_frac");
    if (train_frac + val_frac > 1.0) {
      throw DataError("train_frac + val_frac must not exceed 1");
    }
    if (n_nodes() == 0) throw DataError("SBM with zero nodes");
    if (n_noise > n_features) throw DataError("n_noise exceeds n_features");
  }
};

// Uniformly random train/val/test split with the given counts.
inline Graph assign_random_splits(const Graph& g, std::size_t n_train,
                                  std::size_t n_val, std::uint64_t seed) {
  const std::size_t n = g.n_nodes();
  if (n_train + n_val > n) throw DataError("split sizes exceed node count");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, Stream::kSplits);
  std::shuffle(order.begin(), order.end(), rng);
  Mask train(n, 0), val(n, 0), test(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      train[order[i]] = 1;
    } else if (i < n_train + n_val) {
      val[order[i]] = 1;
    } else {
      test[order[i]] = 1;
    }
  }
  return g.with_splits(std::move(train), std::move(val), std::move(test));
}

// Samples an SBM graph. Every stage draws from its own substream of
// cfg.seed. All nodes start observed.
inline Graph generate_sbm(const SbmConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_nodes();
  std::vector<std::size_t> block(n);
  {
    std::size_t v = 0;
    for (std::size_t b = 0; b < cfg.block_sizes.size(); ++b) {
      for (std::size_t i = 0; i < cfg.block_sizes[b]; ++i) block[v++] = b;
    }
  }
  GraphData d;
  d.n_nodes = n;
  d.labels.resize(n);
  for (std::size_t v = 0; v < n; ++v) d.labels[v] = block[v] == 0 ? 1 : 0;

  Rng edge_rng(cfg.seed, Stream::kEdges);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = block[u] == block[v] ? cfg.p_in : cfg.p_out;
      if (edge_rng.uniform() < p) d.edges.emplace_back(u, v);
    }
  }

  Rng s_rng(cfg.seed, Stream::kSensitive);
  d.sensitive.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double p1 = d.labels[v] ? cfg.p_bias : 1.0 - cfg.p_bias;
    d.sensitive[v] = s_rng.uniform() < p1 ? 1 : 0;
  }

  Rng x_rng(cfg.seed, Stream::kFeatures);
  const std::size_t n_signal = cfg.n_features - cfg.n_noise;
  d.features = Matrix(n, cfg.n_features);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < cfg.n_features; ++j) {
      const double shift = j < n_signal ? cfg.gamma * d.labels[v] : 0.0;
      d.features(v, j) = shift + x_rng.normal();
    }
  }
  d.observed.assign(n, 1);
  Graph g(std::move(d));
  const auto n_train = static_cast<std::size_t>(
      std::llround(cfg.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::llround(cfg.val_frac * static_cast<double>(n)));
  return assign_random_splits(g, n_train, n_val, cfg.seed);
}

}  // namespace bfts
