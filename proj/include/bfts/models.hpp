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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"
#include "bfts/rng.hpp"

namespace bfts {

// Ordered, named parameter matrices of one network.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Matrix> tensors;

  Matrix& operator[](std::size_t i) { return tensors[i]; }
  const Matrix& operator[](std::size_t i) const { return tensors[i]; }
  std::size_t size() const { return tensors.size(); }
  bool operator==(const ParamSet&) const = default;
};

// Parameters recorded on a tape for one forward pass.
struct BoundParams {
  std::vector<Tensor> tensors;

  const Tensor& operator[](std::size_t i) const { return tensors[i]; }
  std::vector<Matrix> grads() const {
    std::vector<Matrix> out;
    out.reserve(tensors.size());
    for (const auto& t : tensors) {
      const Matrix& g = t.grad();
      out.push_back(g.same_shape(t.value()) ? g
                                            : Matrix(t.rows(), t.cols()));
    }
    return out;
  }
};

inline BoundParams bind(Tape& tape, const ParamSet& p, bool requires_grad) {
  BoundParams b;
  for (const auto& m : p.tensors) b.tensors.push_back(tape.leaf(m, requires_grad));
  return b;
}

// Layer indices shared by the GCN and MLP parameter layouts.
enum Layer : std::size_t { kW1 = 0, kB1 = 1, kW2 = 2, kB2 = 3 };

inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data) v = rng.uniform(-limit, limit);
  return w;
}

inline ParamSet two_layer_params(const std::string& prefix, std::size_t in,
                                 std::size_t hidden, std::size_t out,
                                 Rng& rng) {
  ParamSet p;
  p.names = {prefix + "W1", prefix + "b1", prefix + "W2", prefix + "b2"};
  p.tensors.push_back(glorot_uniform(in, hidden, rng));
  p.tensors.emplace_back(1, hidden);
  p.tensors.push_back(glorot_uniform(hidden, out, rng));
  p.tensors.emplace_back(1, out);
  return p;
}

// Two-layer GCN: ReLU(Â X W1 + b1) -> dropout -> Â H W2 + b2.
struct GcnNetwork {
  ParamSet params;
  double dropout_rate = 0.5;

  std::size_t in_dim() const { return params[kW1].rows; }
  std::size_t hidden_dim() const { return params[kW1].cols; }
  std::size_t out_dim() const { return params[kW2].cols; }
};

// Two-layer perceptron over classifier embeddings with a sigmoid head.
struct MlpAdversary {
  ParamSet params;

  std::size_t in_dim() const { return params[kW1].rows; }
  std::size_t hidden_dim() const { return params[kW1].cols; }
};

// Graph-side inputs of a forward pass: the normalized adjacency in sparse
// form and the cached product Â X (X is constant during training).
struct Propagation {
  SparseMatrix a_hat;
  Matrix a_hat_x;

  static Propagation from(const Graph& g) {
    return from(normalized_adjacency(g), g.features());
  }
  static Propagation from(const Matrix& a_hat, const Matrix& features) {
    if (a_hat.rows != a_hat.cols || a_hat.cols != features.rows) {
      throw ShapeError("propagation operator does not match feature rows");
    }
    Propagation p;
    p.a_hat = SparseMatrix::from_dense(a_hat);
    p.a_hat_x = Matrix(features.rows, features.cols);
    spmm(p.a_hat, features, p.a_hat_x);
    return p;
  }
  std::size_t n_nodes() const { return a_hat.rows; }
};

// Per-entry dropout multipliers for the hidden layer of one forward pass.
// Empty means evaluation mode.
struct DropoutMask {
  std::vector<double> factors;

  bool active() const { return !factors.empty(); }

  static DropoutMask none() { return {}; }
  static DropoutMask draw(std::size_t rows, std::size_t cols, double rate,
                          Rng& rng) {
    if (rate <= 0.0) return {};
    return {ad::dropout_factors(rows * cols, rate, rng)};
  }
};

struct ClassifierOutput {
  BoundParams params;
  Tensor h;       // n x hidden embeddings (after dropout at train time)
  Tensor logits;  // n x 1
  Tensor y_hat;   // n x 1 probabilities
};

struct ImputerOutput {
  BoundParams params;
  Tensor logits;  // n x 2
  Tensor probs;   // n x 2, rows sum to 1
  Tensor s_hat;   // n x 1, probability of s = 1
};

namespace model_detail {

inline Tensor gcn_hidden(Tape& tape, const BoundParams& p,
                         const Propagation& prop, const DropoutMask& mask) {
  if (prop.a_hat_x.cols != p[kW1].rows()) {
    throw ShapeError("GCN input dimension " + std::to_string(p[kW1].rows()) +
                     " does not match feature dimension " +
                     std::to_string(prop.a_hat_x.cols));
  }
  Tensor ax = tape.constant(prop.a_hat_x);
  Tensor h = ad::relu(ad::add(ad::matmul(ax, p[kW1]), p[kB1]));
  return mask.active() ? ad::dropout(h, mask.factors) : h;
}

inline Tensor gcn_output(const BoundParams& p, const Propagation& prop,
                         const Tensor& h) {
  return ad::add(ad::propagate(prop.a_hat, ad::matmul(h, p[kW2])), p[kB2]);
}

}  // namespace model_detail

// Draws the hidden-layer dropout mask for net on prop (empty when !train).
inline DropoutMask draw_dropout(const GcnNetwork& net, const Propagation& prop,
                                bool train, Rng& rng) {
  if (!train) return DropoutMask::none();
  return DropoutMask::draw(prop.n_nodes(), net.hidden_dim(), net.dropout_rate,
                           rng);
}

inline ClassifierOutput forward_classifier(Tape& tape, const GcnNetwork& net,
                                           const Propagation& prop,
                                           const DropoutMask& mask,
                                           bool requires_grad = true) {
  if (net.out_dim() != 1) throw ShapeError("classifier head must have 1 output");
  ClassifierOutput out;
  out.params = bind(tape, net.params, requires_grad);
  out.h = model_detail::gcn_hidden(tape, out.params, prop, mask);
  out.logits = model_detail::gcn_output(out.params, prop, out.h);
  out.y_hat = ad::sigmoid(out.logits);
  return out;
}

inline ClassifierOutput forward_classifier(Tape& tape, const GcnNetwork& net,
                                           const Propagation& prop, bool train,
                                           Rng& rng, bool requires_grad = true) {
  return forward_classifier(tape, net, prop, draw_dropout(net, prop, train, rng),
                            requires_grad);
}

inline ImputerOutput forward_imputer(Tape& tape, const GcnNetwork& net,
                                     const Propagation& prop,
                                     const DropoutMask& mask,
                                     bool requires_grad = true) {
  if (net.out_dim() != 2) throw ShapeError("imputer head must have 2 outputs");
  ImputerOutput out;
  out.params = bind(tape, net.params, requires_grad);
  Tensor h = model_detail::gcn_hidden(tape, out.params, prop, mask);
  out.logits = model_detail::gcn_output(out.params, prop, h);
  out.probs = ad::row_softmax(out.logits);
  out.s_hat = ad::column(out.probs, 1);
  return out;
}

inline ImputerOutput forward_imputer(Tape& tape, const GcnNetwork& net,
                                     const Propagation& prop, bool train,
                                     Rng& rng, bool requires_grad = true) {
  return forward_imputer(tape, net, prop, draw_dropout(net, prop, train, rng),
                         requires_grad);
}

struct AdversaryOutput {
  BoundParams params;
  Tensor s_hat;  // n x 1 probabilities
};

inline AdversaryOutput forward_adversary(Tape& tape, const MlpAdversary& mlp,
                                         const Tensor& h,
                                         bool requires_grad = true) {
  if (h.cols() != mlp.in_dim()) {
    throw ShapeError("adversary expects embeddings of width " +
                     std::to_string(mlp.in_dim()) + ", got " +
                     std::to_string(h.cols()));
  }
  AdversaryOutput out;
  out.params = bind(tape, mlp.params, requires_grad);
  Tensor z = ad::relu(ad::add(ad::matmul(h, out.params[kW1]), out.params[kB1]));
  out.s_hat =
      ad::sigmoid(ad::add(ad::matmul(z, out.params[kW2]), out.params[kB2]));
  return out;
}

struct PlayerShapes {
  std::size_t in_features = 0;
  std::size_t hidden_classifier = 64;
  std::size_t hidden_imputer = 64;
  std::size_t hidden_adversary = 32;
  double dropout = 0.5;
};

// The three players' parameters and their optimizer states.
struct PlayerParams {
  GcnNetwork classifier;  // theta_C, "fc."
  GcnNetwork imputer;     // theta_I, "fi."
  MlpAdversary adversary; // theta_A, "fa."
  AdamState opt_classifier;
  AdamState opt_imputer;
  AdamState opt_adversary;

  bool same_weights(const PlayerParams& o) const {
    return classifier.params == o.classifier.params &&
           imputer.params == o.imputer.params &&
           adversary.params == o.adversary.params;
  }
};

// Glorot-uniform weights and zero biases; each player draws from its own
// substream of seed.
inline PlayerParams init_params(const PlayerShapes& s, std::uint64_t seed) {
  if (s.in_features == 0) throw ShapeError("in_features must be positive");
  PlayerParams p;
  Rng rc(seed, Stream::kInitClassifier);
  Rng ri(seed, Stream::kInitImputer);
  Rng ra(seed, Stream::kInitAdversary);
  p.classifier.params =
      two_layer_params("fc.", s.in_features, s.hidden_classifier, 1, rc);
  p.classifier.dropout_rate = s.dropout;
  p.imputer.params =
      two_layer_params("fi.", s.in_features, s.hidden_imputer, 2, ri);
  p.imputer.dropout_rate = s.dropout;
  p.adversary.params =
      two_layer_params("fa.", s.hidden_classifier, s.hidden_adversary, 1, ra);
  return p;
}

inline std::vector<NamedMatrix> to_checkpoint(const PlayerParams& p) {
  std::vector<NamedMatrix> out;
  for (const ParamSet* set :
       {&p.classifier.params, &p.imputer.params, &p.adversary.params}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      out.push_back({set->names[i], set->tensors[i]});
    }
  }
  return out;
}

inline PlayerParams from_checkpoint(const std::vector<NamedMatrix>& tensors,
                                    double dropout = 0.5) {
  PlayerParams p;
  auto fill = [&](ParamSet& set, const std::string& prefix) {
    for (const char* suffix : {"W1", "b1", "W2", "b2"}) {
      const std::string name = prefix + suffix;
      const NamedMatrix* found = nullptr;
      for (const auto& t : tensors) {
        if (t.name == name) found = &t;
      }
      if (!found) throw DataError("checkpoint is missing tensor " + name);
      set.names.push_back(name);
      set.tensors.push_back(found->value);
    }
    if (set[kW1].cols != set[kW2].rows || set[kB1].rows != 1 ||
        set[kB1].cols != set[kW1].cols || set[kB2].rows != 1 ||
        set[kB2].cols != set[kW2].cols) {
      throw DataError("checkpoint tensors for " + prefix +
                      " have inconsistent shapes");
    }
  };
  fill(p.classifier.params, "fc.");
  fill(p.imputer.params, "fi.");
  fill(p.adversary.params, "fa.");
  p.classifier.dropout_rate = dropout;
  p.imputer.dropout_rate = dropout;
  if (p.classifier.out_dim() != 1 || p.imputer.out_dim() != 2 ||
      p.adversary.params[kW2].cols != 1 ||
      p.adversary.in_dim() != p.classifier.hidden_dim()) {
    throw DataError("checkpoint player shapes are inconsistent");
  }
  return p;
}

}  // namespace bfts
