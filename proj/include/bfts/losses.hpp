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
#include <span>
#include <string>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"

namespace bfts {

// Binary cross-entropy of probabilities y_hat (n x 1) against labels over
// the nodes of train_mask.
inline Tensor classification_loss(const Tensor& y_hat,
                                  std::span<const std::uint8_t> labels,
                                  std::span<const std::uint8_t> train_mask) {
  Tape& t = *y_hat.tape();
  if (y_hat.cols() != 1 || y_hat.rows() != labels.size()) {
    throw ShapeError("classification_loss: prediction/label shape mismatch");
  }
  std::vector<double> y;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (train_mask[v]) y.push_back(labels[v]);
  }
  if (y.empty()) throw DataError("classification_loss: empty training mask");
  std::vector<double> not_y(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) not_y[i] = 1.0 - y[i];
  Tensor p = ad::select_rows(y_hat, train_mask);
  Tensor pos = ad::mul(t.constant(Matrix::column(y)), ad::log(p));
  Tensor neg = ad::mul(t.constant(Matrix::column(not_y)),
                       ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0)));
  return ad::scale(ad::sum(ad::add(pos, neg)),
                   -1.0 / static_cast<double>(y.size()));
}

// Per-class margins C / n_j^{1/4} of the label-distribution-aware loss.
struct LdamMargins {
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  double delta0 = 0.0;
  double delta1 = 0.0;
  double c = 0.0;

  static LdamMargins compute(std::span<const std::uint8_t> targets,
                             std::span<const std::uint8_t> pool, double c) {
    LdamMargins m;
    m.c = c;
    for (std::size_t v = 0; v < targets.size(); ++v) {
      if (!pool[v]) continue;
      (targets[v] ? m.n1 : m.n0) += 1;
    }
    if (m.n0 == 0 || m.n1 == 0) {
      throw DegenerateGroupError(
          "LDAM margins undefined: a class is absent from the pool");
    }
    m.delta0 = c / std::pow(static_cast<double>(m.n0), 0.25);
    m.delta1 = c / std::pow(static_cast<double>(m.n1), 0.25);
    return m;
  }

  // No margins: plain softmax cross-entropy.
  static LdamMargins zero() { return {}; }

  double delta(std::uint8_t cls) const { return cls ? delta1 : delta0; }
};

// Mean over pool of -log softmax(z - Δ^{target} e_{target})[target].
inline Tensor imputation_loss(const Tensor& logits,
                              std::span<const std::uint8_t> targets,
                              std::span<const std::uint8_t> pool,
                              const LdamMargins& margins) {
  Tape& t = *logits.tape();
  if (logits.cols() != 2 || logits.rows() != targets.size() ||
      pool.size() != targets.size()) {
    throw ShapeError("imputation_loss: logits must be n x 2 with n targets");
  }
  Matrix margin(0, 2), onehot(0, 2);
  for (std::size_t v = 0; v < targets.size(); ++v) {
    if (!pool[v]) continue;
    const std::uint8_t s = targets[v];
    margin.rows += 1;
    onehot.rows += 1;
    margin.data.push_back(s ? 0.0 : margins.delta0);
    margin.data.push_back(s ? margins.delta1 : 0.0);
    onehot.data.push_back(s ? 0.0 : 1.0);
    onehot.data.push_back(s ? 1.0 : 0.0);
  }
  if (margin.rows == 0) throw DataError("imputation_loss: empty pool");
  const double inv = 1.0 / static_cast<double>(margin.rows);
  Tensor z = ad::sub(ad::select_rows(logits, pool), t.constant(std::move(margin)));
  Tensor lp = ad::row_log_softmax(z);
  return ad::scale(ad::sum(ad::mul(lp, t.constant(std::move(onehot)))), -inv);
}

enum class SensitiveSource : std::uint8_t { kObserved, kImputed, kLabelProxy };
enum class SensitiveMode { kObserved, kLabelProxy };

// Soft sensitive values that feed the adversary: ground truth on V_S, the
// imputer's probability elsewhere.
struct MergedSensitive {
  Tensor s_hat;  // n x 1, on the imputer's tape
  std::vector<SensitiveSource> source;

  std::vector<double> values() const { return s_hat.value().data; }
};

inline MergedSensitive merge_sensitive(const Tensor& s_imputed, const Graph& g,
                                       SensitiveMode mode) {
  Tape& t = *s_imputed.tape();
  const std::size_t n = g.n_nodes();
  if (s_imputed.rows() != n || s_imputed.cols() != 1) {
    throw ShapeError("merge_sensitive: imputations must be n x 1");
  }
  MergedSensitive out;
  if (mode == SensitiveMode::kLabelProxy) {
    out.s_hat = s_imputed;
    out.source.assign(n, SensitiveSource::kLabelProxy);
    return out;
  }
  if (count(g.observed()) == 0) {
    throw DataError(
        "merge_sensitive: no observed sensitive values; use label-proxy mode");
  }
  Matrix keep(n, 1), fixed(n, 1);
  out.source.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    const bool obs = g.observed()[v] != 0;
    keep.data[v] = obs ? 0.0 : 1.0;
    fixed.data[v] = obs ? static_cast<double>(g.sensitive()[v]) : 0.0;
    out.source[v] = obs ? SensitiveSource::kObserved : SensitiveSource::kImputed;
  }
  out.s_hat = ad::add(ad::mul(s_imputed, t.constant(std::move(keep))),
                      t.constant(std::move(fixed)));
  return out;
}

// Total soft weight of each group on the mask: {Σ s, Σ (1 - s)}.
inline std::pair<double, double> group_weights(std::span<const double> s_hat,
                                               std::span<const std::uint8_t> mask) {
  double w1 = 0.0, w0 = 0.0;
  for (std::size_t v = 0; v < s_hat.size(); ++v) {
    if (!mask[v]) continue;
    w1 += s_hat[v];
    w0 += 1.0 - s_hat[v];
  }
  return {w1, w0};
}

inline constexpr double kMinGroupWeight = 1e-9;

// Soft-weighted empirical form of
//   E_{h|s=1}[log f_A(h)] + E_{h|s=0}[log(1 - f_A(h))]
// over the nodes of mask. Always <= 0.
inline Tensor adversary_loss(const Tensor& sa, const Tensor& s_hat,
                             std::span<const std::uint8_t> mask) {
  if (sa.rows() != s_hat.rows() || sa.cols() != 1 || s_hat.cols() != 1 ||
      mask.size() != sa.rows()) {
    throw ShapeError("adversary_loss: inputs must be n x 1 with an n-mask");
  }
  const auto [w1, w0] = group_weights(s_hat.value().data, mask);
  if (w1 <= kMinGroupWeight || w0 <= kMinGroupWeight) {
    throw DegenerateGroupError("adversary_loss: a sensitive group has no weight");
  }
  Tensor p = ad::select_rows(sa, mask);
  Tensor s = ad::select_rows(s_hat, mask);
  Tensor not_s = ad::add_scalar(ad::scale(s, -1.0), 1.0);
  Tensor not_p = ad::add_scalar(ad::scale(p, -1.0), 1.0);
  Tensor num1 = ad::sum(ad::mul(s, ad::log(p)));
  Tensor num0 = ad::sum(ad::mul(not_s, ad::log(not_p)));
  return ad::add(ad::div(num1, ad::sum(s)), ad::div(num0, ad::sum(not_s)));
}

}  // namespace bfts
