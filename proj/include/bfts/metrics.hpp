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
#include <span>
#include <string>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"

namespace bfts {

inline constexpr double kThreshold = 0.5;

inline std::vector<std::uint8_t> threshold(std::span<const double> soft,
                                           double t = kThreshold) {
  std::vector<std::uint8_t> out(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i) out[i] = soft[i] >= t ? 1 : 0;
  return out;
}

namespace metric_detail {

inline void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
}

}  // namespace metric_detail

// |P(ŷ=1 | s=1) - P(ŷ=1 | s=0)| over the masked nodes.
inline double delta_dp(std::span<const std::uint8_t> y_hat,
                       std::span<const std::uint8_t> s,
                       std::span<const std::uint8_t> mask) {
  metric_detail::check_sizes(y_hat.size(), s.size(), "delta_dp");
  metric_detail::check_sizes(y_hat.size(), mask.size(), "delta_dp");
  double n[2] = {0, 0}, pos[2] = {0, 0};
  for (std::size_t v = 0; v < y_hat.size(); ++v) {
    if (!mask[v]) continue;
    n[s[v]] += 1;
    pos[s[v]] += y_hat[v];
  }
  if (n[0] == 0 || n[1] == 0) {
    throw DegenerateGroupError("delta_dp: a sensitive group is empty");
  }
  return std::abs(pos[1] / n[1] - pos[0] / n[0]);
}

// |TPR(s=1) - TPR(s=0)| over the masked nodes.
inline double delta_eqop(std::span<const std::uint8_t> y_hat,
                         std::span<const std::uint8_t> s,
                         std::span<const std::uint8_t> y,
                         std::span<const std::uint8_t> mask) {
  metric_detail::check_sizes(y_hat.size(), s.size(), "delta_eqop");
  metric_detail::check_sizes(y_hat.size(), y.size(), "delta_eqop");
  metric_detail::check_sizes(y_hat.size(), mask.size(), "delta_eqop");
  double n[2] = {0, 0}, tp[2] = {0, 0};
  for (std::size_t v = 0; v < y_hat.size(); ++v) {
    if (!mask[v] || !y[v]) continue;
    n[s[v]] += 1;
    tp[s[v]] += y_hat[v];
  }
  if (n[0] == 0 || n[1] == 0) {
    throw DegenerateGroupError("delta_eqop: a sensitive group has no positives");
  }
  return std::abs(tp[1] / n[1] - tp[0] / n[0]);
}

// F1 of the positive class; 0 when nothing is predicted positive.
inline double f1(std::span<const std::uint8_t> y_hat,
                 std::span<const std::uint8_t> y,
                 std::span<const std::uint8_t> mask) {
  metric_detail::check_sizes(y_hat.size(), y.size(), "f1");
  metric_detail::check_sizes(y_hat.size(), mask.size(), "f1");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t v = 0; v < y.size(); ++v) {
    if (!mask[v]) continue;
    if (y_hat[v] && y[v]) tp += 1;
    if (y_hat[v] && !y[v]) fp += 1;
    if (!y_hat[v] && y[v]) fn += 1;
  }
  if (tp == 0) return 0.0;
  const double precision = tp / (tp + fp);
  const double recall = tp / (tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

// Step-wise average precision: nodes ranked by descending score (ties keep
// node order), AP = Σ_i (R_i - R_{i-1}) P_i.
inline double avpr(std::span<const double> scores,
                   std::span<const std::uint8_t> y,
                   std::span<const std::uint8_t> mask) {
  metric_detail::check_sizes(scores.size(), y.size(), "avpr");
  metric_detail::check_sizes(scores.size(), mask.size(), "avpr");
  std::vector<std::size_t> idx;
  for (std::size_t v = 0; v < y.size(); ++v) {
    if (mask[v]) idx.push_back(v);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double positives = 0;
  for (auto v : idx) positives += y[v];
  if (positives == 0) throw DataError("avpr: no positive labels");
  double tp = 0, ap = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (!y[idx[i]]) continue;
    tp += 1;
    ap += tp / static_cast<double>(i + 1);
  }
  return ap / positives;
}

// Pearson correlation; 0 when either input has zero variance.
inline double pearson_corr(std::span<const double> a, std::span<const double> b) {
  metric_detail::check_sizes(a.size(), b.size(), "pearson_corr");
  if (a.empty()) throw DataError("pearson_corr: empty input");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

template <typename T>
std::vector<double> as_real(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

// Pair of discrete distributions p(h | s=1), p(h | s=0) over B bins.
struct DiscreteDistPair {
  std::vector<double> p1;
  std::vector<double> p0;

  std::size_t bins() const { return p1.size(); }

  void validate() const {
    if (p1.size() != p0.size() || p1.empty()) {
      throw DataError("DiscreteDistPair: distributions need equal, nonzero bins");
    }
    for (const auto* p : {&p1, &p0}) {
      double s = 0;
      for (double v : *p) {
        if (v < 0) throw DataError("DiscreteDistPair: negative mass");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-12) {
        throw DataError("DiscreteDistPair: distribution does not sum to 1");
      }
    }
  }
};

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

// Jensen-Shannon divergence in nats, in [0, ln 2].
inline double js_divergence(const DiscreteDistPair& d) {
  d.validate();
  std::vector<double> m(d.bins());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (d.p1[i] + d.p0[i]);
  return 0.5 * kl_divergence(d.p1, m) + 0.5 * kl_divergence(d.p0, m);
}

// Bin-wise best response p1 / (p1 + p0) of the sensitive-attribute
// adversary; 0.5 where both masses vanish.
inline std::vector<double> optimal_adversary(const DiscreteDistPair& d) {
  d.validate();
  std::vector<double> f(d.bins());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double z = d.p1[i] + d.p0[i];
    f[i] = z > 0 ? d.p1[i] / z : 0.5;
  }
  return f;
}

// Σ_h p1(h) log f(h) + Σ_h p0(h) log(1 - f(h)); zero-mass bins contribute 0.
inline double adversary_objective(const DiscreteDistPair& d,
                                  std::span<const double> f) {
  double total = 0;
  for (std::size_t i = 0; i < d.bins(); ++i) {
    if (d.p1[i] > 0) total += d.p1[i] * std::log(f[i]);
    if (d.p0[i] > 0) total += d.p0[i] * std::log(1.0 - f[i]);
  }
  return total;
}

// One evaluated run.
struct MetricsRecord {
  std::string mode;
  double alpha = 0;
  double beta = 0;
  double observed_frac = 0;
  std::uint64_t seed = 0;
  double f1 = 0;
  double avpr = 0;
  double delta_dp = 0;
  double delta_eqop = 0;
  double corr_true = 0;
  double corr_imputed = 0;
  double assortativity = 0;
};

inline constexpr const char* kMetricsHeader =
    "mode,alpha,beta,observed_frac,seed,f1,avpr,ddp,deqop,corr_true,"
    "corr_imputed,assortativity";

inline std::string to_csv_row(const MetricsRecord& r) {
  std::string out = r.mode;
  for (double v : {r.alpha, r.beta, r.observed_frac}) out += "," + format_double(v);
  out += "," + std::to_string(r.seed);
  for (double v : {r.f1, r.avpr, r.delta_dp, r.delta_eqop, r.corr_true,
                   r.corr_imputed, r.assortativity}) {
    out += "," + format_double(v);
  }
  return out;
}

struct AuditRow {
  std::string method;
  double corr_imputed = 0;
  double corr_true = 0;
};

// Correlation of each method's (hard) sensitive values with the labels,
// next to the correlation of the true sensitive attribute.
inline std::vector<AuditRow> bias_audit(
    const Graph& g,
    const std::vector<std::pair<std::string, std::vector<double>>>& imputations) {
  const auto y = as_real<std::uint8_t>(g.labels());
  const double truth = pearson_corr(as_real<std::uint8_t>(g.sensitive()), y);
  std::vector<AuditRow> rows;
  for (const auto& [name, s_hat] : imputations) {
    rows.push_back({name, pearson_corr(s_hat, y), truth});
  }
  return rows;
}

}  // namespace bfts
