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

// Self-check suite behind `bfts verify`. Each check compares the library
// against an independent oracle; a named check can be forced to fail to
// exercise the reporting path.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"
#include "bfts/losses.hpp"
#include "bfts/metrics.hpp"
#include "bfts/missingness.hpp"
#include "bfts/models.hpp"
#include "bfts/rng.hpp"
#include "bfts/training.hpp"

namespace bfts {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace verify_detail {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Norm-wise relative error between the tape gradient of f at x and a central
// finite difference with step h.
inline double gradient_error(const ScalarFn& f, const Matrix& x, double h = 1e-5) {
  Tape tape;
  Tensor leaf = tape.leaf(x, true);
  Tensor out = f(tape, leaf);
  tape.backward(out);
  const Matrix analytic = leaf.grad();
  Matrix numeric(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto eval = [&](double delta) {
      Matrix xp = x;
      xp.data[i] += delta;
      Tape t;
      return f(t, t.leaf(xp, true)).item();
    };
    numeric.data[i] = (eval(h) - eval(-h)) / (2.0 * h);
  }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    diff += (analytic.data[i] - numeric.data[i]) * (analytic.data[i] - numeric.data[i]);
    na += analytic.data[i] * analytic.data[i];
    nn += numeric.data[i] * numeric.data[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

// A weighted sum gives every output entry a distinct upstream gradient.
inline Tensor reduce(Tape& t, const Tensor& y, Rng& rng) {
  Tensor w = t.constant(random_matrix(y.rows(), y.cols(), rng));
  return ad::sum(ad::mul(y, w));
}

struct OpCase {
  std::string name;
  std::size_t rows, cols;
  double lo, hi;
  std::function<Tensor(Tape&, const Tensor&, Rng&)> body;
};

inline std::vector<OpCase> op_cases() {
  using ad::scale;
  std::vector<OpCase> cases;
  cases.push_back({"matmul", 3, 4, -1, 1, [](Tape& t, const Tensor& x, Rng& r) {
                     Tensor b = t.constant(random_matrix(4, 2, r));
                     Tensor a = t.constant(random_matrix(2, 3, r));
                     return ad::matmul(a, ad::matmul(x, b));
                   }});
  // propagate holds its operator by reference, so the operators live here.
  static const Matrix dense_op = [] {
    Rng r(42);
    return random_matrix(4, 4, r);
  }();
  static const SparseMatrix sparse_op = [] {
    Matrix m = dense_op;
    m(0, 1) = 0;
    m(2, 3) = 0;
    return SparseMatrix::from_dense(m);
  }();
  cases.push_back({"propagate-dense", 4, 3, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     return ad::propagate(dense_op, x);
                   }});
  cases.push_back({"propagate-sparse", 4, 3, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     return ad::propagate(sparse_op, x);
                   }});
  cases.push_back({"add-broadcast", 3, 4, -1, 1, [](Tape& t, const Tensor& x, Rng& r) {
                     Tensor b = t.constant(random_matrix(1, 4, r));
                     return ad::add(ad::add(x, b), ad::mul(x, x));
                   }});
  cases.push_back({"bias-grad", 1, 4, -1, 1, [](Tape& t, const Tensor& x, Rng& r) {
                     Tensor a = t.constant(random_matrix(3, 4, r));
                     return ad::add(a, x);
                   }});
  cases.push_back({"sub-mul", 3, 3, -1, 1, [](Tape& t, const Tensor& x, Rng& r) {
                     Tensor a = t.constant(random_matrix(3, 3, r));
                     return ad::mul(ad::sub(a, x), x);
                   }});
  cases.push_back({"div", 3, 3, 0.5, 2, [](Tape& t, const Tensor& x, Rng& r) {
                     Tensor a = t.constant(random_matrix(3, 3, r));
                     return ad::add(ad::div(a, x), ad::div(x, ad::add_scalar(ad::mul(x, x), 1.0)));
                   }});
  cases.push_back({"scale-add-scalar", 2, 5, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     return ad::add_scalar(scale(x, -2.5), 0.75);
                   }});
  cases.push_back({"relu", 4, 4, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     return ad::relu(x);
                   }});
  cases.push_back({"sigmoid", 4, 4, -4, 4, [](Tape&, const Tensor& x, Rng&) {
                     return ad::sigmoid(x);
                   }});
  cases.push_back({"log", 4, 4, 0.1, 3, [](Tape&, const Tensor& x, Rng&) {
                     return ad::log(x);
                   }});
  cases.push_back({"exp", 4, 4, -2, 2, [](Tape&, const Tensor& x, Rng&) {
                     return ad::exp(x);
                   }});
  cases.push_back({"row-softmax", 4, 3, -3, 3, [](Tape&, const Tensor& x, Rng&) {
                     return ad::row_softmax(x);
                   }});
  cases.push_back({"row-log-softmax", 4, 3, -3, 3, [](Tape&, const Tensor& x, Rng&) {
                     return ad::row_log_softmax(x);
                   }});
  cases.push_back({"mean", 3, 4, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     return ad::mean(ad::mul(x, x));
                   }});
  cases.push_back({"concat-rows", 2, 3, -1, 1, [](Tape& t, const Tensor& x, Rng& r) {
                     Tensor a = t.constant(random_matrix(3, 3, r));
                     return ad::concat_rows(ad::mul(x, x), ad::concat_rows(a, x));
                   }});
  cases.push_back({"select-rows", 5, 2, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     static const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
                     return ad::select_rows(ad::mul(x, x), mask);
                   }});
  cases.push_back({"column", 4, 3, -1, 1, [](Tape&, const Tensor& x, Rng&) {
                     return ad::column(ad::mul(x, x), 1);
                   }});
  cases.push_back({"dropout", 4, 4, -1, 1, [](Tape&, const Tensor& x, Rng& r) {
                     return ad::dropout(x, ad::dropout_factors(16, 0.5, r));
                   }});
  return cases;
}

}  // namespace verify_detail

// Finite-difference agreement of every autodiff op over `seeds` draws.
inline CheckResult check_gradients(std::size_t seeds, bool inject) {
  using namespace verify_detail;
  CheckResult res{"gradients", true, ""};
  double worst = 0;
  std::string worst_op;
  for (const auto& c : op_cases()) {
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(1000 + s, Stream::kTest, c.name.size());
      Matrix x = random_matrix(c.rows, c.cols, rng, c.lo, c.hi);
      const std::uint64_t body_seed = rng();
      ScalarFn f = [&](Tape& t, const Tensor& in) {
        Rng r(body_seed);
        Tensor y = c.body(t, in, r);
        return reduce(t, y, r);
      };
      double err = gradient_error(f, x);
      if (inject && c.name == "matmul") err += 1.0;
      if (err > worst) {
        worst = err;
        worst_op = c.name;
      }
    }
  }
  res.passed = worst <= 1e-4;
  std::ostringstream d;
  d << "worst relative error " << worst << " (" << worst_op << ")";
  res.detail = d.str();
  return res;
}

// Counting metrics against direct enumeration on random small instances.
inline CheckResult check_metric_oracles(std::size_t instances, bool inject) {
  CheckResult res{"metric-oracles", true, ""};
  std::size_t compared = 0;
  for (std::size_t i = 0; i < instances && res.passed; ++i) {
    Rng rng(i, Stream::kTest, 7);
    const std::size_t n = 4 + static_cast<std::size_t>(rng.uniform() * 17);
    std::vector<std::uint8_t> y(n), yh(n), s(n), mask(n);
    std::vector<double> score(n);
    for (std::size_t v = 0; v < n; ++v) {
      y[v] = rng.bernoulli(0.5);
      yh[v] = rng.bernoulli(0.5);
      s[v] = rng.bernoulli(0.5);
      mask[v] = rng.bernoulli(0.8);
      score[v] = std::floor(rng.uniform() * 8) / 8;  // forces ties
    }
    // Rates per group by direct counting.
    double pos[2] = {0, 0}, tot[2] = {0, 0}, tp_g[2] = {0, 0}, p_g[2] = {0, 0};
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (!mask[v]) continue;
      tot[s[v]] += 1;
      pos[s[v]] += yh[v];
      if (y[v]) {
        p_g[s[v]] += 1;
        tp_g[s[v]] += yh[v];
      }
      tp += y[v] && yh[v];
      fp += !y[v] && yh[v];
      fn += y[v] && !yh[v];
    }
    if (tot[0] > 0 && tot[1] > 0) {
      double got = delta_dp(yh, s, mask);
      if (inject) got += 0.25;
      if (std::abs(got - std::abs(pos[1] / tot[1] - pos[0] / tot[0])) > 1e-12) {
        res.passed = false;
        res.detail = "delta_dp mismatch on instance " + std::to_string(i);
      }
      ++compared;
    }
    if (p_g[0] > 0 && p_g[1] > 0) {
      const double want = std::abs(tp_g[1] / p_g[1] - tp_g[0] / p_g[0]);
      if (std::abs(delta_eqop(yh, s, y, mask) - want) > 1e-12) {
        res.passed = false;
        res.detail = "delta_eqop mismatch on instance " + std::to_string(i);
      }
    }
    const double f1_want = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    if (std::abs(f1(yh, y, mask) - f1_want) > 1e-12) {
      res.passed = false;
      res.detail = "f1 mismatch on instance " + std::to_string(i);
    }
    // Average precision as the mean over positives of precision at the
    // positive's rank, with ties ranked by node order.
    double npos = 0;
    for (std::size_t v = 0; v < n; ++v) npos += mask[v] && y[v];
    if (npos > 0) {
      double ap = 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (!mask[v] || !y[v]) continue;
        double rank = 0, hits = 0;
        for (std::size_t u = 0; u < n; ++u) {
          if (!mask[u]) continue;
          const bool before = score[u] > score[v] || (score[u] == score[v] && u <= v);
          if (before) {
            rank += 1;
            hits += y[u];
          }
        }
        ap += hits / rank;
      }
      ap /= npos;
      if (std::abs(avpr(score, y, mask) - ap) > 1e-12) {
        res.passed = false;
        res.detail = "avpr mismatch on instance " + std::to_string(i);
      }
    }
  }
  if (res.passed) {
    res.detail = std::to_string(instances) + " instances, " +
                 std::to_string(compared) + " with both groups";
  }
  return res;
}

// exact_min_k_union against enumeration of every k-subset by bitmask.
inline CheckResult check_min_k_union(std::size_t instances, bool inject) {
  CheckResult res{"min-k-union", true, ""};
  std::size_t greedy_optimal = 0;
  for (std::size_t i = 0; i < instances && res.passed; ++i) {
    Rng rng(i, Stream::kTest, 11);
    CoverageInstance inst;
    const std::size_t m = 2 + static_cast<std::size_t>(rng.uniform() * 11);
    inst.universe = 4 + static_cast<std::size_t>(rng.uniform() * 12);
    std::vector<std::uint32_t> bits(m, 0);
    inst.sets.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t e = 0; e < inst.universe; ++e) {
        if (rng.bernoulli(0.3)) {
          inst.sets[j].push_back(e);
          bits[j] |= 1u << e;
        }
      }
    }
    const std::size_t k = static_cast<std::size_t>(rng.uniform() * (m + 1));
    int best = std::numeric_limits<int>::max();
    for (std::uint32_t sel = 0; sel < (1u << m); ++sel) {
      if (static_cast<std::size_t>(std::popcount(sel)) != k) continue;
      std::uint32_t u = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (sel >> j & 1u) u |= bits[j];
      }
      best = std::min(best, std::popcount(u));
    }
    std::size_t exact = exact_min_k_union(inst, k).union_size;
    if (inject) exact += 1;
    const std::size_t greedy = greedy_min_k_union(inst, k).union_size;
    if (exact != static_cast<std::size_t>(best) || greedy < exact) {
      res.passed = false;
      res.detail = "instance " + std::to_string(i) + ": exact " + std::to_string(exact) +
                   " greedy " + std::to_string(greedy) + " oracle " + std::to_string(best);
    }
    greedy_optimal += greedy == exact;
  }
  if (res.passed) {
    res.detail = "greedy optimal on " + std::to_string(greedy_optimal) + "/" +
                 std::to_string(instances);
  }
  return res;
}

// Adversary objective at the bin-wise optimum equals -log 4 + 2 JS.
inline CheckResult check_js_identity(std::size_t instances, bool inject) {
  CheckResult res{"js-identity", true, ""};
  double worst = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(i, Stream::kTest, 13);
    const std::size_t bins = 2 + static_cast<std::size_t>(rng.uniform() * 7);
    DiscreteDistPair d;
    d.p1.resize(bins);
    d.p0.resize(bins);
    double z1 = 0, z0 = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      d.p1[b] = rng.bernoulli(0.15) ? 0.0 : rng.uniform();
      d.p0[b] = rng.bernoulli(0.15) ? 0.0 : rng.uniform();
      z1 += d.p1[b];
      z0 += d.p0[b];
    }
    if (z1 == 0) d.p1[0] = z1 = 1;
    if (z0 == 0) d.p0[bins - 1] = z0 = 1;
    for (std::size_t b = 0; b < bins; ++b) {
      d.p1[b] /= z1;
      d.p0[b] /= z0;
    }
    double lhs = adversary_objective(d, optimal_adversary(d));
    if (inject) lhs += 1e-6;
    const double rhs = -std::log(4.0) + 2.0 * js_divergence(d);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  res.passed = worst <= 1e-10;
  std::ostringstream o;
  o << "max deviation " << worst;
  res.detail = o.str();
  return res;
}

// Margin ratio and the C = 0 reduction to cross-entropy.
inline CheckResult check_ldam(bool inject) {
  CheckResult res{"ldam", true, ""};
  Rng rng(3, Stream::kTest, 17);
  const std::size_t n = 40;
  std::vector<std::uint8_t> s(n), pool(n, 1);
  for (std::size_t v = 0; v < n; ++v) s[v] = v % 4 == 0;
  LdamMargins m = LdamMargins::compute(s, pool, 0.5);
  double ratio = m.delta0 / m.delta1;
  if (inject) ratio *= 1.01;
  const double want = std::pow(static_cast<double>(m.n1) / static_cast<double>(m.n0), 0.25);
  Matrix z = verify_detail::random_matrix(n, 2, rng, -3, 3);
  Tape t;
  const double ldam0 = imputation_loss(t.constant(z), s, pool, LdamMargins::compute(s, pool, 0.0)).item();
  double ce = 0;
  for (std::size_t v = 0; v < n; ++v) {
    const double a = z(v, 0), b = z(v, 1);
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    ce += lse - z(v, s[v]);
  }
  ce /= static_cast<double>(n);
  res.passed = std::abs(ratio - want) <= 1e-12 && std::abs(ldam0 - ce) <= 1e-12;
  std::ostringstream o;
  o << "ratio " << ratio << " vs " << want << ", |LDAM(C=0) - CE| " << std::abs(ldam0 - ce);
  res.detail = o.str();
  return res;
}

inline SbmConfig verify_sbm(std::uint64_t seed) {
  SbmConfig c;
  c.block_sizes = {36, 24};
  c.p_in = 0.2;
  c.p_out = 0.03;
  c.seed = seed;
  return c;
}

// Two identical short runs produce identical parameters and losses; a
// different seed does not.
inline CheckResult check_determinism(bool inject) {
  CheckResult res{"determinism", true, ""};
  Graph g = generate_sbm(verify_sbm(5));
  g = g.with_observed(degree_adversary(g, 24));
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 9;
  cfg.lr_classifier = cfg.lr_imputer = cfg.lr_adversary = 0.01;
  const TrainReport a = train_bfts(g, cfg);
  TrainConfig cfg_b = cfg;
  if (inject) cfg_b.seed += 1;
  const TrainReport b = train_bfts(g, cfg_b);
  bool same = a.final_params.same_weights(b.final_params) &&
              a.losses.size() == b.losses.size();
  for (std::size_t e = 0; same && e < a.losses.size(); ++e) {
    same = a.losses[e].classifier == b.losses[e].classifier &&
           a.losses[e].imputer == b.losses[e].imputer;
  }
  const bool regenerated = generate_sbm(verify_sbm(5)) == generate_sbm(verify_sbm(5));
  res.passed = same && regenerated;
  res.detail = same ? "identical trajectories" : "trajectories differ";
  return res;
}

// Save/load round trip, and a damaged checkpoint is rejected.
inline CheckResult check_checkpoint(bool inject) {
  CheckResult res{"checkpoint", true, ""};
  PlayerShapes shapes;
  shapes.in_features = 5;
  const PlayerParams p = init_params(shapes, 21);
  std::stringstream buf;
  write_checkpoint(buf, to_checkpoint(p));
  const std::string text = buf.str();
  std::stringstream in(text);
  const PlayerParams q = from_checkpoint(read_checkpoint(in));
  bool round_trip = p.same_weights(q);
  std::string damaged = text;
  damaged.resize(damaged.size() * 2 / 3);
  if (inject) damaged = text;
  bool rejected = false;
  try {
    std::stringstream bad(damaged);
    from_checkpoint(read_checkpoint(bad));
  } catch (const DataError&) {
    rejected = true;
  }
  res.passed = round_trip && rejected;
  res.detail = std::string("round trip ") + (round_trip ? "ok" : "differs") +
               ", truncated file " + (rejected ? "rejected" : "accepted");
  return res;
}

inline const std::vector<std::string>& verify_check_names() {
  static const std::vector<std::string> names{
      "gradients", "metric-oracles", "min-k-union", "js-identity",
      "ldam",      "determinism",    "checkpoint"};
  return names;
}

// Runs the full suite; `inject` names a check to force into failure.
inline std::vector<CheckResult> run_verify(const std::string& inject = "") {
  if (!inject.empty()) {
    const auto& names = verify_check_names();
    if (std::find(names.begin(), names.end(), inject) == names.end()) {
      throw DataError("unknown check '" + inject + "'");
    }
  }
  std::vector<CheckResult> out;
  out.push_back(check_gradients(20, inject == "gradients"));
  out.push_back(check_metric_oracles(1000, inject == "metric-oracles"));
  out.push_back(check_min_k_union(200, inject == "min-k-union"));
  out.push_back(check_js_identity(100, inject == "js-identity"));
  out.push_back(check_ldam(inject == "ldam"));
  out.push_back(check_determinism(inject == "determinism"));
  out.push_back(check_checkpoint(inject == "checkpoint"));
  return out;
}

}  // namespace bfts
