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

#include "bfts/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace bfts {
namespace {

using Bits = std::vector<std::uint8_t>;
using testing::avpr_oracle;
using testing::both;
using testing::f1_oracle;
using testing::random_bits;
using testing::rate;

TEST(DeltaDp, HandExamples) {
  const Bits all(8, 1);
  EXPECT_EQ(delta_dp(Bits(8, 1), Bits{1, 1, 1, 1, 0, 0, 0, 0}, all), 0.0);
  EXPECT_DOUBLE_EQ(delta_dp(Bits{1, 1, 1, 0, 1, 0, 0, 0},
                            Bits{1, 1, 1, 1, 0, 0, 0, 0}, all),
                   0.5);
  EXPECT_THROW(delta_dp(Bits{1, 0}, Bits{1, 1}, Bits{1, 1}), DegenerateGroupError);
  EXPECT_THROW(delta_dp(Bits{1, 0}, Bits{1, 0}, Bits{1, 0}), DegenerateGroupError);
  EXPECT_THROW(delta_dp(Bits{1, 0}, Bits{1, 0, 1}, Bits{1, 1}), ShapeError);
}

TEST(DeltaEqop, HandExamples) {
  const Bits y{1, 1, 0, 1, 1, 0};
  const Bits s{1, 1, 1, 0, 0, 0};
  const Bits all(6, 1);
  EXPECT_EQ(delta_eqop(y, s, y, all), 0.0);
  EXPECT_DOUBLE_EQ(delta_eqop(Bits{1, 1, 0, 1, 0, 1}, s, y, all), 0.5);
  EXPECT_THROW(delta_eqop(y, s, Bits{1, 1, 0, 0, 0, 0}, all), DegenerateGroupError);
}

TEST(FairnessMetrics, MatchCountingOracles) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed, Stream::kTest);
    const std::size_t n = 5 + seed % 40;
    const Bits pred = random_bits(n, 0.5, rng), s = random_bits(n, 0.4, rng),
               y = random_bits(n, 0.5, rng), mask = random_bits(n, 0.8, rng);
    const Bits g1 = both(s, mask, 1, 1), g0 = both(s, mask, 0, 1);
    if (std::count(g1.begin(), g1.end(), 1) && std::count(g0.begin(), g0.end(), 1)) {
      EXPECT_NEAR(delta_dp(pred, s, mask), std::abs(rate(pred, g1) - rate(pred, g0)), 1e-15);
    } else {
      EXPECT_THROW(delta_dp(pred, s, mask), DegenerateGroupError);
    }
    const Bits p1 = both(g1, y, 1, 1), p0 = both(g0, y, 1, 1);
    if (std::count(p1.begin(), p1.end(), 1) && std::count(p0.begin(), p0.end(), 1)) {
      EXPECT_NEAR(delta_eqop(pred, s, y, mask),
                  std::abs(rate(pred, p1) - rate(pred, p0)), 1e-15);
    } else {
      EXPECT_THROW(delta_eqop(pred, s, y, mask), DegenerateGroupError);
    }
  }
}

TEST(FairnessMetrics, InvariantToSwappingGroupLabels) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed, Stream::kTest, 1);
    Bits pred = random_bits(30, 0.5, rng), s = random_bits(30, 0.5, rng),
         y = random_bits(30, 0.5, rng);
    s[0] = 1, s[1] = 0, y[0] = 1, y[1] = 1;
    Bits flipped(s);
    for (auto& b : flipped) b = 1 - b;
    const Bits all(30, 1);
    EXPECT_EQ(delta_dp(pred, s, all), delta_dp(pred, flipped, all));
    EXPECT_EQ(delta_eqop(pred, s, y, all), delta_eqop(pred, flipped, y, all));
  }
}

TEST(F1, HandValuesAndEdgeCases) {
  const Bits all(6, 1);
  EXPECT_EQ(f1(Bits{1, 0, 1, 0, 0, 0}, Bits{1, 0, 1, 0, 0, 0}, all), 1.0);
  // tp 1, fp 1, fn 1 -> P = R = 0.5.
  EXPECT_DOUBLE_EQ(f1(Bits{1, 1, 0, 0, 0, 0}, Bits{1, 0, 1, 0, 0, 0}, all), 0.5);
  EXPECT_EQ(f1(Bits(6, 0), Bits{1, 0, 1, 0, 0, 0}, all), 0.0);
  EXPECT_EQ(f1(Bits{1, 1, 0, 0, 0, 0}, Bits{1, 0, 1, 0, 0, 0}, Bits{0, 0, 1, 1, 1, 1}), 0.0);
}

TEST(F1, MatchesCountingOracle) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed, Stream::kTest, 6);
    const std::size_t n = 1 + seed % 30;
    const Bits pred = random_bits(n, 0.5, rng), y = random_bits(n, 0.5, rng),
               mask = random_bits(n, 0.8, rng);
    EXPECT_NEAR(f1(pred, y, mask), f1_oracle(pred, y, mask), 1e-15);
  }
}

TEST(Avpr, HandExamples) {
  const Bits all(4, 1);
  EXPECT_NEAR(avpr(std::vector<double>{0.9, 0.8, 0.7, 0.1}, Bits{1, 0, 1, 0}, all),
              (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(avpr(std::vector<double>{0.9, 0.8, 0.2, 0.1}, Bits{1, 1, 0, 0}, all), 1.0);
  EXPECT_EQ(avpr(std::vector<double>{0.1, 0.7, 0.3, 0.5}, Bits{1, 1, 1, 1}, all), 1.0);
  EXPECT_THROW(avpr(std::vector<double>{0.1, 0.2, 0.3, 0.4}, Bits(4, 0), all), DataError);
}

TEST(Avpr, MatchesRankOracle) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed, Stream::kTest, 2);
    const std::size_t n = 3 + seed % 50;
    std::vector<double> score(n);
    // Coarse scores so that ties occur.
    for (auto& v : score) v = std::floor(rng.uniform() * 6.0) / 6.0;
    Bits y = random_bits(n, 0.4, rng), mask = random_bits(n, 0.8, rng);
    y[0] = 1;
    mask[0] = 1;
    EXPECT_NEAR(avpr(score, y, mask), avpr_oracle(score, y, mask), 1e-12) << seed;
  }
}

TEST(Avpr, InvariantToMonotoneRescaling) {
  Rng rng(5);
  std::vector<double> score(40);
  for (auto& v : score) v = rng.uniform();
  Bits y = random_bits(40, 0.5, rng);
  y[3] = 1;
  std::vector<double> scaled(score);
  for (auto& v : scaled) v = std::exp(3.0 * v) - 7.0;
  EXPECT_EQ(avpr(score, y, Bits(40, 1)), avpr(scaled, y, Bits(40, 1)));
}

TEST(Pearson, HandExamples) {
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> neg{-1, -2, -3, -4};
  EXPECT_DOUBLE_EQ(pearson_corr(a, a), 1.0);
  EXPECT_DOUBLE_EQ(pearson_corr(a, neg), -1.0);
  const std::vector<double> b{2, 1, 4, 3};
  // Deviations a: -1.5 -.5 .5 1.5 ; b: -.5 -1.5 1.5 .5 -> sab = 3, saa = sbb = 5.
  EXPECT_NEAR(pearson_corr(a, b), 0.6, 1e-15);
  EXPECT_EQ(pearson_corr(a, std::vector<double>(4, 2.0)), 0.0);
  EXPECT_THROW(pearson_corr(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST(Pearson, SymmetricAndBounded) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed, Stream::kTest, 3);
    std::vector<double> a(12), b(12);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double r = pearson_corr(a, b);
    EXPECT_EQ(r, pearson_corr(b, a));
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Threshold, IdempotentAndInclusive) {
  const std::vector<double> soft{0.0, 0.49, 0.5, 0.9};
  const Bits hard = threshold(soft);
  EXPECT_EQ(hard, (Bits{0, 0, 1, 1}));
  EXPECT_EQ(threshold(as_real<std::uint8_t>(hard)), hard);
}

DiscreteDistPair random_pair(Rng& rng, std::size_t bins) {
  DiscreteDistPair d{std::vector<double>(bins), std::vector<double>(bins)};
  for (auto* p : {&d.p1, &d.p0}) {
    for (auto& v : *p) v = rng.bernoulli(0.2) ? 0.0 : rng.uniform();
    (*p)[rng() % bins] += 0.1;
    const double total = std::accumulate(p->begin(), p->end(), 0.0);
    for (auto& v : *p) v /= total;
  }
  return d;
}

TEST(JsDivergence, HandExamples) {
  EXPECT_EQ(js_divergence({{0.3, 0.7}, {0.3, 0.7}}), 0.0);
  EXPECT_NEAR(js_divergence({{1, 0}, {0, 1}}), std::log(2.0), 1e-15);
  EXPECT_NEAR(js_divergence({{0.5, 0.5}, {1, 0}}), 0.2157615543388357, 1e-13);
  EXPECT_THROW(js_divergence({{0.5, 0.4}, {1, 0}}), DataError);
  EXPECT_THROW(js_divergence({{1}, {1, 0}}), DataError);
}

TEST(JsDivergence, SymmetricAndBounded) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed, Stream::kTest, 4);
    const DiscreteDistPair d = random_pair(rng, 2 + seed % 9);
    const double js = js_divergence(d);
    EXPECT_NEAR(js, js_divergence({d.p0, d.p1}), 1e-15);
    EXPECT_GE(js, 0.0);
    EXPECT_LE(js, std::log(2.0) + 1e-15);
  }
}

TEST(OptimalAdversary, HandExamples) {
  EXPECT_EQ(optimal_adversary({{0.5, 0.5}, {0.5, 0.5}}), (std::vector<double>{0.5, 0.5}));
  const auto f = optimal_adversary({{0.8, 0.2, 0.0}, {0.2, 0.8, 0.0}});
  EXPECT_DOUBLE_EQ(f[0], 0.8);
  EXPECT_EQ(f[2], 0.5);
}

// At the best response the adversary's objective equals -log 4 + 2 JS, and
// no perturbation of the response does better.
TEST(OptimalAdversary, ObjectiveIdentityAndOptimality) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed, Stream::kTest, 5);
    const DiscreteDistPair d = random_pair(rng, 2 + seed % 7);
    const auto f = optimal_adversary(d);
    const double best = adversary_objective(d, f);
    EXPECT_NEAR(best, -std::log(4.0) + 2.0 * js_divergence(d), 1e-12);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> g(f);
      for (auto& v : g) v = std::clamp(v + rng.uniform(-0.2, 0.2), 1e-6, 1 - 1e-6);
      EXPECT_LE(adversary_objective(d, g), best + 1e-12);
    }
  }
}

TEST(BiasAudit, ExactAndRandomImputations) {
  Graph g = generate_sbm(testing::tiny_sbm(4, 600, 400));
  const auto s = as_real<std::uint8_t>(g.sensitive());
  Rng rng(12);
  std::vector<double> noise(g.n_nodes());
  for (auto& v : noise) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const auto rows = bias_audit(g, {{"exact", s}, {"random", noise}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].corr_imputed, rows[0].corr_true);
  EXPECT_LT(std::abs(rows[1].corr_imputed), 0.1);
}

TEST(MetricsCsv, RowMatchesHeader) {
  MetricsRecord r;
  r.mode = "bfts";
  r.f1 = 0.1;
  const std::string row = to_csv_row(r);
  const std::string header = kMetricsHeader;
  EXPECT_EQ(std::count(row.begin(), row.end(), ','),
            std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.substr(0, 5), "bfts,");
}

}  // namespace
}  // namespace bfts
