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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "bfts/metrics.hpp"
#include "bfts/missingness.hpp"
#include "bfts/training.hpp"
#include "test_util.hpp"

namespace bfts {
namespace {

using testing::tiny_sbm;

TrainConfig quick(TrainMode mode, std::size_t epochs = 25, std::uint64_t seed = 1) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.stage1_epochs = 20;
  c.seed = seed;
  c.lr_classifier = c.lr_imputer = c.lr_adversary = 0.01;
  c.shapes.hidden_classifier = 16;
  c.shapes.hidden_imputer = 16;
  c.shapes.hidden_adversary = 8;
  return c;
}

Graph with_mcar(const Graph& g, double frac, std::uint64_t seed) {
  return g.with_observed(mcar_mask(g.n_nodes(), observed_count(g.n_nodes(), frac), seed));
}

bool finite(double v) { return std::isfinite(v); }

TEST(Config, ValidationRejectsBadValues) {
  const Graph g = generate_sbm(tiny_sbm(1));
  auto bad = [&](auto mutate) {
    TrainConfig c = quick(TrainMode::kVanilla);
    mutate(c);
    EXPECT_THROW(train(g, c), DataError);
  };
  bad([](TrainConfig& c) { c.alpha = -1; });
  bad([](TrainConfig& c) { c.beta = std::nan(""); });
  bad([](TrainConfig& c) { c.lr_adversary = 0; });
  bad([](TrainConfig& c) { c.shapes.dropout = 1.0; });
  bad([](TrainConfig& c) { c.holdout_frac = 1.0; });
  EXPECT_THROW(parse_train_mode("gan"), DataError);
  EXPECT_EQ(parse_train_mode(to_string(TrainMode::kIndependent)), TrainMode::kIndependent);
  EXPECT_EQ(parse_train_mode("independent-imputation"), TrainMode::kIndependent);
}

TEST(Config, EmptyTrainingSetRejected) {
  Graph g = generate_sbm(tiny_sbm(1));
  const Mask none(g.n_nodes(), 0), all(g.n_nodes(), 1);
  EXPECT_THROW(train(g.with_splits(none, none, all), quick(TrainMode::kVanilla)),
               DataError);
}

TEST(Smoke, EveryModeProducesFiniteLosses) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(3)), 0.3, 3);
  for (auto mode : {TrainMode::kBfts, TrainMode::kVanilla, TrainMode::kTwoPlayer,
                    TrainMode::kIndependent}) {
    const TrainReport rep = train(g, quick(mode));
    ASSERT_EQ(rep.losses.size(), 25u) << to_string(mode);
    for (const auto& l : rep.losses) {
      EXPECT_TRUE(finite(l.classifier));
      if (mode == TrainMode::kBfts) {
        EXPECT_TRUE(finite(l.imputer));
      }
      if (mode != TrainMode::kVanilla && !l.adversary_skipped) {
        EXPECT_TRUE(finite(l.adversary));
        EXPECT_LE(l.adversary, 0.0);
      }
    }
    EXPECT_LT(rep.selected_epoch, 25u);
    EXPECT_GE(rep.best_val_avpr, 0.0);
  }
}

TEST(Determinism, SameSeedSameRun) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(4)), 0.3, 4);
  for (auto mode : {TrainMode::kBfts, TrainMode::kIndependent}) {
    const TrainReport a = train(g, quick(mode));
    const TrainReport b = train(g, quick(mode));
    EXPECT_TRUE(a.final_params.same_weights(b.final_params));
    EXPECT_EQ(a.selected_epoch, b.selected_epoch);
    for (std::size_t e = 0; e < a.losses.size(); ++e) {
      EXPECT_EQ(a.losses[e].classifier, b.losses[e].classifier);
    }
  }
  const TrainReport c = train(g, quick(TrainMode::kBfts, 25, 2));
  EXPECT_FALSE(c.final_params.same_weights(train(g, quick(TrainMode::kBfts)).final_params));
}

// With both weights zero the classifier never sees L_A, so it follows the
// vanilla trajectory exactly.
TEST(Equivalence, ZeroWeightsReduceToVanilla) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(5)), 0.3, 5);
  TrainConfig c = quick(TrainMode::kBfts);
  c.alpha = 0;
  c.beta = 0;
  const TrainReport bfts = train(g, c);
  c.mode = TrainMode::kVanilla;
  const TrainReport vanilla = train(g, c);
  EXPECT_EQ(bfts.final_params.classifier.params, vanilla.final_params.classifier.params);
  EXPECT_EQ(bfts.params.classifier.params, vanilla.params.classifier.params);
  EXPECT_EQ(bfts.selected_epoch, vanilla.selected_epoch);
}

TEST(Equivalence, TwoPlayerWithoutObservationsIsVanilla) {
  const Graph full = generate_sbm(tiny_sbm(6));
  const Graph g = full.with_observed(Mask(full.n_nodes(), 0));
  const TrainReport tp = train(g, quick(TrainMode::kTwoPlayer));
  const TrainReport vanilla = train(g, quick(TrainMode::kVanilla));
  EXPECT_EQ(tp.final_params.classifier.params, vanilla.final_params.classifier.params);
  ASSERT_FALSE(tp.warnings.empty());
  for (const auto& l : tp.losses) EXPECT_TRUE(l.adversary_skipped);
}

// Under full observation the merged target is exactly s, so the classifier
// and adversary of the three-player run match the two-player game.
TEST(Equivalence, FullObservationMatchesTwoPlayer) {
  const Graph g = generate_sbm(tiny_sbm(7));
  const TrainReport bfts = train(g, quick(TrainMode::kBfts));
  const TrainReport tp = train(g, quick(TrainMode::kTwoPlayer));
  EXPECT_EQ(bfts.final_params.classifier.params, tp.final_params.classifier.params);
  EXPECT_EQ(bfts.final_params.adversary.params, tp.final_params.adversary.params);
  const TrainReport ind = train(g, quick(TrainMode::kIndependent));
  EXPECT_EQ(ind.final_params.classifier.params, tp.final_params.classifier.params);
  std::vector<double> s(g.sensitive().begin(), g.sensitive().end());
  EXPECT_EQ(ind.fixed_sensitive, s);
}

TEST(Independent, ReportsStageOneAccuracyOnHeldOutNodes) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(8)), 0.5, 8);
  const TrainReport rep = train(g, quick(TrainMode::kIndependent));
  ASSERT_TRUE(rep.stage1_accuracy.has_value());
  EXPECT_GE(*rep.stage1_accuracy, 0.0);
  EXPECT_LE(*rep.stage1_accuracy, 1.0);
  // s' keeps observed values and is hard everywhere.
  for (std::size_t v = 0; v < g.n_nodes(); ++v) {
    const double s = rep.fixed_sensitive[v];
    EXPECT_TRUE(s == 0.0 || s == 1.0);
    if (g.observed()[v]) {
      EXPECT_EQ(s, g.sensitive()[v]);
    }
  }
  TrainConfig c = quick(TrainMode::kIndependent);
  c.holdout_frac = 0;
  EXPECT_FALSE(train(g, c).stage1_accuracy.has_value());
}

TEST(Independent, NeedsObservations) {
  const Graph full = generate_sbm(tiny_sbm(8));
  const Graph g = full.with_observed(Mask(full.n_nodes(), 0));
  EXPECT_THROW(train(g, quick(TrainMode::kIndependent)), DataError);
}

TEST(LabelProxy, RunsWithoutObservedValues) {
  const Graph full = generate_sbm(tiny_sbm(9));
  const Graph g = full.with_observed(Mask(full.n_nodes(), 0));
  TrainConfig c = quick(TrainMode::kBfts);
  c.sensitive_mode = SensitiveMode::kLabelProxy;
  const TrainReport rep = train(g, c);
  for (const auto& l : rep.losses) EXPECT_TRUE(finite(l.imputer));
  c.sensitive_mode = SensitiveMode::kObserved;
  EXPECT_THROW(train(g, c), DataError);
}

// With θ_C frozen, repeated ascent steps at a small rate raise L_A.
TEST(Adversary, AscentIsMonotone) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(10)), 0.4, 10);
  TrainConfig c = quick(TrainMode::kTwoPlayer);
  c.lr_adversary = 1e-3;
  Trainer tr(g, c);
  const SensitiveTarget target{as_real<std::uint8_t>(g.sensitive()), g.observed()};
  std::vector<double> values;
  for (int i = 0; i < 200; ++i) values.push_back(*tr.adversary_step(0, target));
  int rises = 0;
  for (std::size_t i = 1; i < values.size(); ++i) rises += values[i] >= values[i - 1];
  EXPECT_GE(rises, static_cast<int>(0.95 * (values.size() - 1)));
  EXPECT_GT(values.back(), values.front());
}

TEST(Adversary, DegenerateTargetIsSkipped) {
  const Graph g = generate_sbm(tiny_sbm(10));
  Trainer tr(g, quick(TrainMode::kTwoPlayer));
  SensitiveTarget ones{std::vector<double>(g.n_nodes(), 1.0), Mask(g.n_nodes(), 1)};
  EXPECT_TRUE(Trainer::degenerate(ones));
  EXPECT_FALSE(tr.adversary_step(0, ones).has_value());
}

TEST(Imputer, MergedTargetKeepsObservedValues) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(11)), 0.3, 11);
  Trainer tr(g, quick(TrainMode::kBfts));
  tr.imputer_step(0);
  const SensitiveTarget t = tr.imputed_target(1);
  for (std::size_t v = 0; v < g.n_nodes(); ++v) {
    if (g.observed()[v]) {
      EXPECT_EQ(t.values[v], g.sensitive()[v]);
    }
    EXPECT_GT(t.values[v] + 1e-12, 0.0);
    EXPECT_LT(t.values[v], 1.0 + 1e-12);
  }
}

TEST(Imputer, LossFallsWithoutAdversarialTerm) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(12)), 0.5, 12);
  TrainConfig c = quick(TrainMode::kBfts);
  c.beta = 0;
  Trainer tr(g, c);
  std::vector<double> li;
  for (std::size_t e = 0; e < 100; ++e) li.push_back(tr.imputer_step(e).first);
  auto window = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 10; ++i) s += li[i];
    return s / 10;
  };
  EXPECT_LT(window(90), window(0));
}

TEST(Classifier, VanillaSeparatesSeparableSbm) {
  SbmConfig sbm;
  sbm.block_sizes = {150, 100};
  sbm.p_in = 0.1;
  sbm.p_out = 0.005;
  sbm.gamma = 2.0;
  sbm.seed = 13;
  const Graph g = generate_sbm(sbm);
  TrainConfig c = quick(TrainMode::kVanilla, 150);
  const TrainReport rep = train(g, c);
  const Prediction p = predict(rep.params, g);
  EXPECT_GE(f1(p.y_hard, g.labels(), g.test()), 0.9);
  // Smoothed training loss does not rise.
  auto window = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 10; ++i) s += rep.losses[i].classifier;
    return s / 10;
  };
  for (std::size_t e = 10; e + 10 <= rep.losses.size(); e += 10) {
    EXPECT_LE(window(e), window(e - 10) + 1e-3) << e;
  }
}

TEST(Predict, ImputedSensitiveByMode) {
  const Graph g = with_mcar(generate_sbm(tiny_sbm(14)), 0.3, 14);
  TrainConfig c = quick(TrainMode::kBfts);
  const TrainReport rep = train(g, c);
  const auto s = imputed_sensitive(g, c, rep);
  ASSERT_EQ(s.size(), g.n_nodes());
  for (std::size_t v = 0; v < g.n_nodes(); ++v) {
    if (g.observed()[v]) {
      EXPECT_EQ(s[v], g.sensitive()[v]);
    }
  }
  c.mode = TrainMode::kVanilla;
  EXPECT_TRUE(imputed_sensitive(g, c, train(g, c)).empty());
}

}  // namespace
}  // namespace bfts
