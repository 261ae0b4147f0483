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

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"
#include "bfts/losses.hpp"
#include "bfts/metrics.hpp"
#include "bfts/models.hpp"
#include "bfts/rng.hpp"

namespace bfts {

enum class TrainMode { kBfts, kVanilla, kTwoPlayer, kIndependent };
enum class ImputerLoss { kLdam, kCrossEntropy };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kBfts: return "bfts";
    case TrainMode::kVanilla: return "vanilla";
    case TrainMode::kTwoPlayer: return "two-player";
    case TrainMode::kIndependent: return "indep";
  }
  return "?";
}

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "bfts") return TrainMode::kBfts;
  if (s == "vanilla") return TrainMode::kVanilla;
  if (s == "two-player") return TrainMode::kTwoPlayer;
  if (s == "indep" || s == "independent-imputation") return TrainMode::kIndependent;
  throw DataError("unknown training mode '" + s + "'");
}

inline std::string to_string(SensitiveMode m) {
  return m == SensitiveMode::kObserved ? "observed" : "label-proxy";
}

inline SensitiveMode parse_sensitive_mode(const std::string& s) {
  if (s == "observed") return SensitiveMode::kObserved;
  if (s == "label-proxy") return SensitiveMode::kLabelProxy;
  throw DataError("unknown sensitive mode '" + s + "'");
}

inline std::string to_string(ImputerLoss l) {
  return l == ImputerLoss::kLdam ? "ldam" : "ce";
}

inline ImputerLoss parse_imputer_loss(const std::string& s) {
  if (s == "ldam") return ImputerLoss::kLdam;
  if (s == "ce") return ImputerLoss::kCrossEntropy;
  throw DataError("unknown imputer loss '" + s + "'");
}

struct TrainConfig {
  double alpha = 1.0;   // weight of L_A in the classifier objective
  double beta = 1.0;    // weight of L_A in the imputer objective
  double ldam_c = 0.5;
  double lr_classifier = 1e-3;
  double lr_imputer = 1e-3;
  double lr_adversary = 1e-3;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kBfts;
  SensitiveMode sensitive_mode = SensitiveMode::kObserved;
  ImputerLoss imputer_loss = ImputerLoss::kLdam;
  PlayerShapes shapes;
  // independent-imputation stage 1
  std::size_t stage1_epochs = 200;
  double holdout_frac = 0.2;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) {
      throw DataError("alpha and beta must be non-negative");
    }
    if (!(ldam_c >= 0.0)) throw DataError("ldam_c must be non-negative");
    for (double lr : {lr_classifier, lr_imputer, lr_adversary}) {
      if (!(lr > 0.0)) throw DataError("learning rates must be positive");
    }
    if (!(shapes.dropout >= 0.0 && shapes.dropout < 1.0)) {
      throw DataError("dropout must lie in [0,1)");
    }
    if (!(holdout_frac >= 0.0 && holdout_frac < 1.0)) {
      throw DataError("holdout_frac must lie in [0,1)");
    }
  }
};

struct EpochLosses {
  double classifier = 0;
  double imputer = std::numeric_limits<double>::quiet_NaN();
  double adversary = std::numeric_limits<double>::quiet_NaN();
  bool adversary_skipped = false;
};

struct TrainReport {
  std::vector<EpochLosses> losses;
  std::size_t selected_epoch = 0;
  double best_val_avpr = 0;
  PlayerParams params;        // snapshot at the selected epoch
  PlayerParams final_params;  // after the last epoch
  double wall_seconds = 0;
  std::vector<std::string> warnings;
  // independent-imputation only
  std::optional<double> stage1_accuracy;
  std::vector<double> fixed_sensitive;
};

// Sensitive values the adversary is trained against, with the nodes that
// enter L_A.
struct SensitiveTarget {
  std::vector<double> values;
  Mask mask;
};

struct Prediction {
  std::vector<double> y_soft;
  std::vector<std::uint8_t> y_hard;
  std::vector<double> s_soft;
  std::vector<std::uint8_t> s_hard;
  Matrix h;
};

// Evaluation-mode forward of the classifier and imputer.
inline Prediction predict(const PlayerParams& params, const Propagation& prop) {
  Prediction p;
  {
    Tape t;
    auto c = forward_classifier(t, params.classifier, prop, DropoutMask::none(),
                                false);
    p.y_soft = c.y_hat.value().data;
    p.h = c.h.value();
  }
  {
    Tape t;
    auto i = forward_imputer(t, params.imputer, prop, DropoutMask::none(), false);
    p.s_soft = i.s_hat.value().data;
  }
  p.y_hard = threshold(p.y_soft);
  p.s_hard = threshold(p.s_soft);
  return p;
}

inline Prediction predict(const PlayerParams& params, const Graph& g) {
  return predict(params, Propagation::from(g));
}

// Replaces imputations on observed nodes with the true values.
inline std::vector<double> merge_values(const Graph& g,
                                        std::span<const double> s_imputed,
                                        SensitiveMode mode) {
  std::vector<double> out(s_imputed.begin(), s_imputed.end());
  if (mode == SensitiveMode::kLabelProxy) return out;
  for (std::size_t v = 0; v < out.size(); ++v) {
    if (g.observed()[v]) out[v] = g.sensitive()[v];
  }
  return out;
}

// Step-level driver shared by every training mode. Each player update is
// exposed separately; the mode functions below compose them.
class Trainer {
 public:
  Trainer(const Graph& g, TrainConfig cfg)
      : Trainer(g, cfg, init_params(shapes_for(g, cfg), cfg.seed)) {}

  Trainer(const Graph& g, TrainConfig cfg, PlayerParams init)
      : g_(g), cfg_(std::move(cfg)), prop_(Propagation::from(g)),
        params_(std::move(init)) {
    cfg_.validate();
    all_.assign(g.n_nodes(), 1);
    if (count(g.train()) == 0) throw DataError("empty training set");
    if (g.n_features() != params_.classifier.in_dim() ||
        g.n_features() != params_.imputer.in_dim()) {
      throw ShapeError("player input width does not match graph features");
    }
  }

  static PlayerShapes shapes_for(const Graph& g, const TrainConfig& cfg) {
    PlayerShapes s = cfg.shapes;
    s.in_features = g.n_features();
    return s;
  }

  const Graph& graph() const { return g_; }
  const TrainConfig& config() const { return cfg_; }
  const Propagation& propagation() const { return prop_; }
  PlayerParams& params() { return params_; }
  const PlayerParams& params() const { return params_; }
  const Mask& all_nodes() const { return all_; }

  // Dropout masks are a function of (seed, epoch) so every pass of one
  // epoch sees the same mask and modes share the classifier's masks.
  const DropoutMask& classifier_dropout(std::size_t epoch) const {
    return cached_mask(epoch, Stream::kDropoutClassifier, params_.classifier,
                       mask_c_);
  }
  const DropoutMask& imputer_dropout(std::size_t epoch) const {
    return cached_mask(epoch, Stream::kDropoutImputer, params_.imputer, mask_i_);
  }

  // Merged soft sensitive values from the current imputer (train-mode
  // forward with this epoch's dropout mask), over all nodes.
  SensitiveTarget imputed_target(std::size_t epoch) const {
    Tape t;
    auto imp = forward_imputer(t, params_.imputer, prop_, imputer_dropout(epoch),
                               false);
    return {merge_values(g_, imp.s_hat.value().data, cfg_.sensitive_mode), all_};
  }

  static bool degenerate(const SensitiveTarget& target) {
    if (count(target.mask) == 0) return true;
    const auto [w1, w0] = group_weights(target.values, target.mask);
    return w1 <= kMinGroupWeight || w0 <= kMinGroupWeight;
  }

  // Current L_A of the frozen players on the given target.
  double adversary_value(std::size_t epoch, const SensitiveTarget& target) const {
    Tape t;
    auto cls = forward_classifier(t, params_.classifier, prop_,
                                  classifier_dropout(epoch), false);
    auto adv = forward_adversary(t, params_.adversary, cls.h, false);
    Tensor s = t.constant(Matrix::column(target.values));
    return adversary_loss(adv.s_hat, s, target.mask).item();
  }

  // One descent step of θ_I on L_I - β L_A with θ_C, θ_A frozen. Returns
  // L_I, or NaN as second when the adversarial term was skipped.
  std::pair<double, bool> imputer_step(std::size_t epoch) {
    Tape t;
    auto imp = forward_imputer(t, params_.imputer, prop_, imputer_dropout(epoch),
                               true);
    const bool proxy = cfg_.sensitive_mode == SensitiveMode::kLabelProxy;
    const auto& targets = proxy ? g_.labels() : g_.sensitive();
    const auto& pool = proxy ? g_.train() : g_.observed();
    const LdamMargins margins =
        cfg_.imputer_loss == ImputerLoss::kLdam
            ? LdamMargins::compute(targets, pool, cfg_.ldam_c)
            : LdamMargins::zero();
    Tensor li = imputation_loss(imp.logits, targets, pool, margins);
    Tensor total = li;
    bool skipped = false;
    if (cfg_.beta > 0.0) {
      auto merged = merge_sensitive(imp.s_hat, g_, cfg_.sensitive_mode);
      const auto [w1, w0] = group_weights(merged.s_hat.value().data, all_);
      if (w1 <= kMinGroupWeight || w0 <= kMinGroupWeight) {
        skipped = true;
      } else {
        auto cls = forward_classifier(t, params_.classifier, prop_,
                                      classifier_dropout(epoch), false);
        auto adv = forward_adversary(t, params_.adversary, cls.h, false);
        Tensor la = adversary_loss(adv.s_hat, merged.s_hat, all_);
        total = ad::sub(li, ad::scale(la, cfg_.beta));
      }
    }
    t.backward(total);
    const auto grads = imp.params.grads();
    adam_step(params_.imputer.params.tensors, grads, params_.opt_imputer,
              cfg_.lr_imputer);
    return {li.item(), skipped};
  }

  // One ascent step of θ_A on L_A. Returns L_A before the update, or nullopt
  // when the target is degenerate and the step is skipped.
  std::optional<double> adversary_step(std::size_t epoch,
                                       const SensitiveTarget& target) {
    if (degenerate(target)) return std::nullopt;
    Tape t;
    auto cls = forward_classifier(t, params_.classifier, prop_,
                                  classifier_dropout(epoch), false);
    auto adv = forward_adversary(t, params_.adversary, cls.h, true);
    Tensor s = t.constant(Matrix::column(target.values));
    Tensor la = adversary_loss(adv.s_hat, s, target.mask);
    t.backward(ad::scale(la, -1.0));
    const auto grads = adv.params.grads();
    adam_step(params_.adversary.params.tensors, grads, params_.opt_adversary,
              cfg_.lr_adversary);
    return la.item();
  }

  // One descent step of θ_C on L_C + α L_A (L_A dropped when target is
  // null, α is zero or the target is degenerate). Returns L_C.
  double classifier_step(std::size_t epoch, const SensitiveTarget* target) {
    Tape t;
    auto cls = forward_classifier(t, params_.classifier, prop_,
                                  classifier_dropout(epoch), true);
    Tensor lc = classification_loss(cls.y_hat, g_.labels(), g_.train());
    Tensor total = lc;
    if (target != nullptr && cfg_.alpha > 0.0 && !degenerate(*target)) {
      auto adv = forward_adversary(t, params_.adversary, cls.h, false);
      Tensor s = t.constant(Matrix::column(target->values));
      Tensor la = adversary_loss(adv.s_hat, s, target->mask);
      total = ad::add(lc, ad::scale(la, cfg_.alpha));
    }
    t.backward(total);
    const auto grads = cls.params.grads();
    adam_step(params_.classifier.params.tensors, grads, params_.opt_classifier,
              cfg_.lr_classifier);
    return lc.item();
  }

  // Validation AVPR of the classifier in evaluation mode; NaN when the
  // validation set has no positives.
  double val_avpr() const {
    if (count(g_.val()) == 0) return std::numeric_limits<double>::quiet_NaN();
    Tape t;
    auto cls = forward_classifier(t, params_.classifier, prop_,
                                  DropoutMask::none(), false);
    try {
      return avpr(cls.y_hat.value().data, g_.labels(), g_.val());
    } catch (const DataError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }

 private:
  struct CachedMask {
    std::size_t epoch = static_cast<std::size_t>(-1);
    DropoutMask mask;
  };

  const DropoutMask& cached_mask(std::size_t epoch, Stream stream,
                                 const GcnNetwork& net, CachedMask& c) const {
    if (c.epoch != epoch) {
      Rng r(cfg_.seed, stream, epoch);
      c.mask = draw_dropout(net, prop_, true, r);
      c.epoch = epoch;
    }
    return c.mask;
  }

  const Graph& g_;
  TrainConfig cfg_;
  Propagation prop_;
  PlayerParams params_;
  Mask all_;
  mutable CachedMask mask_c_;
  mutable CachedMask mask_i_;
};

namespace train_detail {

// Tracks the best validation AVPR; ties keep the later epoch. Falls back
// to the last epoch when AVPR is unavailable.
class Selector {
 public:
  void observe(std::size_t epoch, const Trainer& tr, TrainReport& rep) {
    const double score = tr.val_avpr();
    const bool usable = std::isfinite(score);
    if (!have_ || (usable && score >= best_) || (!usable && !any_usable_)) {
      have_ = true;
      if (usable) {
        any_usable_ = true;
        best_ = score;
      }
      rep.selected_epoch = epoch;
      rep.best_val_avpr = usable ? score : 0.0;
      rep.params = tr.params();
    }
  }

 private:
  bool have_ = false;
  bool any_usable_ = false;
  double best_ = -1.0;
};

inline void note_skip(TrainReport& rep, std::size_t epoch) {
  if (rep.warnings.size() < 16) {
    rep.warnings.push_back("epoch " + std::to_string(epoch) +
                           ": degenerate sensitive groups, adversarial terms "
                           "skipped");
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Classifier/adversary alternation against a fixed target (two-player game).
inline void run_two_player(Trainer& tr, const SensitiveTarget& target,
                           TrainReport& rep) {
  Selector sel;
  const bool degenerate = Trainer::degenerate(target);
  for (std::size_t epoch = 0; epoch < tr.config().epochs; ++epoch) {
    EpochLosses l;
    if (!degenerate) {
      l.adversary = *tr.adversary_step(epoch, target);
    } else {
      l.adversary_skipped = true;
    }
    l.classifier = tr.classifier_step(epoch, degenerate ? nullptr : &target);
    rep.losses.push_back(l);
    sel.observe(epoch, tr, rep);
  }
  if (degenerate) {
    rep.warnings.push_back(
        "sensitive target is degenerate; trained without adversary");
  }
}

}  // namespace train_detail

// Three-player scheme: per epoch, update θ_I on L_I - βL_A, then θ_A by
// ascent on L_A, then θ_C on L_C + αL_A. Model selection on validation AVPR.
inline TrainReport train_bfts(const Graph& g, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.sensitive_mode == SensitiveMode::kObserved && count(g.observed()) == 0) {
    throw DataError("no observed sensitive values; use label-proxy mode");
  }
  Trainer tr(g, cfg);
  TrainReport rep;
  train_detail::Selector sel;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLosses l;
    auto [li, skipped] = tr.imputer_step(epoch);
    l.imputer = li;
    const SensitiveTarget target = tr.imputed_target(epoch);
    if (auto la = tr.adversary_step(epoch, target)) {
      l.adversary = *la;
    } else {
      skipped = true;
    }
    l.classifier = tr.classifier_step(epoch, skipped ? nullptr : &target);
    l.adversary_skipped = skipped;
    if (skipped) train_detail::note_skip(rep, epoch);
    rep.losses.push_back(l);
    sel.observe(epoch, tr, rep);
  }
  rep.final_params = tr.params();
  rep.wall_seconds = train_detail::seconds_since(t0);
  return rep;
}

// Plain classifier trained on L_C alone.
inline TrainReport train_vanilla(const Graph& g, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer tr(g, cfg);
  TrainReport rep;
  train_detail::Selector sel;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLosses l;
    l.classifier = tr.classifier_step(epoch, nullptr);
    rep.losses.push_back(l);
    sel.observe(epoch, tr, rep);
  }
  rep.final_params = tr.params();
  rep.wall_seconds = train_detail::seconds_since(t0);
  return rep;
}

// Classifier and adversary alternate; L_A only sees observed nodes with
// their true sensitive values. No imputer.
inline TrainReport train_two_player(const Graph& g, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer tr(g, cfg);
  TrainReport rep;
  SensitiveTarget target{as_real<std::uint8_t>(g.sensitive()), g.observed()};
  train_detail::run_two_player(tr, target, rep);
  rep.final_params = tr.params();
  rep.wall_seconds = train_detail::seconds_since(t0);
  return rep;
}

// Two-stage pipeline: fit the imputer alone on observed nodes with
// cross-entropy, freeze it, hard-threshold its imputations into s', then run
// the two-player game against s' on every node.
inline TrainReport train_independent_imputation(const Graph& g,
                                                const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer tr(g, cfg);
  TrainReport rep;
  const std::size_t n = g.n_nodes();
  if (count(g.observed()) == 0) {
    throw DataError("independent imputation needs observed sensitive values");
  }
  // Hold out part of V_S to report stage-1 accuracy.
  std::vector<std::size_t> obs;
  for (std::size_t v = 0; v < n; ++v) {
    if (g.observed()[v]) obs.push_back(v);
  }
  Rng hr(cfg.seed, Stream::kHoldout);
  std::shuffle(obs.begin(), obs.end(), hr);
  const auto n_hold = static_cast<std::size_t>(
      std::floor(cfg.holdout_frac * static_cast<double>(obs.size())));
  Mask fit(n, 0), held(n, 0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    (i < n_hold ? held : fit)[obs[i]] = 1;
  }
  {
    GcnNetwork& imp = tr.params().imputer;
    AdamState& opt = tr.params().opt_imputer;
    for (std::size_t epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
      Tape t;
      Rng r(cfg.seed, Stream::kDropoutStage1, epoch);
      auto out = forward_imputer(t, imp, tr.propagation(), true, r);
      Tensor loss = imputation_loss(out.logits, g.sensitive(), fit,
                                    LdamMargins::zero());
      t.backward(loss);
      adam_step(imp.params.tensors, out.params.grads(), opt, cfg.lr_imputer);
    }
  }
  const Prediction stage1 = predict(tr.params(), tr.propagation());
  if (n_hold > 0) {
    std::size_t correct = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (held[v]) correct += stage1.s_hard[v] == g.sensitive()[v];
    }
    rep.stage1_accuracy =
        static_cast<double>(correct) / static_cast<double>(n_hold);
  }
  std::vector<double> s_prime(n);
  for (std::size_t v = 0; v < n; ++v) {
    s_prime[v] = g.observed()[v] ? g.sensitive()[v] : stage1.s_hard[v];
  }
  rep.fixed_sensitive = s_prime;
  SensitiveTarget target{std::move(s_prime), tr.all_nodes()};
  train_detail::run_two_player(tr, target, rep);
  rep.final_params = tr.params();
  rep.wall_seconds = train_detail::seconds_since(t0);
  return rep;
}

inline TrainReport train(const Graph& g, const TrainConfig& cfg) {
  switch (cfg.mode) {
    case TrainMode::kBfts: return train_bfts(g, cfg);
    case TrainMode::kVanilla: return train_vanilla(g, cfg);
    case TrainMode::kTwoPlayer: return train_two_player(g, cfg);
    case TrainMode::kIndependent: return train_independent_imputation(g, cfg);
  }
  throw DataError("unknown training mode");
}

// Hard sensitive values each mode exposes to its fairness term, over all
// nodes: the merged imputation for bfts, s' for the independent pipeline.
// Empty for modes without an imputer.
inline std::vector<double> imputed_sensitive(const Graph& g,
                                             const TrainConfig& cfg,
                                             const TrainReport& rep) {
  if (cfg.mode == TrainMode::kIndependent) return rep.fixed_sensitive;
  if (cfg.mode != TrainMode::kBfts) return {};
  const Prediction p = predict(rep.params, g);
  const auto soft = merge_values(g, p.s_soft, cfg.sensitive_mode);
  const auto hard = threshold(soft);
  return as_real<std::uint8_t>(hard);
}

}  // namespace bfts
