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

// Command-line front end: generate, mask, train, evaluate, sweep, verify.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bfts/harness.hpp"
#include "bfts/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

struct GenerateArgs {
  std::string config;
  std::string out;
  std::vector<std::size_t> blocks;
  double p_in = 0, p_out = 0, p_bias = 0, gamma = 0, train_frac = 0, val_frac = 0;
  std::size_t features = 0, noise = 0;
  std::uint64_t seed = 0;
};

struct MaskArgs {
  std::string graph, out, kind = "degree";
  double observed_frac = 0.3;
  std::uint64_t seed = 0;
  std::size_t radius = 1;
};

struct TrainArgs {
  std::string config, graph, out, mode, sensitive_mode, imputer_loss;
  double alpha = 0, beta = 0, lr = 0, lr_c = 0, lr_i = 0, lr_a = 0, ldam_c = 0;
  std::size_t epochs = 0, stage1_epochs = 0;
  std::uint64_t seed = 0;
};

struct EvaluateArgs {
  std::string graph, run, metric = "all";
};

struct SweepArgs {
  std::string plan, out;
};

struct VerifyArgs {
  std::string inject;
};

bool given(const CLI::App* app, const std::string& name) {
  return app->count(name) > 0;
}

int run_generate(const CLI::App* app, const GenerateArgs& a) {
  bfts::SbmConfig cfg;
  if (!a.config.empty()) {
    const auto j = bfts::read_json_file(a.config);
    bfts::config_detail::reject_unknown(j, bfts::apply_sbm_keys(j, cfg));
  }
  if (given(app, "--blocks")) cfg.block_sizes = a.blocks;
  if (given(app, "--p-in")) cfg.p_in = a.p_in;
  if (given(app, "--p-out")) cfg.p_out = a.p_out;
  if (given(app, "--p-bias")) cfg.p_bias = a.p_bias;
  if (given(app, "--gamma")) cfg.gamma = a.gamma;
  if (given(app, "--features")) cfg.n_features = a.features;
  if (given(app, "--noise")) cfg.n_noise = a.noise;
  if (given(app, "--seed")) cfg.seed = a.seed;
  if (given(app, "--train-frac")) cfg.train_frac = a.train_frac;
  if (given(app, "--val-frac")) cfg.val_frac = a.val_frac;
  const bfts::Graph g = bfts::cmd_generate(cfg, a.out);
  std::printf("wrote %s: %zu nodes, %zu edges, assortativity %.6f\n", a.out.c_str(),
              g.n_nodes(), g.edges().size(),
              g.edges().empty() ? 0.0 : bfts::label_assortativity(g));
  return kExitOk;
}

int run_mask(const MaskArgs& a) {
  const bfts::Graph g =
      bfts::cmd_mask(a.graph, bfts::parse_missingness_kind(a.kind), a.observed_frac,
                     a.seed, a.radius, a.out);
  std::printf("wrote %s: %zu of %zu sensitive values observed\n", a.out.c_str(),
              bfts::count(g.observed()), g.n_nodes());
  return kExitOk;
}

int run_train(const CLI::App* app, const TrainArgs& a) {
  bfts::TrainConfig cfg;
  if (!a.config.empty()) {
    const auto j = bfts::read_json_file(a.config);
    bfts::config_detail::reject_unknown(j, bfts::apply_train_keys(j, cfg));
  }
  if (given(app, "--mode")) cfg.mode = bfts::parse_train_mode(a.mode);
  if (given(app, "--alpha")) cfg.alpha = a.alpha;
  if (given(app, "--beta")) cfg.beta = a.beta;
  if (given(app, "--epochs")) cfg.epochs = a.epochs;
  if (given(app, "--seed")) cfg.seed = a.seed;
  if (given(app, "--lr")) cfg.lr_classifier = cfg.lr_imputer = cfg.lr_adversary = a.lr;
  if (given(app, "--lr-classifier")) cfg.lr_classifier = a.lr_c;
  if (given(app, "--lr-imputer")) cfg.lr_imputer = a.lr_i;
  if (given(app, "--lr-adversary")) cfg.lr_adversary = a.lr_a;
  if (given(app, "--ldam-c")) cfg.ldam_c = a.ldam_c;
  if (given(app, "--sensitive-mode")) {
    cfg.sensitive_mode = bfts::parse_sensitive_mode(a.sensitive_mode);
  }
  if (given(app, "--imputer-loss")) {
    cfg.imputer_loss = bfts::parse_imputer_loss(a.imputer_loss);
  }
  if (given(app, "--stage1-epochs")) cfg.stage1_epochs = a.stage1_epochs;
  const bfts::TrainReport rep = bfts::cmd_train(a.graph, cfg, a.out);
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("mode %s: selected epoch %zu, val AVPR %.6f, %.2fs; wrote %s\n",
              bfts::to_string(cfg.mode).c_str(), rep.selected_epoch, rep.best_val_avpr,
              rep.wall_seconds, a.out.c_str());
  return kExitOk;
}

int run_evaluate(const EvaluateArgs& a) {
  const bfts::Graph g = bfts::load_graph_dir(a.graph);
  if (a.metric == "assortativity") {
    std::printf("%s\n", bfts::format_double(bfts::label_assortativity(g)).c_str());
    return kExitOk;
  }
  if (a.run.empty()) throw CLI::ValidationError("--run", "required for --metric all");
  const bfts::SavedRun run = bfts::load_run(a.run);
  const auto rec =
      bfts::evaluate_params(g, run.config, run.params, bfts::observed_fraction(g));
  std::printf("%s\n%s\n", bfts::kMetricsHeader, bfts::to_csv_row(rec).c_str());
  return kExitOk;
}

int run_sweep(const SweepArgs& a) {
  bfts::ExperimentPlan plan = bfts::load_plan(a.plan);
  if (!a.out.empty()) plan.output_dir = a.out;
  const std::size_t workers = bfts::workers_from_env();
  const auto s = bfts::cmd_sweep(plan, workers);
  std::printf("%zu cells, %zu failed, %zu workers; wrote %s\n", s.cells, s.failed,
              workers, s.output_dir.string().c_str());
  if (s.failed > 0) {
    std::fprintf(stderr, "warning: %zu cells failed, see %s\n", s.failed,
                 (s.output_dir / bfts::kFailuresFile).string().c_str());
  }
  return kExitOk;
}

int run_verify(const VerifyArgs& a) {
  bool ok = true;
  for (const auto& r : bfts::run_verify(a.inject)) {
    std::printf("%s %-15s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair node classification with adversarially missing sensitive attributes"};
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Sample a stochastic block model graph");
  gen->add_option("--out", ga.out, "Output graph directory")->required();
  gen->add_option("--config", ga.config, "Flat JSON config file");
  gen->add_option("--blocks", ga.blocks, "Block sizes (block 0 has y=1)")->delimiter(',');
  gen->add_option("--p-in", ga.p_in, "Within-block edge probability");
  gen->add_option("--p-out", ga.p_out, "Across-block edge probability");
  gen->add_option("--p-bias", ga.p_bias, "P(s=1 | y=1)");
  gen->add_option("--gamma", ga.gamma, "Signal strength of informative features");
  gen->add_option("--features", ga.features, "Feature count");
  gen->add_option("--noise", ga.noise, "Pure-noise feature count");
  gen->add_option("--seed", ga.seed, "Random seed");
  gen->add_option("--train-frac", ga.train_frac, "Fraction of nodes with training labels");
  gen->add_option("--val-frac", ga.val_frac, "Fraction of nodes used for validation");

  MaskArgs ma;
  auto* mask = app.add_subcommand("mask", "Hide sensitive values");
  mask->add_option("--graph", ma.graph, "Input graph directory")->required();
  mask->add_option("--out", ma.out, "Output graph directory")->required();
  mask->add_option("--kind", ma.kind, "Missingness process")
      ->check(CLI::IsMember({"mcar", "degree", "coverage-greedy", "coverage-exact"}));
  mask->add_option("--observed-frac", ma.observed_frac, "Fraction left observed")
      ->check(CLI::Range(0.0, 1.0));
  mask->add_option("--seed", ma.seed, "Random seed (mcar)");
  mask->add_option("--radius", ma.radius, "Hop radius of coverage sets");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one model and write a checkpoint");
  tr->add_option("--graph", ta.graph, "Graph directory")->required();
  tr->add_option("--out", ta.out, "Run output directory")->required();
  tr->add_option("--config", ta.config, "Flat JSON config file");
  tr->add_option("--mode", ta.mode, "Training mode")
      ->check(CLI::IsMember({"bfts", "vanilla", "two-player", "indep"}));
  tr->add_option("--alpha", ta.alpha, "Weight of the adversarial term for the classifier");
  tr->add_option("--beta", ta.beta, "Weight of the adversarial term for the imputer");
  tr->add_option("--epochs", ta.epochs, "Epoch budget");
  tr->add_option("--seed", ta.seed, "Random seed");
  tr->add_option("--lr", ta.lr, "Learning rate for all players");
  tr->add_option("--lr-classifier", ta.lr_c, "Classifier learning rate");
  tr->add_option("--lr-imputer", ta.lr_i, "Imputer learning rate");
  tr->add_option("--lr-adversary", ta.lr_a, "Adversary learning rate");
  tr->add_option("--ldam-c", ta.ldam_c, "LDAM margin constant");
  tr->add_option("--sensitive-mode", ta.sensitive_mode, "observed or label-proxy")
      ->check(CLI::IsMember({"observed", "label-proxy"}));
  tr->add_option("--imputer-loss", ta.imputer_loss, "ldam or ce")
      ->check(CLI::IsMember({"ldam", "ce"}));
  tr->add_option("--stage1-epochs", ta.stage1_epochs, "Imputer epochs of the indep pipeline");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a graph or a trained run");
  ev->add_option("--graph", ea.graph, "Graph directory")->required();
  ev->add_option("--run", ea.run, "Run directory written by train");
  ev->add_option("--metric", ea.metric, "assortativity or all")
      ->check(CLI::IsMember({"assortativity", "all"}));

  SweepArgs sa;
  auto* sw = app.add_subcommand("sweep", "Run every cell of an experiment plan");
  sw->add_option("--plan", sa.plan, "Plan file (flat JSON)")->required();
  sw->add_option("--out", sa.out, "Override the plan's output directory");

  VerifyArgs va;
  auto* ve = app.add_subcommand("verify", "Run the self-check suite");
  ve->add_option("--inject-failure", va.inject, "Force the named check to fail")
      ->check(CLI::IsMember(bfts::verify_check_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return run_generate(gen, ga);
    if (*mask) return run_mask(ma);
    if (*tr) return run_train(tr, ta);
    if (*ev) return run_evaluate(ea);
    if (*sw) return run_sweep(sa);
    if (*ve) return run_verify(va);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
