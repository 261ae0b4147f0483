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

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "bfts/harness.hpp"
#include "bfts/verify.hpp"
#include "test_util.hpp"

namespace bfts {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

ExperimentPlan small_plan(const fs::path& out) {
  ExperimentPlan p;
  p.name = "small";
  p.output_dir = out.string();
  p.modes = {TrainMode::kBfts, TrainMode::kVanilla};
  p.alpha_grid = {0.0, 1.0};
  p.seeds = {3};
  p.sbm.block_sizes = {36, 24};
  p.p_in_grid = {0.2};
  p.p_out_grid = {0.03};
  p.train.epochs = 15;
  p.train.stage1_epochs = 10;
  return p;
}

TEST(Plan, JsonRoundTrip) {
  ExperimentPlan p = small_plan("x");
  p.missingness = MissingnessKind::kCoverageGreedy;
  p.radius = 2;
  p.train.ldam_c = 0.25;
  p.sbm.gamma = 1.5;
  const ExperimentPlan q = plan_from_json(plan_to_json(p));
  EXPECT_TRUE(p == q);
  const auto dir = scratch_dir("plan_rt");
  save_plan(p, dir / "plan.json");
  EXPECT_TRUE(load_plan(dir / "plan.json") == p);
}

TEST(Plan, UnknownAndPerCellKeysRejected) {
  Json j = plan_to_json(small_plan("x"));
  Json typo = j;
  typo["alpha_grd"] = {1.0};
  EXPECT_THROW(plan_from_json(typo), DataError);
  Json cell = j;
  cell["alpha"] = 1.0;
  EXPECT_THROW(plan_from_json(cell), DataError);
  Json empty = j;
  empty["seeds"] = Json::array();
  EXPECT_THROW(plan_from_json(empty), DataError);
  Json wrong = j;
  wrong["epochs"] = "many";
  EXPECT_THROW(plan_from_json(wrong), DataError);
}

TEST(Plan, CellsFollowCanonicalOrder) {
  ExperimentPlan p = small_plan("x");
  p.seeds = {1, 2};
  const auto cells = expand_cells(p);
  ASSERT_EQ(cells.size(), 8u);
  for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(cells[i].index, i);
  EXPECT_EQ(cells[0].train.mode, TrainMode::kBfts);
  EXPECT_EQ(cells[0].train.seed, 1u);
  EXPECT_EQ(cells[1].train.seed, 2u);
  EXPECT_EQ(cells[2].train.alpha, 1.0);
  EXPECT_EQ(cells[4].train.mode, TrainMode::kVanilla);
  EXPECT_EQ(cells[3].sbm.seed, 2u);
}

TEST(Sweep, TwoByTwoPlanWritesFourRows) {
  const auto dir = scratch_dir("sweep4");
  const auto s = cmd_sweep(small_plan(dir), 1);
  EXPECT_EQ(s.cells, 4u);
  EXPECT_EQ(s.failed, 0u);
  const std::string metrics = slurp(dir / kMetricsFile);
  EXPECT_EQ(lines(metrics), 5u);
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricsHeader);
  EXPECT_EQ(lines(slurp(dir / kRunsFile)), 5u);
  EXPECT_EQ(lines(slurp(dir / kFailuresFile)), 1u);
  EXPECT_EQ(lines(slurp(dir / kTradeoffDpFile)), 5u);
  EXPECT_TRUE(load_plan(dir / kPlanFile) == small_plan(dir));
}

TEST(Sweep, RerunAndWorkerCountAreByteIdentical) {
  const auto a = scratch_dir("sweep_a"), b = scratch_dir("sweep_b");
  ExperimentPlan p = small_plan(a);
  p.seeds = {1, 2};
  cmd_sweep(p, 1);
  const std::string first = slurp(a / kMetricsFile);
  cmd_sweep(p, 1);
  EXPECT_EQ(slurp(a / kMetricsFile), first);
  p.output_dir = b.string();
  cmd_sweep(p, 8);
  EXPECT_EQ(slurp(b / kMetricsFile), first);
  EXPECT_EQ(slurp(b / kRunsFile), slurp(a / kRunsFile));
}

TEST(Sweep, FailingCellIsRecordedAndOthersContinue) {
  const auto dir = scratch_dir("sweep_fail");
  ExperimentPlan p = small_plan(dir);
  p.modes = {TrainMode::kVanilla, TrainMode::kIndependent};
  p.alpha_grid = {1.0};
  p.observed_frac_grid = {0.0};  // the two-stage pipeline needs observations
  const auto s = cmd_sweep(p, 2);
  EXPECT_EQ(s.cells, 2u);
  EXPECT_EQ(s.failed, 1u);
  EXPECT_EQ(lines(slurp(dir / kMetricsFile)), 2u);
  const std::string failures = slurp(dir / kFailuresFile);
  EXPECT_EQ(lines(failures), 2u);
  EXPECT_NE(failures.find("mode=indep"), std::string::npos);
  EXPECT_NE(failures.find("observed"), std::string::npos);
  const std::string runs = slurp(dir / kRunsFile);
  EXPECT_EQ(lines(runs), 3u);
}

TEST(Sweep, WorkersFromEnvironment) {
  ::setenv("BFTS_WORKERS", "3", 1);
  EXPECT_EQ(workers_from_env(), 3u);
  ::setenv("BFTS_WORKERS", "zero", 1);
  EXPECT_THROW(workers_from_env(), DataError);
  ::unsetenv("BFTS_WORKERS");
  EXPECT_GE(workers_from_env(), 1u);
}

TEST(Runs, SaveAndReloadReproduceMetrics) {
  const auto dir = scratch_dir("run_io");
  Graph g = generate_sbm(testing::tiny_sbm(5));
  g = g.with_observed(mcar_mask(g.n_nodes(), 20, 5));
  TrainConfig c;
  c.mode = TrainMode::kIndependent;
  c.epochs = 10;
  c.stage1_epochs = 10;
  c.seed = 5;
  const TrainReport rep = train(g, c);
  save_run(c, rep, dir);
  const SavedRun back = load_run(dir);
  EXPECT_TRUE(back.params.same_weights(rep.params));
  EXPECT_EQ(train_to_json(back.config), train_to_json(c));
  EXPECT_EQ(to_csv_row(evaluate_params(g, back.config, back.params, 0.3)),
            to_csv_row(evaluate_params(g, c, rep.params, 0.3)));
  EXPECT_EQ(lines(slurp(dir / kLossFile)), 11u);
  const Json run = read_json_file(dir / kRunFile);
  EXPECT_TRUE(run.contains("stage1_accuracy"));
}

TEST(Runs, CorruptCheckpointSurfacesLoadError) {
  const auto dir = scratch_dir("run_corrupt");
  Graph g = generate_sbm(testing::tiny_sbm(6));
  TrainConfig c;
  c.mode = TrainMode::kVanilla;
  c.epochs = 3;
  save_run(c, train(g, c), dir);
  std::string text = slurp(dir / kCheckpointFile);
  write_text_file(dir / kCheckpointFile, text.substr(0, text.size() / 2));
  EXPECT_THROW(load_run(dir), DataError);
}

TEST(Evaluate, CorrImputedFollowsMode) {
  Graph g = generate_sbm(testing::tiny_sbm(7));
  g = g.with_observed(mcar_mask(g.n_nodes(), 30, 7));
  TrainConfig c;
  c.epochs = 5;
  c.mode = TrainMode::kVanilla;
  const auto rec = evaluate_params(g, c, train(g, c).params, 0.5);
  EXPECT_EQ(rec.corr_imputed, observed_correlation(g));
  EXPECT_EQ(rec.corr_true,
            pearson_corr(as_real<std::uint8_t>(g.sensitive()), as_real<std::uint8_t>(g.labels())));
  EXPECT_EQ(rec.mode, "vanilla");
}

TEST(Verify, AllChecksPass) {
  for (const auto& r : run_verify()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Verify, InjectionFlipsExactlyTheTargetedCheck) {
  for (const auto& name : verify_check_names()) {
    for (const auto& r : run_verify(name)) {
      EXPECT_EQ(r.passed, r.name != name) << "inject " << name << " check " << r.name;
    }
  }
  EXPECT_THROW(run_verify("nonsense"), DataError);
}

// ---------------------------------------------------------------------------
// Command-line front end.

int cli(const std::string& args, std::string* out = nullptr) {
  const auto log = fs::temp_directory_path() / "bfts_test_cli_output.txt";
  const std::string cmd = std::string(BFTS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) *out = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, GenerateMaskTrainEvaluate) {
  const auto dir = scratch_dir("cli");
  const std::string g = (dir / "g").string(), m = (dir / "m").string(),
                    r = (dir / "run").string();
  ASSERT_EQ(cli("generate --out " + g + " --blocks 36,24 --p-in 0.2 --p-out 0.03 --seed 4"), 0);
  std::string text;
  ASSERT_EQ(cli("evaluate --graph " + g + " --metric assortativity", &text), 0);
  const double assort = std::stod(text);
  EXPECT_GE(assort, -1.0);
  EXPECT_LE(assort, 1.0);
  ASSERT_EQ(cli("mask --graph " + g + " --out " + m + " --kind degree --observed-frac 0.3"), 0);
  EXPECT_EQ(load_graph_dir(m).n_nodes(), 60u);
  EXPECT_EQ(count(load_graph_dir(m).observed()), 18u);
  ASSERT_EQ(cli("train --graph " + m + " --out " + r + " --mode bfts --epochs 5 --seed 2"), 0);
  ASSERT_EQ(cli("evaluate --graph " + m + " --run " + r + " --metric all", &text), 0);
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
  EXPECT_EQ(text.find("bfts,1,1,0.29999999999999999,2,"), text.find('\n') + 1);
}

TEST(Cli, GenerateIsDeterministic) {
  const auto dir = scratch_dir("cli_det");
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  ASSERT_EQ(cli("generate --out " + a + " --blocks 30,20 --seed 9"), 0);
  ASSERT_EQ(cli("generate --out " + b + " --blocks 30,20 --seed 9"), 0);
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(fs::path(b) / entry.path().filename()));
  }
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("cli_codes");
  std::string text;
  EXPECT_EQ(cli("", &text), 1);
  EXPECT_EQ(cli("generate --out " + (dir / "g").string() + " --bogus 1", &text), 1);
  EXPECT_NE(text.find("bogus"), std::string::npos);
  EXPECT_EQ(cli("mask --graph /nonexistent --out " + (dir / "m").string()), 2);
  EXPECT_EQ(cli("train --graph /nonexistent --out x --mode gan"), 1);
  EXPECT_EQ(cli("generate --out " + (dir / "g").string() + " --p-in 3"), 2);
  EXPECT_EQ(cli("verify --inject-failure ldam", &text), 3);
  EXPECT_NE(text.find("FAIL ldam"), std::string::npos);
  EXPECT_EQ(cli("--help"), 0);
}

TEST(Cli, SweepFromPlanFile) {
  const auto dir = scratch_dir("cli_sweep");
  save_plan(small_plan(dir / "unused"), dir / "plan.json");
  std::string text;
  ASSERT_EQ(cli("sweep --plan " + (dir / "plan.json").string() + " --out " +
                    (dir / "out").string(),
                &text),
            0);
  EXPECT_NE(text.find("4 cells, 0 failed"), std::string::npos);
  EXPECT_EQ(lines(slurp(dir / "out" / kMetricsFile)), 5u);
}

}  // namespace
}  // namespace bfts
