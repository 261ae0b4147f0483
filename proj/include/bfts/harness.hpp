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
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"
#include "bfts/graph_io.hpp"
#include "bfts/metrics.hpp"
#include "bfts/missingness.hpp"
#include "bfts/models.hpp"
#include "bfts/training.hpp"

namespace bfts {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Flat key-value configuration.
//
// Every config file is a single JSON object whose values are scalars or
// arrays of scalars. The same key names are used by `generate`, `train` and
// sweep plans; command-line flags override file values.

namespace config_detail {

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename T>
void maybe(const Json& j, const char* key, T& out, std::set<std::string>& used) {
  if (!j.contains(key)) return;
  out = get<T>(j, key);
  used.insert(key);
}

inline void reject_unknown(const Json& j, const std::set<std::string>& used) {
  for (const auto& [key, value] : j.items()) {
    if (!used.count(key)) throw DataError("unknown config key '" + key + "'");
  }
}

}  // namespace config_detail

inline Json sbm_to_json(const SbmConfig& c) {
  return Json{{"block_sizes", c.block_sizes}, {"p_in", c.p_in},
              {"p_out", c.p_out},             {"p_bias", c.p_bias},
              {"n_features", c.n_features},   {"n_noise", c.n_noise},
              {"gamma", c.gamma},             {"seed", c.seed},
              {"train_frac", c.train_frac},   {"val_frac", c.val_frac}};
}

// Reads the SBM keys present in j into c; returns the keys consumed.
inline std::set<std::string> apply_sbm_keys(const Json& j, SbmConfig& c) {
  using config_detail::maybe;
  std::set<std::string> used;
  maybe(j, "block_sizes", c.block_sizes, used);
  maybe(j, "p_in", c.p_in, used);
  maybe(j, "p_out", c.p_out, used);
  maybe(j, "p_bias", c.p_bias, used);
  maybe(j, "n_features", c.n_features, used);
  maybe(j, "n_noise", c.n_noise, used);
  maybe(j, "gamma", c.gamma, used);
  maybe(j, "seed", c.seed, used);
  maybe(j, "train_frac", c.train_frac, used);
  maybe(j, "val_frac", c.val_frac, used);
  return used;
}

inline Json train_to_json(const TrainConfig& c) {
  return Json{{"mode", to_string(c.mode)},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"ldam_c", c.ldam_c},
              {"lr_classifier", c.lr_classifier},
              {"lr_imputer", c.lr_imputer},
              {"lr_adversary", c.lr_adversary},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"sensitive_mode", to_string(c.sensitive_mode)},
              {"imputer_loss", to_string(c.imputer_loss)},
              {"hidden_classifier", c.shapes.hidden_classifier},
              {"hidden_imputer", c.shapes.hidden_imputer},
              {"hidden_adversary", c.shapes.hidden_adversary},
              {"dropout", c.shapes.dropout},
              {"stage1_epochs", c.stage1_epochs},
              {"holdout_frac", c.holdout_frac}};
}

inline std::set<std::string> apply_train_keys(const Json& j, TrainConfig& c) {
  using config_detail::get;
  using config_detail::maybe;
  std::set<std::string> used;
  if (j.contains("mode")) {
    c.mode = parse_train_mode(get<std::string>(j, "mode"));
    used.insert("mode");
  }
  if (j.contains("sensitive_mode")) {
    c.sensitive_mode = parse_sensitive_mode(get<std::string>(j, "sensitive_mode"));
    used.insert("sensitive_mode");
  }
  if (j.contains("imputer_loss")) {
    c.imputer_loss = parse_imputer_loss(get<std::string>(j, "imputer_loss"));
    used.insert("imputer_loss");
  }
  maybe(j, "alpha", c.alpha, used);
  maybe(j, "beta", c.beta, used);
  maybe(j, "ldam_c", c.ldam_c, used);
  maybe(j, "lr_classifier", c.lr_classifier, used);
  maybe(j, "lr_imputer", c.lr_imputer, used);
  maybe(j, "lr_adversary", c.lr_adversary, used);
  maybe(j, "epochs", c.epochs, used);
  maybe(j, "seed", c.seed, used);
  maybe(j, "hidden_classifier", c.shapes.hidden_classifier, used);
  maybe(j, "hidden_imputer", c.shapes.hidden_imputer, used);
  maybe(j, "hidden_adversary", c.shapes.hidden_adversary, used);
  maybe(j, "dropout", c.shapes.dropout, used);
  maybe(j, "stage1_epochs", c.stage1_epochs, used);
  maybe(j, "holdout_frac", c.holdout_frac, used);
  return used;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    Json j = Json::parse(in);
    if (!j.is_object()) throw DataError(path.string() + ": expected a JSON object");
    return j;
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Experiment plans.

struct ExperimentPlan {
  std::string name = "sweep";
  std::string output_dir = "sweep_out";
  std::string graph_path;  // empty: generate an SBM per (p_in, p_out, seed)
  std::vector<TrainMode> modes{TrainMode::kBfts};
  std::vector<double> alpha_grid{1.0};
  std::vector<double> beta_grid{1.0};
  std::vector<double> observed_frac_grid{0.3};
  std::vector<double> p_in_grid{0.03};
  std::vector<double> p_out_grid{0.002};
  std::vector<std::uint64_t> seeds{1};
  MissingnessKind missingness = MissingnessKind::kDegree;
  std::size_t radius = 1;
  TrainConfig train;  // mode, alpha, beta and seed are set per cell
  SbmConfig sbm;      // p_in, p_out and seed are set per cell

  void validate() const {
    auto nonempty = [](bool ok, const char* what) {
      if (!ok) throw DataError(std::string("plan: ") + what + " is empty");
    };
    nonempty(!modes.empty(), "modes");
    nonempty(!alpha_grid.empty(), "alpha_grid");
    nonempty(!beta_grid.empty(), "beta_grid");
    nonempty(!observed_frac_grid.empty(), "observed_frac_grid");
    nonempty(!seeds.empty(), "seeds");
    if (graph_path.empty()) {
      nonempty(!p_in_grid.empty(), "p_in_grid");
      nonempty(!p_out_grid.empty(), "p_out_grid");
    }
    for (double f : observed_frac_grid) {
      if (!(f >= 0.0 && f <= 1.0)) throw DataError("plan: observed fraction outside [0,1]");
    }
    train.validate();
    if (graph_path.empty()) {
      SbmConfig probe = sbm;
      for (double p : p_in_grid) {
        probe.p_in = p;
        probe.validate();
      }
      for (double p : p_out_grid) {
        probe.p_out = p;
        probe.validate();
      }
    }
  }
};

inline Json plan_to_json(const ExperimentPlan& p) {
  Json j = train_to_json(p.train);
  for (const char* k : {"mode", "alpha", "beta", "seed"}) j.erase(k);
  Json s = sbm_to_json(p.sbm);
  for (const char* k : {"p_in", "p_out", "seed"}) s.erase(k);
  j.update(s);
  std::vector<std::string> modes;
  for (TrainMode m : p.modes) modes.push_back(to_string(m));
  j["name"] = p.name;
  j["output_dir"] = p.output_dir;
  j["graph"] = p.graph_path;
  j["modes"] = modes;
  j["alpha_grid"] = p.alpha_grid;
  j["beta_grid"] = p.beta_grid;
  j["observed_frac_grid"] = p.observed_frac_grid;
  j["p_in_grid"] = p.p_in_grid;
  j["p_out_grid"] = p.p_out_grid;
  j["seeds"] = p.seeds;
  j["missingness"] = to_string(p.missingness);
  j["radius"] = p.radius;
  return j;
}

inline ExperimentPlan plan_from_json(const Json& j) {
  using config_detail::get;
  using config_detail::maybe;
  if (!j.is_object()) throw DataError("plan must be a JSON object");
  for (const char* k : {"mode", "alpha", "beta", "seed", "p_in", "p_out"}) {
    if (j.contains(k)) {
      throw DataError(std::string("plan key '") + k +
                      "' is per-cell; use the corresponding grid");
    }
  }
  ExperimentPlan p;
  std::set<std::string> used = apply_train_keys(j, p.train);
  used.merge(apply_sbm_keys(j, p.sbm));
  maybe(j, "name", p.name, used);
  maybe(j, "output_dir", p.output_dir, used);
  maybe(j, "graph", p.graph_path, used);
  if (j.contains("modes")) {
    p.modes.clear();
    for (const auto& m : get<std::vector<std::string>>(j, "modes")) {
      p.modes.push_back(parse_train_mode(m));
    }
    used.insert("modes");
  }
  maybe(j, "alpha_grid", p.alpha_grid, used);
  maybe(j, "beta_grid", p.beta_grid, used);
  maybe(j, "observed_frac_grid", p.observed_frac_grid, used);
  maybe(j, "p_in_grid", p.p_in_grid, used);
  maybe(j, "p_out_grid", p.p_out_grid, used);
  maybe(j, "seeds", p.seeds, used);
  if (j.contains("missingness")) {
    p.missingness = parse_missingness_kind(get<std::string>(j, "missingness"));
    used.insert("missingness");
  }
  maybe(j, "radius", p.radius, used);
  config_detail::reject_unknown(j, used);
  p.validate();
  return p;
}

inline bool operator==(const ExperimentPlan& a, const ExperimentPlan& b) {
  return plan_to_json(a) == plan_to_json(b);
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
  return plan_from_json(read_json_file(path));
}

inline void save_plan(const ExperimentPlan& p, const std::filesystem::path& path) {
  write_text_file(path, plan_to_json(p).dump(2) + "\n");
}

// One fully specified run of a sweep.
struct Cell {
  std::size_t index = 0;  // position in canonical order
  TrainConfig train;
  MissingnessKind missingness = MissingnessKind::kDegree;
  double observed_frac = 0;
  std::size_t radius = 1;
  SbmConfig sbm;
  std::string graph_path;

  std::string key() const {
    std::string k = "mode=" + to_string(train.mode) +
                    " alpha=" + format_double(train.alpha) +
                    " beta=" + format_double(train.beta) +
                    " observed_frac=" + format_double(observed_frac);
    if (graph_path.empty()) {
      k += " p_in=" + format_double(sbm.p_in) + " p_out=" + format_double(sbm.p_out);
    }
    return k + " seed=" + std::to_string(train.seed);
  }
};

// Cartesian product in a fixed nesting order: mode, alpha, beta, observed
// fraction, p_in, p_out, seed. The index doubles as the canonical row order.
inline std::vector<Cell> expand_cells(const ExperimentPlan& plan) {
  plan.validate();
  const std::vector<double> none{0.0};
  const auto& pins = plan.graph_path.empty() ? plan.p_in_grid : none;
  const auto& pouts = plan.graph_path.empty() ? plan.p_out_grid : none;
  std::vector<Cell> cells;
  for (TrainMode mode : plan.modes) {
    for (double alpha : plan.alpha_grid) {
      for (double beta : plan.beta_grid) {
        for (double frac : plan.observed_frac_grid) {
          for (double p_in : pins) {
            for (double p_out : pouts) {
              for (std::uint64_t seed : plan.seeds) {
                Cell c;
                c.index = cells.size();
                c.train = plan.train;
                c.train.mode = mode;
                c.train.alpha = alpha;
                c.train.beta = beta;
                c.train.seed = seed;
                c.missingness = plan.missingness;
                c.observed_frac = frac;
                c.radius = plan.radius;
                c.graph_path = plan.graph_path;
                c.sbm = plan.sbm;
                c.sbm.p_in = p_in;
                c.sbm.p_out = p_out;
                c.sbm.seed = seed;
                cells.push_back(std::move(c));
              }
            }
          }
        }
      }
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Evaluation.

// Hard sensitive values the trained model would hand to its fairness term:
// the merged imputation for modes with an imputer, empty otherwise.
inline std::vector<double> imputed_from_params(const Graph& g, TrainMode mode,
                                               SensitiveMode sensitive_mode,
                                               const Prediction& pred) {
  if (mode == TrainMode::kVanilla || mode == TrainMode::kTwoPlayer) return {};
  const SensitiveMode m =
      mode == TrainMode::kIndependent ? SensitiveMode::kObserved : sensitive_mode;
  const auto merged = merge_values(g, pred.s_soft, m);
  if (mode == TrainMode::kIndependent) {
    // s' thresholds the imputer only where s is missing.
    std::vector<double> out(merged.size());
    for (std::size_t v = 0; v < out.size(); ++v) {
      out[v] = g.observed()[v] ? merged[v] : static_cast<double>(pred.s_hard[v]);
    }
    return out;
  }
  return as_real<std::uint8_t>(threshold(merged));
}

// Pearson correlation of the observed sensitive values with y, over V_S.
inline double observed_correlation(const Graph& g) {
  std::vector<double> s, y;
  for (std::size_t v = 0; v < g.n_nodes(); ++v) {
    if (!g.observed()[v]) continue;
    s.push_back(g.sensitive()[v]);
    y.push_back(g.labels()[v]);
  }
  if (s.empty()) return 0.0;
  return pearson_corr(s, y);
}

inline double observed_fraction(const Graph& g) {
  return static_cast<double>(count(g.observed())) /
         static_cast<double>(g.n_nodes());
}

// Test-split utility and fairness of the classifier against the true
// sensitive attribute, plus the bias audit columns.
inline MetricsRecord evaluate_params(const Graph& g, const TrainConfig& cfg,
                                     const PlayerParams& params,
                                     double observed_frac) {
  const Prediction pred = predict(params, g);
  MetricsRecord r;
  r.mode = to_string(cfg.mode);
  r.alpha = cfg.alpha;
  r.beta = cfg.beta;
  r.observed_frac = observed_frac;
  r.seed = cfg.seed;
  const auto& test = g.test();
  r.f1 = f1(pred.y_hard, g.labels(), test);
  r.avpr = avpr(pred.y_soft, g.labels(), test);
  r.delta_dp = delta_dp(pred.y_hard, g.sensitive(), test);
  r.delta_eqop = delta_eqop(pred.y_hard, g.sensitive(), g.labels(), test);
  const auto y = as_real<std::uint8_t>(g.labels());
  r.corr_true = pearson_corr(as_real<std::uint8_t>(g.sensitive()), y);
  const auto imputed = imputed_from_params(g, cfg.mode, cfg.sensitive_mode, pred);
  r.corr_imputed = imputed.empty() ? observed_correlation(g) : pearson_corr(imputed, y);
  r.assortativity = label_assortativity(g);
  return r;
}

// ---------------------------------------------------------------------------
// Run artifacts.

inline constexpr const char* kLossHeader =
    "epoch,classifier,imputer,adversary,adversary_skipped";

inline std::string losses_csv(const TrainReport& rep) {
  auto cell = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
  std::string out = std::string(kLossHeader) + "\n";
  for (std::size_t e = 0; e < rep.losses.size(); ++e) {
    const auto& l = rep.losses[e];
    out += std::to_string(e) + "," + cell(l.classifier) + "," + cell(l.imputer) +
           "," + cell(l.adversary) + "," + (l.adversary_skipped ? "1" : "0") + "\n";
  }
  return out;
}

inline constexpr const char* kCheckpointFile = "checkpoint.txt";
inline constexpr const char* kLossFile = "losses.csv";
inline constexpr const char* kRunFile = "run.json";

// Writes checkpoint (selected epoch), per-epoch losses and the run summary.
inline void save_run(const TrainConfig& cfg, const TrainReport& rep,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / kCheckpointFile, to_checkpoint(rep.params));
  write_text_file(dir / kLossFile, losses_csv(rep));
  Json j{{"config", train_to_json(cfg)},
         {"selected_epoch", rep.selected_epoch},
         {"best_val_avpr", rep.best_val_avpr},
         {"warnings", rep.warnings}};
  if (rep.stage1_accuracy) j["stage1_accuracy"] = *rep.stage1_accuracy;
  write_text_file(dir / kRunFile, j.dump(2) + "\n");
}

struct SavedRun {
  TrainConfig config;
  PlayerParams params;
};

inline SavedRun load_run(const std::filesystem::path& dir) {
  const Json j = read_json_file(dir / kRunFile);
  if (!j.contains("config") || !j["config"].is_object()) {
    throw DataError((dir / kRunFile).string() + ": missing config object");
  }
  SavedRun r;
  apply_train_keys(j["config"], r.config);
  r.params = from_checkpoint(load_checkpoint(dir / kCheckpointFile),
                             r.config.shapes.dropout);
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps.

struct CellOutcome {
  Cell cell;
  bool ok = false;
  MetricsRecord record;
  std::string error;
};

inline Graph build_cell_graph(const Cell& c, const Graph* shared) {
  Graph base = shared ? *shared : generate_sbm(c.sbm);
  MissingnessSpec spec;
  spec.kind = c.missingness;
  spec.k_observed = observed_count(base.n_nodes(), c.observed_frac);
  spec.seed = c.train.seed;
  spec.radius = c.radius;
  return base.with_observed(make_observed_mask(base, spec));
}

inline CellOutcome run_cell(const Cell& c, const Graph* shared) {
  CellOutcome out;
  out.cell = c;
  try {
    const Graph g = build_cell_graph(c, shared);
    const TrainReport rep = train(g, c.train);
    out.record = evaluate_params(g, c.train, rep.params, c.observed_frac);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

// Worker cap from BFTS_WORKERS; defaults to the hardware thread count.
inline std::size_t workers_from_env() {
  const char* v = std::getenv("BFTS_WORKERS");
  if (v && *v) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) {
      throw DataError(std::string("BFTS_WORKERS must be a positive integer, got '") +
                      v + "'");
    }
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs every cell with up to `workers` threads. Outcomes come back in
// canonical (cell index) order regardless of completion order.
inline std::vector<CellOutcome> run_cells(const std::vector<Cell>& cells,
                                          const Graph* shared,
                                          std::size_t workers) {
  std::vector<CellOutcome> done;
  done.reserve(cells.size());
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      CellOutcome o = run_cell(cells[i], shared);
      std::lock_guard<std::mutex> lock(mu);
      done.push_back(std::move(o));
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  std::sort(done.begin(), done.end(), [](const CellOutcome& a, const CellOutcome& b) {
    return a.cell.index < b.cell.index;
  });
  return done;
}

inline constexpr const char* kRunsHeader =
    "index,mode,alpha,beta,observed_frac,seed,missingness,radius,p_in,p_out,"
    "p_bias,gamma,block_sizes,n_features,n_noise,train_frac,val_frac,graph,"
    "epochs,lr_classifier,lr_imputer,lr_adversary,ldam_c,sensitive_mode,"
    "imputer_loss,dropout,stage1_epochs,holdout_frac,status";

inline std::string runs_row(const CellOutcome& o) {
  const Cell& c = o.cell;
  std::string blocks;
  for (std::size_t b : c.sbm.block_sizes) {
    blocks += (blocks.empty() ? "" : ";") + std::to_string(b);
  }
  const bool sbm = c.graph_path.empty();
  std::ostringstream s;
  s << c.index << ',' << to_string(c.train.mode) << ',' << format_double(c.train.alpha)
    << ',' << format_double(c.train.beta) << ',' << format_double(c.observed_frac)
    << ',' << c.train.seed << ',' << to_string(c.missingness) << ',' << c.radius << ','
    << (sbm ? format_double(c.sbm.p_in) : "") << ','
    << (sbm ? format_double(c.sbm.p_out) : "") << ','
    << (sbm ? format_double(c.sbm.p_bias) : "") << ','
    << (sbm ? format_double(c.sbm.gamma) : "") << ',' << (sbm ? blocks : "") << ','
    << (sbm ? std::to_string(c.sbm.n_features) : "") << ','
    << (sbm ? std::to_string(c.sbm.n_noise) : "") << ','
    << (sbm ? format_double(c.sbm.train_frac) : "") << ','
    << (sbm ? format_double(c.sbm.val_frac) : "") << ',' << c.graph_path << ','
    << c.train.epochs << ',' << format_double(c.train.lr_classifier) << ','
    << format_double(c.train.lr_imputer) << ',' << format_double(c.train.lr_adversary)
    << ',' << format_double(c.train.ldam_c) << ',' << to_string(c.train.sensitive_mode)
    << ',' << to_string(c.train.imputer_loss) << ','
    << format_double(c.train.shapes.dropout) << ',' << c.train.stage1_epochs << ','
    << format_double(c.train.holdout_frac) << ',' << (o.ok ? "ok" : "failed");
  return s.str();
}

inline std::string csv_quote(const std::string& v) {
  std::string out = "\"";
  for (char ch : v) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

// Seed-averaged (F1, 1 - disparity) points per configuration, one file per
// fairness metric.
inline std::string tradeoff_csv(const std::vector<CellOutcome>& outcomes, bool eqop) {
  struct Acc {
    std::size_t first = 0;
    std::size_t n = 0;
    double f1 = 0, fair = 0;
  };
  std::map<std::string, Acc> acc;
  std::vector<std::pair<std::size_t, std::string>> order;
  std::map<std::string, const Cell*> rep;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    const Cell& c = o.cell;
    std::string key = to_string(c.train.mode) + "," + format_double(c.train.alpha) + "," +
                      format_double(c.train.beta) + "," + format_double(c.observed_frac) +
                      "," + (c.graph_path.empty() ? format_double(c.sbm.p_in) : "") + "," +
                      (c.graph_path.empty() ? format_double(c.sbm.p_out) : "");
    auto [it, fresh] = acc.try_emplace(key);
    if (fresh) {
      it->second.first = c.index;
      order.emplace_back(c.index, key);
    }
    it->second.n += 1;
    it->second.f1 += o.record.f1;
    it->second.fair += 1.0 - (eqop ? o.record.delta_eqop : o.record.delta_dp);
  }
  std::sort(order.begin(), order.end());
  std::string out = std::string("mode,alpha,beta,observed_frac,p_in,p_out,n_seeds,f1,") +
                    (eqop ? "one_minus_deqop" : "one_minus_ddp") + "\n";
  for (const auto& [idx, key] : order) {
    const Acc& a = acc[key];
    const double n = static_cast<double>(a.n);
    out += key + "," + std::to_string(a.n) + "," + format_double(a.f1 / n) + "," +
           format_double(a.fair / n) + "\n";
  }
  return out;
}

struct SweepSummary {
  std::size_t cells = 0;
  std::size_t failed = 0;
  std::filesystem::path output_dir;
};

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kRunsFile = "runs.csv";
inline constexpr const char* kFailuresFile = "failures.csv";
inline constexpr const char* kTradeoffDpFile = "tradeoff_dp.csv";
inline constexpr const char* kTradeoffEqopFile = "tradeoff_eqop.csv";
inline constexpr const char* kPlanFile = "plan.json";

inline void write_sweep(const ExperimentPlan& plan,
                        const std::vector<CellOutcome>& outcomes,
                        const std::filesystem::path& dir) {
  std::string metrics = std::string(kMetricsHeader) + "\n";
  std::string runs = std::string(kRunsHeader) + "\n";
  std::string failures = "index,cell,error\n";
  for (const auto& o : outcomes) {
    runs += runs_row(o) + "\n";
    if (o.ok) {
      metrics += to_csv_row(o.record) + "\n";
    } else {
      failures += std::to_string(o.cell.index) + "," + csv_quote(o.cell.key()) + "," +
                  csv_quote(o.error) + "\n";
    }
  }
  write_text_file(dir / kMetricsFile, metrics);
  write_text_file(dir / kRunsFile, runs);
  write_text_file(dir / kFailuresFile, failures);
  write_text_file(dir / kTradeoffDpFile, tradeoff_csv(outcomes, false));
  write_text_file(dir / kTradeoffEqopFile, tradeoff_csv(outcomes, true));
  save_plan(plan, dir / kPlanFile);
}

inline SweepSummary cmd_sweep(const ExperimentPlan& plan, std::size_t workers) {
  const auto cells = expand_cells(plan);
  std::optional<Graph> shared;
  if (!plan.graph_path.empty()) shared = load_graph_dir(plan.graph_path);
  const auto outcomes = run_cells(cells, shared ? &*shared : nullptr, workers);
  write_sweep(plan, outcomes, plan.output_dir);
  SweepSummary s;
  s.cells = outcomes.size();
  for (const auto& o : outcomes) s.failed += !o.ok;
  s.output_dir = plan.output_dir;
  return s;
}

// ---------------------------------------------------------------------------
// Thin command wrappers.

inline Graph cmd_generate(const SbmConfig& cfg, const std::filesystem::path& out) {
  Graph g = generate_sbm(cfg);
  save_graph(g, out);
  return g;
}

inline Graph cmd_mask(const std::filesystem::path& graph_dir, MissingnessKind kind,
                      double observed_frac, std::uint64_t seed, std::size_t radius,
                      const std::filesystem::path& out) {
  const Graph g = load_graph_dir(graph_dir);
  MissingnessSpec spec;
  spec.kind = kind;
  spec.k_observed = observed_count(g.n_nodes(), observed_frac);
  spec.seed = seed;
  spec.radius = radius;
  Graph masked = g.with_observed(make_observed_mask(g, spec));
  save_graph(masked, out);
  return masked;
}

inline TrainReport cmd_train(const std::filesystem::path& graph_dir,
                             const TrainConfig& cfg, const std::filesystem::path& out) {
  const Graph g = load_graph_dir(graph_dir);
  TrainReport rep = train(g, cfg);
  save_run(cfg, rep, out);
  return rep;
}

}  // namespace bfts
