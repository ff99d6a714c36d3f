/*
 * Copyright 2026 The tgnsvdd Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line stages of the detection pipeline. Each subcommand reads and
// writes only the files named by its flags.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgnsvdd/baselines.hpp"
#include "tgnsvdd/config.hpp"
#include "tgnsvdd/dataio.hpp"
#include "tgnsvdd/eval.hpp"
#include "tgnsvdd/svdd.hpp"

namespace tgnsvdd::cli {

using Json = nlohmann::ordered_json;

// Optional per-field overrides layered over the config file.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::size_t> memory_dim, time_dim, embedding_dim, heads, n_neighbors, epochs, batch_size;
  std::optional<double> lr, weight_decay, quantile;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scenario;
  std::optional<std::size_t> n_train, n_val, lof_k, if_trees, if_subsample;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration; flags override its values");
    app->add_option("--memory-dim", memory_dim);
    app->add_option("--time-dim", time_dim);
    app->add_option("--embedding-dim", embedding_dim);
    app->add_option("--heads", heads);
    app->add_option("--n-neighbors", n_neighbors);
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--weight-decay", weight_decay);
    app->add_option("--quantile", quantile, "threshold quantile of train scores");
    app->add_option("--seed", seed);
    app->add_option("--scenario", scenario, "with-features | without-features");
    app->add_option("--n-train", n_train);
    app->add_option("--n-val", n_val);
    app->add_option("--lof-k", lof_k);
    app->add_option("--if-trees", if_trees);
    app->add_option("--if-subsample", if_subsample);
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    auto set = [](auto& field, const auto& opt) {
      if (opt) field = *opt;
    };
    set(c.memory_dim, memory_dim);
    set(c.time_dim, time_dim);
    set(c.embedding_dim, embedding_dim);
    set(c.heads, heads);
    set(c.n_neighbors, n_neighbors);
    set(c.epochs, epochs);
    set(c.batch_size, batch_size);
    set(c.lr, lr);
    set(c.weight_decay, weight_decay);
    set(c.quantile, quantile);
    set(c.seed, seed);
    if (scenario) c.scenario = parse_scenario(*scenario);
    set(c.n_train, n_train);
    set(c.n_val, n_val);
    set(c.lof_k, lof_k);
    set(c.if_trees, if_trees);
    set(c.if_subsample, if_subsample);
    c.validate();
    return c;
  }
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline EventStream load_stream(const std::string& path, const RunConfig& cfg) {
  return load_temporal_csv(path, cfg.labels(), IdMode::kDense).stream;
}

inline std::vector<ScoreRow> score_rows(const EventStream& stream, std::size_t first_index,
                                        std::span<const double> scores, double threshold,
                                        const std::vector<bool>& predicted) {
  std::vector<ScoreRow> rows;
  rows.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Event& ev = stream[i];
    rows.push_back({first_index + i, ev.time, ev.src, ev.dst, scores[i], threshold, ev.label, predicted[i]});
  }
  return rows;
}

inline void write_scores(const std::string& path, std::span<const ScoreRow> rows, const Json& meta) {
  std::ostringstream os;
  write_score_csv(rows, os);
  write_text(path, os.str());
  write_json(path + ".meta.json", meta);
}

// Fraction of attacks in the test slice, the contamination handed to the
// shallow baselines.
inline double contamination_of(const EventStream& test) {
  std::size_t attacks = 0;
  for (const auto& ev : test.events()) attacks += ev.label.is_attack() ? 1 : 0;
  if (attacks == 0) throw Error("baseline: test slice has no attack events, contamination is undefined");
  return std::min(0.5, static_cast<double>(attacks) / static_cast<double>(test.size()));
}

inline double cut_score(std::span<const double> scores, const std::vector<bool>& labels) {
  double cut = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i]) cut = std::min(cut, scores[i]);
  return cut;
}

}  // namespace detail

inline int cmd_synth(const SynthConfig& sc, const std::string& out_path) {
  Dataset ds = synth_generate(sc);
  std::ostringstream os;
  save_keyed_csv(ds, os);
  detail::write_text(out_path, os.str());
  Json meta;
  meta["generator"] = {{"n_nodes", sc.n_nodes},
                       {"n_benign_events", sc.n_benign_events},
                       {"n_attack_events", sc.n_attack_events},
                       {"attacker_count", sc.attacker_count},
                       {"victim_count", sc.victim_count},
                       {"n_features", sc.n_features},
                       {"attack_start_fraction", sc.attack_start_fraction},
                       {"hard_mode", sc.hard_mode},
                       {"seed", sc.seed}};
  meta["events"] = ds.stream.size();
  meta["nodes"] = ds.node_keys.size();
  detail::write_json(out_path + ".meta.json", meta);
  return 0;
}

inline int cmd_prepare(const RunConfig& cfg, const std::string& input, const std::string& attack_day,
                       const std::string& out_dir) {
  Dataset ds = load_temporal_csv(input, cfg.labels());
  if (!attack_day.empty()) ds = stitch_days(ds, load_temporal_csv(attack_day, cfg.labels()));
  chrono_split(ds.stream, cfg.split());  // leak guard
  const FeatureScaling scaling = fit_scaling(ds.stream, cfg.n_train);
  EventStream stream = apply_scaling(ds.stream, scaling);
  if (cfg.scenario == Scenario::kWithoutFeatures) stream = zero_features(stream);

  std::filesystem::create_directories(out_dir);
  std::ostringstream os;
  save_temporal_csv(stream, os);
  detail::write_text(out_dir + "/stream.csv", os.str());
  std::ostringstream nodes;
  nodes << "id,key\n";
  for (std::size_t i = 0; i < ds.node_keys.size(); ++i) nodes << i << ',' << ds.node_keys[i] << '\n';
  detail::write_text(out_dir + "/nodes.csv", nodes.str());
  Json meta;
  meta["config"] = to_json(cfg);
  meta["events"] = stream.size();
  meta["nodes"] = ds.node_keys.size();
  meta["features"] = stream.feature_dim();
  meta["split"] = {{"train", cfg.n_train}, {"val", cfg.n_val}, {"test", stream.size() - cfg.n_train - cfg.n_val}};
  meta["scaling"] = {{"min", scaling.min}, {"max", scaling.max}};
  detail::write_json(out_dir + "/prepare.json", meta);
  return 0;
}

inline int cmd_train(const RunConfig& cfg, const std::string& stream_path, const std::string& model_path,
                     bool monitor_validation, std::ostream& err) {
  const auto split = chrono_split(detail::load_stream(stream_path, cfg), cfg.split());
  TgnSvddModel model = fit(split.train, cfg.train_config(), monitor_validation ? &split.val : nullptr);
  for (const auto& w : model.log.warnings) err << "warning: " << w << '\n';
  Json j = to_json(model);
  j["run_config"] = to_json(cfg);
  detail::write_json(model_path, j);
  return 0;
}

inline int cmd_calibrate(const RunConfig& cfg, const std::string& model_path, const std::string& stream_path,
                         const std::string& out_path) {
  TgnSvddModel model = model_from_json(detail::read_json(model_path));
  const auto split = chrono_split(detail::load_stream(stream_path, cfg), cfg.split());
  calibrate_threshold(model, split.train, cfg.quantile);
  Json j = to_json(model);
  j["run_config"] = to_json(cfg);
  detail::write_json(out_path, j);
  return 0;
}

inline int cmd_predict(const RunConfig& cfg, const std::string& model_path, const std::string& stream_path,
                       const std::string& scores_path) {
  TgnSvddModel model = model_from_json(detail::read_json(model_path));
  if (!model.threshold) throw Error("predict_stream: model threshold is not calibrated (run calibrate first)");
  const EventStream stream = detail::load_stream(stream_path, cfg);
  chrono_split(stream, cfg.split());
  const auto scores = score_stream(model, stream);
  std::vector<bool> predicted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] > *model.threshold;
  Json meta;
  meta["model"] = "TGN-SVDD";
  meta["config"] = to_json(cfg);
  meta["test_start"] = cfg.n_train + cfg.n_val;
  detail::write_scores(scores_path, detail::score_rows(stream, 0, scores, *model.threshold, predicted), meta);
  return 0;
}

inline int cmd_baseline(const RunConfig& cfg, const std::string& method, const std::string& stream_path,
                        const std::string& scores_path, std::ostream& err) {
  const EventStream stream = detail::load_stream(stream_path, cfg);
  const auto split = chrono_split(stream, cfg.split());
  const std::size_t test_start = cfg.n_train + cfg.n_val;
  Json meta;
  meta["config"] = to_json(cfg);
  meta["test_start"] = test_start;
  std::vector<ScoreRow> rows;
  if (method == "tgn") {
    VanillaTgnModel model = vanilla_tgn_fit(split.train, cfg.train_config());
    const double tau = vanilla_tgn_calibrate(model, split.train, cfg.quantile);
    const auto scores = vanilla_tgn_scores(model, stream);
    std::vector<bool> predicted(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] > tau;
    rows = detail::score_rows(stream, 0, scores, tau, predicted);
    meta["model"] = "TGN";
  } else {
    const double rho = detail::contamination_of(split.test);
    const TabularView test = TabularView::from_stream(split.test);
    std::vector<double> scores;
    std::vector<bool> labels;
    if (method == "lof-novelty" || method == "lof-outlier") {
      const bool novelty = method == "lof-novelty";
      const TabularView train = TabularView::from_stream(split.train);
      scores = lof_scores(novelty ? &train : nullptr, test, cfg.lof_k, novelty ? LofMode::kNovelty : LofMode::kOutlier);
      labels = label_top_fraction(scores, rho);
      meta["model"] = novelty ? "LOF (novelty)" : "LOF (outlier)";
    } else if (method == "iforest") {
      auto r = isolation_forest(test, test, {cfg.if_trees, cfg.if_subsample, rho, cfg.seed});
      for (const auto& w : r.warnings) err << "warning: " << w << '\n';
      scores = std::move(r.scores);
      labels = std::move(r.attack);
      meta["model"] = "Isolation Forest";
    } else {
      throw Error("baseline: unknown method '" + method + "' (lof-novelty, lof-outlier, iforest, tgn)");
    }
    meta["contamination"] = rho;
    rows = detail::score_rows(split.test, test_start, scores, detail::cut_score(scores, labels), labels);
  }
  detail::write_scores(scores_path, rows, meta);
  return 0;
}

// Most frequent source in `train` other than `exclude`.
inline NodeId busiest_source(const EventStream& train, NodeId exclude) {
  std::map<NodeId, std::size_t> counts;
  for (const auto& ev : train.events())
    if (ev.src != exclude) ++counts[ev.src];
  if (counts.empty()) throw Error("inject-experiment: no donor candidates");
  return std::max_element(counts.begin(), counts.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second; })
      ->first;
}

struct InjectionOutcome {
  NodeId donor = 0;
  NodeId suspect = 0;
  std::size_t injected = 0;
  double threshold = 0.0;
  double suspect_train_below = 0.0;  // suspect-sourced train events (injected included) at or under threshold
  std::size_t suspect_normal_test = 0;
  double suspect_normal_test_below = 0.0;
  double test_roc_auc = 0.0;
  std::vector<double> scores;  // every event of the injected stream
  EventStream stream;          // injected train + val + test
  std::size_t test_start = 0;
};

// Adds n copies of donor events with the suspect as source to the training
// slice, retrains, calibrates and scores the whole timeline.
inline InjectionOutcome run_injection(const EventStream& stream, const RunConfig& cfg, NodeId suspect,
                                      std::optional<NodeId> donor, std::size_t n, std::uint64_t seed) {
  const auto split = chrono_split(stream, cfg.split());
  InjectionOutcome o;
  o.suspect = suspect;
  o.donor = donor ? *donor : busiest_source(split.train, suspect);
  o.injected = n;
  const EventStream train = inject_identity_swap(split.train, o.donor, suspect, n, seed);
  TgnSvddModel model = fit(train, cfg.train_config());
  o.threshold = calibrate_threshold(model, train, cfg.quantile);
  const EventStream history = concat_streams(train, split.val);
  o.stream = concat_streams(history, split.test);
  o.test_start = history.size();
  o.scores = score_stream(model, o.stream);

  std::size_t below = 0, total = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].src != suspect) continue;
    ++total;
    below += o.scores[i] <= o.threshold ? 1 : 0;
  }
  o.suspect_train_below = total == 0 ? 1.0 : static_cast<double>(below) / static_cast<double>(total);

  std::vector<bool> truth;
  std::vector<double> test_scores;
  below = 0;
  for (std::size_t i = o.test_start; i < o.stream.size(); ++i) {
    const Event& ev = o.stream[i];
    truth.push_back(ev.label.is_attack());
    test_scores.push_back(o.scores[i]);
    if (!ev.label.is_attack() && (ev.src == suspect || ev.dst == suspect)) {
      ++o.suspect_normal_test;
      below += o.scores[i] <= o.threshold ? 1 : 0;
    }
  }
  o.suspect_normal_test_below =
      o.suspect_normal_test == 0 ? 1.0 : static_cast<double>(below) / static_cast<double>(o.suspect_normal_test);
  o.test_roc_auc = roc_auc(truth, test_scores);
  return o;
}

inline int cmd_inject(const RunConfig& cfg, const std::string& stream_path, const std::string& out_dir,
                      NodeId suspect, std::optional<NodeId> donor, std::size_t n, std::uint64_t inject_seed) {
  const EventStream stream = detail::load_stream(stream_path, cfg);
  InjectionOutcome o = run_injection(stream, cfg, suspect, donor, n, inject_seed);
  std::filesystem::create_directories(out_dir);
  std::ostringstream os;
  save_temporal_csv(o.stream, os);
  detail::write_text(out_dir + "/injected_stream.csv", os.str());
  std::vector<bool> predicted(o.scores.size());
  for (std::size_t i = 0; i < o.scores.size(); ++i) predicted[i] = o.scores[i] > o.threshold;
  Json meta;
  meta["model"] = "TGN-SVDD";
  meta["config"] = to_json(cfg);
  meta["test_start"] = o.test_start;
  detail::write_scores(out_dir + "/scores.csv", detail::score_rows(o.stream, 0, o.scores, o.threshold, predicted),
                       meta);
  Json summary;
  summary["config"] = to_json(cfg);
  summary["donor"] = o.donor;
  summary["suspect"] = o.suspect;
  summary["injected"] = o.injected;
  summary["inject_seed"] = inject_seed;
  summary["threshold"] = o.threshold;
  summary["suspect_train_below_threshold"] = o.suspect_train_below;
  summary["suspect_normal_test_events"] = o.suspect_normal_test;
  summary["suspect_normal_test_below_threshold"] = o.suspect_normal_test_below;
  summary["test_start"] = o.test_start;
  summary["test_roc_auc"] = o.test_roc_auc;
  detail::write_json(out_dir + "/summary.json", summary);
  return 0;
}

// Each run spec is "<scenario>/<model name>=<score csv>".
inline int cmd_report(const RunConfig& cfg, const std::vector<std::string>& run_specs, std::optional<std::size_t> test_start,
                      const std::string& out_path) {
  const std::size_t start = test_start ? *test_start : cfg.n_train + cfg.n_val;
  std::vector<ModelRun> runs;
  for (const auto& spec : run_specs) {
    const auto eq = spec.find('=');
    const auto slash = spec.find('/');
    if (eq == std::string::npos || slash == std::string::npos || slash > eq) {
      throw Error("report: run spec '" + spec + "' must look like <scenario>/<model>=<scores.csv>");
    }
    ModelRun run;
    run.scenario = to_string(parse_scenario(spec.substr(0, slash)));
    run.model = spec.substr(slash + 1, eq - slash - 1);
    const std::string path = spec.substr(eq + 1);
    std::ifstream in(path);
    if (!in) throw Error("report: cannot open '" + path + "'");
    for (const auto& row : read_score_csv(in, cfg.labels())) {
      if (row.event_index < start) continue;
      run.truth.push_back(row.truth);
      run.scores.push_back(row.score);
      run.predicted.push_back(row.predicted_attack);
    }
    if (run.truth.empty()) throw Error("report: '" + path + "' has no test rows (event_index >= " + std::to_string(start) + ")");
    runs.push_back(std::move(run));
  }
  Json config = to_json(cfg);
  config["test_start"] = start;
  detail::write_json(out_path, report(runs, config));
  return 0;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"tgnsvdd: one-class intrusion detection on temporal flow graphs"};
  app.require_subcommand(1);
  ConfigFlags flags;

  SynthConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a labelled synthetic flow CSV");
  synth->add_option("--out", synth_out, "output CSV")->required();
  synth->add_option("--seed", sc.seed);
  synth->add_option("--n-nodes", sc.n_nodes);
  synth->add_option("--n-benign", sc.n_benign_events);
  synth->add_option("--n-attack", sc.n_attack_events);
  synth->add_option("--attackers", sc.attacker_count);
  synth->add_option("--victims", sc.victim_count);
  synth->add_option("--features", sc.n_features);
  synth->add_option("--attack-start", sc.attack_start_fraction, "fraction of benign events before attacks begin");
  synth->add_flag("--hard-mode", sc.hard_mode, "attackers reuse benign host ids");

  std::string input, attack_day, out_dir;
  auto* prepare = app.add_subcommand("prepare", "load, stitch, split-check, scale and write the canonical stream");
  prepare->add_option("--input", input, "temporal adjacency-list CSV")->required();
  prepare->add_option("--attack-day", attack_day, "second day appended after --input");
  prepare->add_option("--out-dir", out_dir)->required();
  flags.attach(prepare);

  std::string stream_path, model_path, out_path, scores_path;
  bool monitor = false;
  auto* train = app.add_subcommand("train", "fit the TGN-SVDD model on the train slice");
  train->add_option("--stream", stream_path)->required();
  train->add_option("--model", model_path, "output model JSON")->required();
  train->add_flag("--monitor-validation", monitor, "record mean validation score after every epoch");
  flags.attach(train);

  auto* calibrate = app.add_subcommand("calibrate", "set the threshold to a train-score quantile");
  calibrate->add_option("--model", model_path)->required();
  calibrate->add_option("--stream", stream_path)->required();
  calibrate->add_option("--out", out_path, "calibrated model JSON")->required();
  flags.attach(calibrate);

  auto* predict = app.add_subcommand("predict", "score every event and label by the threshold");
  predict->add_option("--model", model_path)->required();
  predict->add_option("--stream", stream_path)->required();
  predict->add_option("--scores", scores_path, "score CSV")->required();
  flags.attach(predict);

  std::string method;
  auto* baseline = app.add_subcommand("baseline", "run a reference detector");
  baseline->add_option("--method", method, "lof-novelty | lof-outlier | iforest | tgn")->required();
  baseline->add_option("--stream", stream_path)->required();
  baseline->add_option("--scores", scores_path)->required();
  flags.attach(baseline);

  std::uint32_t suspect = 0;
  std::optional<std::uint32_t> donor;
  std::size_t n_inject = 500;
  std::uint64_t inject_seed = 0;
  auto* inject = app.add_subcommand("inject-experiment", "inject suspect-identity copies into train and retrain");
  inject->add_option("--stream", stream_path)->required();
  inject->add_option("--out-dir", out_dir)->required();
  inject->add_option("--suspect", suspect)->required();
  inject->add_option("--donor", donor, "defaults to the busiest train source");
  inject->add_option("--n", n_inject);
  inject->add_option("--inject-seed", inject_seed);
  flags.attach(inject);

  std::vector<std::string> run_specs;
  std::optional<std::size_t> test_start;
  auto* rep = app.add_subcommand("report", "metrics JSON from score CSVs");
  rep->add_option("--run", run_specs, "<scenario>/<model>=<scores.csv>, repeatable")->required();
  rep->add_option("--test-start", test_start, "first test event index (default n_train + n_val)");
  rep->add_option("--out", out_path)->required();
  flags.attach(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) err << app.help();
    return code;
  }

  try {
    if (synth->parsed()) return cmd_synth(sc, synth_out);
    const RunConfig cfg = flags.resolve();
    if (prepare->parsed()) return cmd_prepare(cfg, input, attack_day, out_dir);
    if (train->parsed()) return cmd_train(cfg, stream_path, model_path, monitor, err);
    if (calibrate->parsed()) return cmd_calibrate(cfg, model_path, stream_path, out_path);
    if (predict->parsed()) return cmd_predict(cfg, model_path, stream_path, scores_path);
    if (baseline->parsed()) return cmd_baseline(cfg, method, stream_path, scores_path, err);
    if (inject->parsed()) return cmd_inject(cfg, stream_path, out_dir, suspect, donor, n_inject, inject_seed);
    if (rep->parsed()) return cmd_report(cfg, run_specs, test_start, out_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace tgnsvdd::cli
