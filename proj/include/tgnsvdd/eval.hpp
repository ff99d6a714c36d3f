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

// Detection metrics and run reporting.

#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgnsvdd/ctdg.hpp"
#include "tgnsvdd/dataio.hpp"
#include "tgnsvdd/error.hpp"

namespace tgnsvdd {

struct BinaryMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Attack is the positive class. Zero denominators give 0.
inline BinaryMetrics binary_metrics(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size()) {
    throw Error("binary_metrics: " + std::to_string(truth.size()) + " labels vs " +
                std::to_string(predicted.size()) + " predictions");
  }
  BinaryMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      predicted[i] ? ++m.tp : ++m.fn;
    } else {
      predicted[i] ? ++m.fp : ++m.tn;
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

// Area under the ROC curve as the Mann-Whitney statistic with midranks for
// ties: P(score_attack > score_normal) + P(tie) / 2.
inline double roc_auc(const std::vector<bool>& truth, std::span<const double> scores) {
  if (truth.size() != scores.size()) throw Error("roc_auc: label and score counts differ");
  const std::size_t n = truth.size();
  const std::size_t n_pos = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error("roc_auc: truth contains a single class (" + std::to_string(n_pos) + " attack, " +
                std::to_string(n_neg) + " normal); AUC is undefined");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (truth[order[k]]) rank_sum += midrank;
    i = j;
  }
  const double u = rank_sum - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Rows: true class ("Normal" or an attack name). Columns: predicted Normal /
// predicted Attack.
struct ConfusionRow {
  std::size_t predicted_normal = 0;
  std::size_t predicted_attack = 0;
  std::size_t support() const { return predicted_normal + predicted_attack; }
};

using ConfusionTable = std::map<std::string, ConfusionRow>;

inline ConfusionTable per_attack_confusion(std::span<const Label> truth, const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size()) throw Error("per_attack_confusion: length mismatch");
  ConfusionTable table;
  table["Normal"];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& row = table[truth[i].is_attack() ? truth[i].attack_name : std::string("Normal")];
    predicted[i] ? ++row.predicted_attack : ++row.predicted_normal;
  }
  return table;
}

inline std::vector<bool> attack_mask(std::span<const Label> labels) {
  std::vector<bool> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i].is_attack();
  return out;
}

// ---- score export ------------------------------------------------------------

// One line of the score CSV:
//   event_index,time,src,dst,score,threshold,true_label,pred_label
// time is in seconds; labels use the CSV label vocabulary ("BENIGN" for
// Normal), pred_label is BENIGN or ATTACK.
struct ScoreRow {
  std::size_t event_index = 0;
  double time = 0.0;
  NodeId src = 0;
  NodeId dst = 0;
  double score = 0.0;
  double threshold = 0.0;
  Label truth;
  bool predicted_attack = false;
};

inline constexpr const char* kScoreCsvHeader = "event_index,time,src,dst,score,threshold,true_label,pred_label";

inline void write_score_csv(std::span<const ScoreRow> rows, std::ostream& out) {
  out << kScoreCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.event_index << ',' << detail::format_double(r.time) << ',' << r.src << ',' << r.dst << ','
        << detail::format_double(r.score) << ',' << detail::format_double(r.threshold) << ','
        << label_text(r.truth) << ',' << (r.predicted_attack ? "ATTACK" : "BENIGN") << '\n';
  }
}

inline std::vector<ScoreRow> read_score_csv(std::istream& in, const LabelMapping& labels = {}) {
  std::string line;
  if (!std::getline(in, line) || std::string(detail::trim(line)) != kScoreCsvHeader) {
    throw Error(std::string("score csv: header must be '") + kScoreCsvHeader + "'");
  }
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto c = detail::split_commas(line);
    const std::string where = "score csv: line " + std::to_string(line_no) + ": ";
    if (c.size() != 8) throw Error(where + "expected 8 fields");
    ScoreRow r;
    std::uint64_t src = 0, dst = 0;
    if (!detail::parse_number(c[0], r.event_index) || !detail::parse_number(c[1], r.time) ||
        !detail::parse_number(c[2], src) || !detail::parse_number(c[3], dst) ||
        !detail::parse_number(c[4], r.score) || !detail::parse_number(c[5], r.threshold)) {
      throw Error(where + "malformed number");
    }
    r.src = static_cast<NodeId>(src);
    r.dst = static_cast<NodeId>(dst);
    r.truth = labels.parse(std::string(detail::trim(c[6])));
    const auto pred = detail::trim(c[7]);
    if (pred != "ATTACK" && pred != "BENIGN") throw Error(where + "pred_label must be ATTACK or BENIGN");
    r.predicted_attack = pred == "ATTACK";
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- reports ----------------------------------------------------------------------

// Scores and binary predictions of one detector on one scenario's test
// events.
struct ModelRun {
  std::string scenario;  // "with-features" or "without-features"
  std::string model;     // e.g. "TGN-SVDD", "LOF (novelty)"
  std::vector<Label> truth;
  std::vector<double> scores;
  std::vector<bool> predicted;
};

inline nlohmann::ordered_json metrics_block(const ModelRun& run) {
  const auto truth = attack_mask(run.truth);
  const auto m = binary_metrics(truth, run.predicted);
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["roc_auc"] = roc_auc(truth, run.scores);
  j["counts"] = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
  nlohmann::ordered_json conf = nlohmann::ordered_json::object();
  for (const auto& [name, row] : per_attack_confusion(run.truth, run.predicted)) {
    conf[name] = {{"predicted_normal", row.predicted_normal}, {"predicted_attack", row.predicted_attack}};
  }
  j["confusion"] = std::move(conf);
  return j;
}

// Metrics document: {format, version, config, scenarios: {scenario: {model:
// block}}}. Scenarios and models appear in the order given.
inline nlohmann::ordered_json report(std::span<const ModelRun> runs, const nlohmann::ordered_json& config) {
  nlohmann::ordered_json j;
  j["format"] = "tgnsvdd-metrics";
  j["version"] = 1;
  j["config"] = config;
  nlohmann::ordered_json scenarios = nlohmann::ordered_json::object();
  for (const auto& run : runs) scenarios[run.scenario][run.model] = metrics_block(run);
  j["scenarios"] = std::move(scenarios);
  return j;
}

// Structural check of a metrics document; returns problems found (empty when
// valid).
inline std::vector<std::string> validate_report(const nlohmann::ordered_json& j) {
  std::vector<std::string> problems;
  auto need = [&](const nlohmann::ordered_json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
      problems.push_back(where + ": missing '" + key + "'");
      return false;
    }
    return true;
  };
  if (!need(j, "format", "root") || j["format"] != "tgnsvdd-metrics") problems.push_back("root: bad format tag");
  need(j, "version", "root");
  need(j, "config", "root");
  if (!need(j, "scenarios", "root")) return problems;
  for (const auto& [scenario, models] : j["scenarios"].items()) {
    if (scenario != "with-features" && scenario != "without-features") {
      problems.push_back("scenario '" + scenario + "' is not with-features or without-features");
    }
    for (const auto& [model, block] : models.items()) {
      const std::string where = scenario + "/" + model;
      for (const char* key : {"precision", "recall", "f1", "roc_auc"}) {
        if (need(block, key, where) && !(block[key].is_number() && block[key] >= 0.0 && block[key] <= 1.0)) {
          problems.push_back(where + ": '" + key + "' must be a number in [0,1]");
        }
      }
      need(block, "counts", where);
      need(block, "confusion", where);
    }
  }
  return problems;
}

}  // namespace tgnsvdd
