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

// Run configuration shared by the command-line stages.

#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgnsvdd/baselines.hpp"
#include "tgnsvdd/dataio.hpp"
#include "tgnsvdd/error.hpp"
#include "tgnsvdd/svdd.hpp"

namespace tgnsvdd {

enum class Scenario { kWithFeatures, kWithoutFeatures };

inline std::string to_string(Scenario s) {
  return s == Scenario::kWithFeatures ? "with-features" : "without-features";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "with-features") return Scenario::kWithFeatures;
  if (s == "without-features") return Scenario::kWithoutFeatures;
  throw Error("config: scenario must be 'with-features' or 'without-features', got '" + s + "'");
}

struct RunConfig {
  // encoder
  std::size_t memory_dim = 32;
  std::size_t time_dim = 32;
  std::size_t embedding_dim = 32;
  std::size_t heads = 2;
  std::size_t n_neighbors = 10;
  // training
  std::size_t epochs = 25;
  std::size_t batch_size = 200;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  // evaluation
  double quantile = 0.99;
  Scenario scenario = Scenario::kWithFeatures;
  std::size_t n_train = 200000;
  std::size_t n_val = 70000;
  // baselines
  std::size_t lof_k = 20;
  std::size_t if_trees = 100;
  std::size_t if_subsample = 256;
  std::vector<std::string> normal_labels = LabelMapping{}.normal_labels;

  bool operator==(const RunConfig&) const = default;

  // Throws on the first violated invariant.
  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw Error(std::string("config: '") + name + "' must be positive");
    };
    positive(memory_dim, "memory_dim");
    positive(time_dim, "time_dim");
    positive(embedding_dim, "embedding_dim");
    positive(heads, "heads");
    positive(n_neighbors, "n_neighbors");
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    positive(n_train, "n_train");
    positive(lof_k, "lof_k");
    positive(if_trees, "if_trees");
    positive(if_subsample, "if_subsample");
    if (!(quantile > 0.0 && quantile < 1.0)) throw Error("config: 'quantile' must lie in (0, 1)");
    if (!(lr > 0.0)) throw Error("config: 'lr' must be positive");
    if (!(weight_decay >= 0.0)) throw Error("config: 'weight_decay' must be nonnegative");
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.encoder.memory_dim = memory_dim;
    t.encoder.time_dim = time_dim;
    t.encoder.embedding_dim = embedding_dim;
    t.encoder.heads = heads;
    t.encoder.n_neighbors = n_neighbors;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.lr = lr;
    t.adam.weight_decay = weight_decay;
    t.seed = seed;
    return t;
  }

  SplitSpec split() const { return {n_train, n_val}; }
  LabelMapping labels() const { return {normal_labels}; }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"memory_dim", c.memory_dim},
          {"time_dim", c.time_dim},
          {"embedding_dim", c.embedding_dim},
          {"heads", c.heads},
          {"n_neighbors", c.n_neighbors},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"quantile", c.quantile},
          {"scenario", to_string(c.scenario)},
          {"n_train", c.n_train},
          {"n_val", c.n_val},
          {"lof_k", c.lof_k},
          {"if_trees", c.if_trees},
          {"if_subsample", c.if_subsample},
          {"normal_labels", c.normal_labels}};
}

// Values present in `j` override `base`; unknown keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::ordered_json& j, RunConfig base = {}) {
  if (!j.is_object()) throw Error("config: top level must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "memory_dim") base.memory_dim = value.get<std::size_t>();
      else if (key == "time_dim") base.time_dim = value.get<std::size_t>();
      else if (key == "embedding_dim") base.embedding_dim = value.get<std::size_t>();
      else if (key == "heads") base.heads = value.get<std::size_t>();
      else if (key == "n_neighbors") base.n_neighbors = value.get<std::size_t>();
      else if (key == "epochs") base.epochs = value.get<std::size_t>();
      else if (key == "batch_size") base.batch_size = value.get<std::size_t>();
      else if (key == "lr") base.lr = value.get<double>();
      else if (key == "weight_decay") base.weight_decay = value.get<double>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "quantile") base.quantile = value.get<double>();
      else if (key == "scenario") base.scenario = parse_scenario(value.get<std::string>());
      else if (key == "n_train") base.n_train = value.get<std::size_t>();
      else if (key == "n_val") base.n_val = value.get<std::size_t>();
      else if (key == "lof_k") base.lof_k = value.get<std::size_t>();
      else if (key == "if_trees") base.if_trees = value.get<std::size_t>();
      else if (key == "if_subsample") base.if_subsample = value.get<std::size_t>();
      else if (key == "normal_labels") base.normal_labels = value.get<std::vector<std::string>>();
      else throw Error("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("config: bad value for '" + key + "': " + e.what());
    }
  }
  return base;
}

// Reads a JSON config file. An empty file yields the defaults.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace tgnsvdd
