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

// One-class head on top of the temporal encoder. An event (i, j, t) is
// scored by the squared distance of z_i(t) ⊕ z_j(t) to a trainable center;
// training minimises the mean score with decoupled weight decay on the
// encoder weights.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgnsvdd/autodiff.hpp"
#include "tgnsvdd/ctdg.hpp"
#include "tgnsvdd/optim.hpp"
#include "tgnsvdd/tgn_encoder.hpp"

namespace tgnsvdd {

struct TrainConfig {
  EncoderConfig encoder;
  std::size_t epochs = 25;
  std::size_t batch_size = 200;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
};

struct TrainingLog {
  std::vector<double> epoch_mean_scores;  // mean train score seen during each epoch
  std::vector<double> batch_losses;
  std::vector<double> val_mean_scores;  // after each epoch, when validation is given
  double final_score_mean = 0.0;
  double final_score_std = 0.0;
  bool collapsed = false;
  std::vector<std::string> warnings;
};

struct SvddHead {
  ad::Tensor center;  // [1, 2p]
};

struct TgnSvddModel {
  TrainConfig config;
  EncoderParams encoder;
  SvddHead head;
  std::optional<double> threshold;
  TrainingLog log;

  // Encoder weights decay, the center does not.
  std::vector<ad::Parameter> parameters() const {
    auto ps = encoder.parameters();
    ps.push_back({"svdd.center", head.center, false});
    return ps;
  }
};

// ||(z_i ⊕ z_j) - c||^2
inline double score_event(std::span<const double> z_i, std::span<const double> z_j, const SvddHead& head) {
  const auto c = head.center.value();
  if (z_i.size() != z_j.size() || z_i.size() + z_j.size() != c.size()) {
    throw Error("score_event: embeddings of size " + std::to_string(z_i.size()) + " and " +
                std::to_string(z_j.size()) + " do not match center of size " + std::to_string(c.size()));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < z_i.size(); ++k) s += (z_i[k] - c[k]) * (z_i[k] - c[k]);
  for (std::size_t k = 0; k < z_j.size(); ++k) {
    const double d = z_j[k] - c[z_i.size() + k];
    s += d * d;
  }
  return s;
}

inline ad::Tensor svdd_loss(ad::Graph& g, const ad::Tensor& scores) {
  if (scores.size() == 0) throw Error("svdd_loss: empty batch");
  return g.mean(scores);
}

inline double svdd_loss(std::span<const double> scores) {
  if (scores.empty()) throw Error("svdd_loss: empty batch");
  double s = 0.0;
  for (double x : scores) s += x;
  return s / static_cast<double>(scores.size());
}

namespace detail {

// Concatenated endpoint embeddings [B, 2p] for a batch.
inline ad::Tensor pair_embeddings(ad::Graph& g, const EncoderParams& p, const MemoryStore& memory,
                                  const TemporalGraph& graph, std::span<const Event> batch) {
  std::vector<EmbeddingQuery> queries;
  queries.reserve(2 * batch.size());
  for (const auto& ev : batch) {
    queries.push_back({ev.src, ev.time});
    queries.push_back({ev.dst, ev.time});
  }
  auto z = embed_batch(g, p, memory, graph, queries).z;
  const std::size_t dim = p.config.embedding_dim;
  return g.reshape(z, {batch.size(), 2 * dim});
}

inline ad::Tensor batch_scores(ad::Graph& g, const EncoderParams& p, const ad::Tensor& center,
                               const MemoryStore& memory, const TemporalGraph& graph,
                               std::span<const Event> batch) {
  auto x = pair_embeddings(g, p, memory, graph, batch);
  return g.row_squared_norm(g.add_row(x, g.scale(center, -1.0)));
}

inline void require_one_class(const EventStream& s, const char* op) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].label.is_attack()) {
      throw Error(std::string(op) + ": training stream contains an attack event at index " + std::to_string(i));
    }
  }
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

// Scores every event of `stream` replayed from zero memory.
inline std::vector<double> score_stream(const TgnSvddModel& model, const EventStream& stream) {
  const EncoderParams p = model.encoder.detached();
  const ad::Tensor center = model.head.center.detach();
  TemporalGraph graph(stream);
  MemoryStore memory(stream.node_count(), p.config.memory_dim);
  std::vector<double> scores;
  scores.reserve(stream.size());
  for (auto batch : chronological_batches(stream, model.config.batch_size)) {
    ad::Graph g;
    auto s = detail::batch_scores(g, p, center, memory, graph, batch);
    scores.insert(scores.end(), s.value().begin(), s.value().end());
    update_memory(memory, batch, p);
  }
  return scores;
}

// Trains encoder and center jointly on a benign-only stream. Each epoch
// replays the stream from zero memory; per batch the loss is taken on
// pre-batch memory, then memory absorbs the batch.
inline TgnSvddModel fit(const EventStream& train, TrainConfig config,
                        const EventStream* validation = nullptr) {
  if (train.empty()) throw Error("fit: empty training stream");
  if (config.epochs == 0 || config.batch_size == 0) throw Error("fit: epochs and batch_size must be >= 1");
  detail::require_one_class(train, "fit");
  config.encoder.edge_dim = train.feature_dim();

  TgnSvddModel model;
  model.config = config;
  model.encoder = EncoderParams::init(config.encoder, config.seed);
  const std::size_t dim = config.encoder.embedding_dim;

  TemporalGraph graph(train);
  MemoryStore memory(train.node_count(), config.encoder.memory_dim);
  auto batches = chronological_batches(train, config.batch_size);

  // Center starts at the mean pair embedding of the first batch.
  {
    ad::Graph g;
    auto x = detail::pair_embeddings(g, model.encoder.detached(), memory, graph, batches.front());
    std::vector<double> c(2 * dim, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t k = 0; k < 2 * dim; ++k) c[k] += x.at(r, k) / static_cast<double>(x.rows());
    model.head.center = ad::Tensor::parameter({1, 2 * dim}, std::move(c));
  }

  auto params = model.parameters();
  ad::AdamState adam{config.adam, 0, {}, {}};
  std::vector<double> epoch_scores;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    reset_memory(memory);
    epoch_scores.clear();
    for (auto batch : batches) {
      ad::zero_grad(params);
      ad::Graph g;
      auto scores = detail::batch_scores(g, model.encoder, model.head.center, memory, graph, batch);
      auto loss = svdd_loss(g, scores);
      g.backward(loss);
      model.log.batch_losses.push_back(loss.item());
      epoch_scores.insert(epoch_scores.end(), scores.value().begin(), scores.value().end());
      ad::adam_step(params, adam);
      update_memory(memory, batch, model.encoder.detached());
    }
    model.log.epoch_mean_scores.push_back(detail::mean_of(epoch_scores));
    if (validation != nullptr && !validation->empty()) {
      auto all = score_stream(model, concat_streams(train, *validation));
      model.log.val_mean_scores.push_back(
          detail::mean_of(std::span<const double>(all).subspan(train.size())));
    }
  }
  for (auto& p : params) p.tensor.clear_grad();

  // Collapse monitor over the last epoch's scores.
  const double mean = detail::mean_of(epoch_scores);
  double var = 0.0;
  for (double s : epoch_scores) var += (s - mean) * (s - mean);
  model.log.final_score_mean = mean;
  model.log.final_score_std = std::sqrt(var / static_cast<double>(epoch_scores.size()));
  if (model.log.final_score_std < 1e-10 && mean < 1e-10) {
    model.log.collapsed = true;
    model.log.warnings.push_back("fit: embeddings collapsed onto the center (score mean and std < 1e-10)");
  }
  return model;
}

// Linear-interpolation quantile of the empirical distribution: position
// q * (n - 1) in the sorted sample.
inline double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double calibrate_threshold(TgnSvddModel& model, const EventStream& train, double q = 0.99) {
  if (train.empty()) throw Error("calibrate_threshold: empty stream");
  if (!(q > 0.0 && q < 1.0)) throw Error("calibrate_threshold: quantile must lie in (0, 1)");
  model.threshold = empirical_quantile(score_stream(model, train), q);
  return *model.threshold;
}

struct Prediction {
  double score = 0.0;
  bool attack = false;
};

// Scores `stream` with memory carried over from replaying `history` (the
// train and validation events) first. Attack iff score > threshold.
inline std::vector<Prediction> predict_stream(const TgnSvddModel& model, const EventStream& history,
                                              const EventStream& stream) {
  if (!model.threshold) throw Error("predict_stream: model threshold is not calibrated");
  auto scores = score_stream(model, concat_streams(history, stream));
  std::vector<Prediction> out;
  out.reserve(stream.size());
  for (std::size_t i = history.size(); i < scores.size(); ++i) {
    out.push_back({scores[i], scores[i] > *model.threshold});
  }
  return out;
}

// ---- serialisation --------------------------------------------------------

inline nlohmann::ordered_json to_json(const EncoderConfig& c) {
  return {{"memory_dim", c.memory_dim}, {"time_dim", c.time_dim}, {"embedding_dim", c.embedding_dim},
          {"edge_dim", c.edge_dim},     {"heads", c.heads},       {"n_neighbors", c.n_neighbors}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::ordered_json& j) {
  EncoderConfig c;
  c.memory_dim = j.at("memory_dim").get<std::size_t>();
  c.time_dim = j.at("time_dim").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.edge_dim = j.at("edge_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.n_neighbors = j.at("n_neighbors").get<std::size_t>();
  return c;
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"weight_decay", c.adam.weight_decay},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.adam.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("eps").get<double>();
  c.adam.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::ordered_json to_json(const TgnSvddModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "tgnsvdd-model";
  j["version"] = 1;
  j["config"] = to_json(m.config);
  j["threshold"] = m.threshold ? nlohmann::ordered_json(*m.threshold) : nlohmann::ordered_json(nullptr);
  j["training"] = {{"epoch_mean_scores", m.log.epoch_mean_scores},
                   {"val_mean_scores", m.log.val_mean_scores},
                   {"final_score_mean", m.log.final_score_mean},
                   {"final_score_std", m.log.final_score_std},
                   {"collapsed", m.log.collapsed}};
  j["checkpoint"] = ad::checkpoint_to_json(m.parameters());
  return j;
}

inline TgnSvddModel model_from_json(const nlohmann::ordered_json& j) {
  if (j.value("format", "") != "tgnsvdd-model") throw Error("model: unrecognised file format");
  if (j.value("version", 0) != 1) throw Error("model: unsupported version");
  TgnSvddModel m;
  m.config = train_config_from_json(j.at("config"));
  m.encoder = EncoderParams::init(m.config.encoder, 0);
  m.head.center = ad::Tensor::parameter({1, 2 * m.config.encoder.embedding_dim},
                                        std::vector<double>(2 * m.config.encoder.embedding_dim, 0.0));
  auto params = m.parameters();
  ad::checkpoint_from_json(j.at("checkpoint"), params);
  if (!j.at("threshold").is_null()) m.threshold = j.at("threshold").get<double>();
  const auto& t = j.at("training");
  m.log.epoch_mean_scores = t.at("epoch_mean_scores").get<std::vector<double>>();
  m.log.val_mean_scores = t.at("val_mean_scores").get<std::vector<double>>();
  m.log.final_score_mean = t.at("final_score_mean").get<double>();
  m.log.final_score_std = t.at("final_score_std").get<double>();
  m.log.collapsed = t.at("collapsed").get<bool>();
  return m;
}

}  // namespace tgnsvdd
