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

// Reference detectors: local outlier factor (novelty and outlier modes),
// isolation forest, and a temporal encoder trained for link prediction whose
// anomaly score is 1 - p(event).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgnsvdd/autodiff.hpp"
#include "tgnsvdd/ctdg.hpp"
#include "tgnsvdd/optim.hpp"
#include "tgnsvdd/svdd.hpp"
#include "tgnsvdd/tgn_encoder.hpp"

namespace tgnsvdd {

// Row-major per-event table [src, dst, timestamp, features...].
class TabularView {
 public:
  TabularView() = default;
  TabularView(std::size_t cols, std::vector<double> values) : cols_(cols), values_(std::move(values)) {
    if (cols_ == 0 || values_.size() % cols_ != 0) throw Error("tabular: value count does not match width");
  }

  static TabularView from_stream(const EventStream& s) {
    const std::size_t cols = 3 + s.feature_dim();
    std::vector<double> v;
    v.reserve(s.size() * cols);
    for (const auto& ev : s.events()) {
      v.push_back(static_cast<double>(ev.src));
      v.push_back(static_cast<double>(ev.dst));
      v.push_back(ev.time);
      v.insert(v.end(), ev.features.begin(), ev.features.end());
    }
    return TabularView(cols, std::move(v));
  }

  std::size_t rows() const { return cols_ == 0 ? 0 : values_.size() / cols_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

 private:
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Labels the round(fraction * n) highest-scoring rows as attacks (earlier
// rows win ties).
inline std::vector<bool> label_top_fraction(std::span<const double> scores, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("contamination must lie in [0, 1]");
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(scores.size())));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<bool> out(scores.size(), false);
  for (std::size_t i = 0; i < m; ++i) out[order[i]] = true;
  return out;
}

// ---- local outlier factor ----------------------------------------------------

enum class LofMode { kNovelty, kOutlier };

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct KNeighbors {
  std::vector<std::size_t> index;  // k reference rows, nearest first
  std::vector<double> dist;
};

// k nearest reference rows of `query`, ties broken by lower index. `skip`
// excludes one reference row (the query itself in outlier mode).
inline KNeighbors k_nearest(const TabularView& ref, std::span<const double> query, std::size_t k,
                            std::optional<std::size_t> skip) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(ref.rows());
  for (std::size_t j = 0; j < ref.rows(); ++j) {
    if (skip && *skip == j) continue;
    d.emplace_back(euclidean(query, ref.row(j)), j);
  }
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  KNeighbors out;
  for (std::size_t i = 0; i < k; ++i) {
    out.index.push_back(d[i].second);
    out.dist.push_back(d[i].first);
  }
  return out;
}

// Local reachability density from neighbor distances and the neighbors'
// k-distances. The 1e-10 keeps duplicates finite.
inline double lrd(const KNeighbors& nb, std::span<const double> k_distance) {
  double reach = 0.0;
  for (std::size_t i = 0; i < nb.index.size(); ++i) reach += std::max(k_distance[nb.index[i]], nb.dist[i]);
  return 1.0 / (reach / static_cast<double>(nb.index.size()) + 1e-10);
}

}  // namespace detail

// LOF score per test row (higher = more anomalous). Novelty mode fits the
// neighborhood structure on `train` and scores unseen test rows against it;
// outlier mode scores the test rows among themselves.
inline std::vector<double> lof_scores(const TabularView* train, const TabularView& test, std::size_t k,
                                      LofMode mode) {
  if (k == 0) throw Error("lof: k must be >= 1");
  const TabularView* ref = mode == LofMode::kNovelty ? train : &test;
  if (ref == nullptr) throw Error("lof: novelty mode needs training rows");
  if (k >= ref->rows()) {
    throw Error("lof: k = " + std::to_string(k) + " needs more than " + std::to_string(ref->rows()) +
                " reference rows");
  }
  if (ref->cols() != test.cols()) throw Error("lof: train and test widths differ");

  const std::size_t n_ref = ref->rows();
  std::vector<detail::KNeighbors> ref_nb(n_ref);
  std::vector<double> k_distance(n_ref);
  for (std::size_t i = 0; i < n_ref; ++i) {
    ref_nb[i] = detail::k_nearest(*ref, ref->row(i), k, i);
    k_distance[i] = ref_nb[i].dist.back();
  }
  std::vector<double> ref_lrd(n_ref);
  for (std::size_t i = 0; i < n_ref; ++i) ref_lrd[i] = detail::lrd(ref_nb[i], k_distance);

  std::vector<double> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    const auto nb = mode == LofMode::kOutlier ? ref_nb[i] : detail::k_nearest(*ref, test.row(i), k, std::nullopt);
    const double own = mode == LofMode::kOutlier ? ref_lrd[i] : detail::lrd(nb, k_distance);
    double mean_nb = 0.0;
    for (std::size_t j : nb.index) mean_nb += ref_lrd[j];
    mean_nb /= static_cast<double>(k);
    out[i] = mean_nb / own;
  }
  return out;
}

// ---- isolation forest -----------------------------------------------------------

// Expected path length of an unsuccessful BST search among n points:
// 2 H(n-1) - 2 (n-1) / n, with c(1) = 0 and c(2) = 1.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  const std::size_t m = n - 1;
  double h = 0.0;
  if (m <= 4096) {
    for (std::size_t i = 1; i <= m; ++i) h += 1.0 / static_cast<double>(i);
  } else {
    const double x = static_cast<double>(m);
    h = std::log(x) + 0.5772156649015329 + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x);
  }
  return 2.0 * h - 2.0 * static_cast<double>(m) / static_cast<double>(n);
}

struct IsolationForestConfig {
  std::size_t trees = 100;
  std::size_t subsample = 256;
  double contamination = 0.1;
  std::uint64_t seed = 0;
};

class IsolationForest {
 public:
  IsolationForest(const TabularView& data, IsolationForestConfig cfg) : cfg_(cfg) {
    if (data.rows() == 0) throw Error("isolation_forest: empty fit data");
    if (!(cfg.contamination > 0.0 && cfg.contamination <= 0.5)) {
      throw Error("isolation_forest: contamination must lie in (0, 0.5]");
    }
    if (cfg.trees == 0 || cfg.subsample == 0) throw Error("isolation_forest: trees and subsample must be >= 1");
    if (cfg_.subsample > data.rows()) {
      warnings_.push_back("isolation_forest: subsample " + std::to_string(cfg_.subsample) + " clamped to " +
                          std::to_string(data.rows()) + " rows");
      cfg_.subsample = data.rows();
    }
    max_depth_ = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(cfg_.subsample, 2)))));
    std::mt19937_64 rng(cfg_.seed);
    std::vector<std::size_t> all(data.rows());
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t t = 0; t < cfg_.trees; ++t) {
      std::vector<std::size_t> sample = all;
      std::shuffle(sample.begin(), sample.end(), rng);
      sample.resize(cfg_.subsample);
      Tree tree;
      grow(tree, data, sample, 0, rng);
      trees_.push_back(std::move(tree));
    }
  }

  // Mean isolation depth of `row` across trees, including the c(size)
  // adjustment at external nodes.
  double expected_path_length(std::span<const double> row) const {
    double total = 0.0;
    for (const auto& tree : trees_) {
      std::size_t node = 0, depth = 0;
      while (!tree[node].leaf) {
        node = row[tree[node].feature] < tree[node].split ? tree[node].left : tree[node].right;
        ++depth;
      }
      total += static_cast<double>(depth) + average_path_length(tree[node].size);
    }
    return total / static_cast<double>(trees_.size());
  }

  // 2^{-E[h(x)] / c(psi)}, in (0, 1).
  double score(std::span<const double> row) const { return score_from_path_length(expected_path_length(row)); }

  double score_from_path_length(double h) const {
    return std::pow(2.0, -h / average_path_length(cfg_.subsample));
  }

  std::vector<double> scores(const TabularView& data) const {
    std::vector<double> out(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) out[i] = score(data.row(i));
    return out;
  }

  std::vector<bool> labels(std::span<const double> scores) const {
    return label_top_fraction(scores, cfg_.contamination);
  }

  std::size_t max_depth() const { return max_depth_; }
  const IsolationForestConfig& config() const { return cfg_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Node {
    bool leaf = true;
    std::size_t feature = 0;
    double split = 0.0;
    std::size_t left = 0, right = 0;
    std::size_t size = 0;
  };
  using Tree = std::vector<Node>;

  std::size_t grow(Tree& tree, const TabularView& data, std::vector<std::size_t>& rows, std::size_t depth,
                   std::mt19937_64& rng) {
    const std::size_t id = tree.size();
    tree.push_back({});
    tree[id].size = rows.size();
    if (depth >= max_depth_ || rows.size() <= 1) return id;
    // Features with spread in this node.
    std::vector<std::size_t> candidates;
    std::vector<std::pair<double, double>> range(data.cols());
    for (std::size_t f = 0; f < data.cols(); ++f) {
      double lo = data.row(rows[0])[f], hi = lo;
      for (std::size_t r : rows) {
        lo = std::min(lo, data.row(r)[f]);
        hi = std::max(hi, data.row(r)[f]);
      }
      range[f] = {lo, hi};
      if (hi > lo) candidates.push_back(f);
    }
    if (candidates.empty()) return id;
    const std::size_t f = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    double split = std::uniform_real_distribution<double>(range[f].first, range[f].second)(rng);
    if (split <= range[f].first) split = std::nextafter(range[f].first, range[f].second);
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (data.row(r)[f] < split ? left : right).push_back(r);
    tree[id].leaf = false;
    tree[id].feature = f;
    tree[id].split = split;
    const std::size_t l = grow(tree, data, left, depth + 1, rng);
    const std::size_t r = grow(tree, data, right, depth + 1, rng);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }

  IsolationForestConfig cfg_;
  std::size_t max_depth_ = 0;
  std::vector<Tree> trees_;
  std::vector<std::string> warnings_;
};

struct IsolationForestResult {
  std::vector<double> scores;
  std::vector<bool> attack;
  std::vector<std::string> warnings;
};

inline IsolationForestResult isolation_forest(const TabularView& fit_data, const TabularView& score_data,
                                              const IsolationForestConfig& cfg) {
  IsolationForest forest(fit_data, cfg);
  IsolationForestResult r;
  r.scores = forest.scores(score_data);
  r.attack = forest.labels(r.scores);
  r.warnings = forest.warnings();
  return r;
}

// ---- vanilla TGN link prediction ---------------------------------------------------

struct LinkDecoder {
  ad::Tensor w_src, w_dst, b;   // [p,p], [p,p], [1,p]
  ad::Tensor w_out, b_out;      // [p,1], [1,1]

  static LinkDecoder init(std::size_t p, std::mt19937_64& rng) {
    auto glorot = [&](std::size_t in, std::size_t out) {
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-a, a);
      std::vector<double> v(in * out);
      for (double& x : v) x = u(rng);
      return ad::Tensor::parameter({in, out}, std::move(v));
    };
    LinkDecoder d;
    d.w_src = glorot(p, p);
    d.w_dst = glorot(p, p);
    d.b = ad::Tensor::parameter({1, p}, std::vector<double>(p, 0.0));
    d.w_out = glorot(p, 1);
    d.b_out = ad::Tensor::parameter({1, 1}, {0.0});
    return d;
  }

  // Logits [B,1] for rows of source and destination embeddings.
  ad::Tensor logits(ad::Graph& g, const ad::Tensor& z_src, const ad::Tensor& z_dst) const {
    auto h = g.relu(g.add_row(g.add(g.matmul(z_src, w_src), g.matmul(z_dst, w_dst)), b));
    return g.linear(h, w_out, b_out);
  }

  LinkDecoder detached() const { return {w_src.detach(), w_dst.detach(), b.detach(), w_out.detach(), b_out.detach()}; }
};

struct VanillaTgnModel {
  TrainConfig config;
  EncoderParams encoder;
  LinkDecoder decoder;
  std::optional<double> threshold;
  std::vector<double> epoch_losses;

  std::vector<ad::Parameter> parameters() const {
    auto ps = encoder.parameters();
    ps.push_back({"decoder.w_src", decoder.w_src});
    ps.push_back({"decoder.w_dst", decoder.w_dst});
    ps.push_back({"decoder.b", decoder.b});
    ps.push_back({"decoder.w_out", decoder.w_out});
    ps.push_back({"decoder.b_out", decoder.b_out});
    return ps;
  }
};

// Uniform random destination in [0, node_count) other than `avoid`.
inline NodeId sample_negative(std::size_t node_count, NodeId avoid, std::mt19937_64& rng) {
  if (node_count < 2) throw Error("negative sampling needs at least 2 nodes");
  std::uniform_int_distribution<std::size_t> pick(0, node_count - 2);
  auto v = static_cast<NodeId>(pick(rng));
  return v >= avoid ? v + 1 : v;
}

namespace detail {

inline ad::Tensor link_logits(ad::Graph& g, const EncoderParams& p, const LinkDecoder& dec,
                              const MemoryStore& memory, const TemporalGraph& graph,
                              std::span<const Event> batch, std::span<const NodeId> dst_override) {
  const std::size_t b = batch.size();
  std::vector<EmbeddingQuery> q;
  q.reserve(2 * b);
  for (std::size_t i = 0; i < b; ++i) q.push_back({batch[i].src, batch[i].time});
  for (std::size_t i = 0; i < b; ++i) {
    q.push_back({dst_override.empty() ? batch[i].dst : dst_override[i], batch[i].time});
  }
  auto z = embed_batch(g, p, memory, graph, q).z;
  std::vector<std::size_t> src_rows(b), dst_rows(b);
  std::iota(src_rows.begin(), src_rows.end(), 0);
  std::iota(dst_rows.begin(), dst_rows.end(), b);
  return dec.logits(g, g.gather_rows(z, src_rows), g.gather_rows(z, dst_rows));
}

}  // namespace detail

// Self-supervised next-event prediction: observed events are positives, the
// same source with a uniformly random other destination is the negative.
inline VanillaTgnModel vanilla_tgn_fit(const EventStream& train, TrainConfig config) {
  if (train.empty()) throw Error("vanilla_tgn_fit: empty training stream");
  detail::require_one_class(train, "vanilla_tgn_fit");
  config.encoder.edge_dim = train.feature_dim();
  VanillaTgnModel model;
  model.config = config;
  model.encoder = EncoderParams::init(config.encoder, config.seed);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  model.decoder = LinkDecoder::init(config.encoder.embedding_dim, rng);

  TemporalGraph graph(train);
  MemoryStore memory(train.node_count(), config.encoder.memory_dim);
  auto params = model.parameters();
  ad::AdamState adam{config.adam, 0, {}, {}};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    reset_memory(memory);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (auto batch : chronological_batches(train, config.batch_size)) {
      std::vector<NodeId> negatives(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) negatives[i] = sample_negative(train.node_count(), batch[i].dst, rng);
      ad::zero_grad(params);
      ad::Graph g;
      auto pos = detail::link_logits(g, model.encoder, model.decoder, memory, graph, batch, {});
      auto neg = detail::link_logits(g, model.encoder, model.decoder, memory, graph, batch, negatives);
      auto loss = g.add(g.mean(g.softplus(g.scale(pos, -1.0))), g.mean(g.softplus(neg)));
      g.backward(loss);
      loss_sum += loss.item();
      ++n_batches;
      ad::adam_step(params, adam);
      update_memory(memory, batch, model.encoder.detached());
    }
    model.epoch_losses.push_back(loss_sum / static_cast<double>(n_batches));
  }
  for (auto& p : params) p.tensor.clear_grad();
  return model;
}

// Event probabilities p for every event of `stream` replayed from zero memory.
inline std::vector<double> vanilla_tgn_probabilities(const VanillaTgnModel& model, const EventStream& stream) {
  const EncoderParams p = model.encoder.detached();
  const LinkDecoder dec = model.decoder.detached();
  TemporalGraph graph(stream);
  MemoryStore memory(stream.node_count(), p.config.memory_dim);
  std::vector<double> out;
  out.reserve(stream.size());
  for (auto batch : chronological_batches(stream, model.config.batch_size)) {
    ad::Graph g;
    auto logits = g.sigmoid(detail::link_logits(g, p, dec, memory, graph, batch, {}));
    out.insert(out.end(), logits.value().begin(), logits.value().end());
    update_memory(memory, batch, p);
  }
  return out;
}

// 1 - p per event.
inline std::vector<double> vanilla_tgn_scores(const VanillaTgnModel& model, const EventStream& stream) {
  auto p = vanilla_tgn_probabilities(model, stream);
  for (double& x : p) x = 1.0 - x;
  return p;
}

inline double vanilla_tgn_calibrate(VanillaTgnModel& model, const EventStream& train, double q = 0.99) {
  if (!(q > 0.0 && q < 1.0)) throw Error("vanilla_tgn_calibrate: quantile must lie in (0, 1)");
  model.threshold = empirical_quantile(vanilla_tgn_scores(model, train), q);
  return *model.threshold;
}

}  // namespace tgnsvdd
