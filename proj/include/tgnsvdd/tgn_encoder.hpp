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

// Memory-based temporal graph encoder.
//
// Each node carries a memory vector that is refreshed by a GRU whenever the
// node takes part in an event. Node embeddings at time t come from one layer
// of multi-head attention over the node's most recent interactions, keyed by
// neighbor memory, edge features and a cosine encoding of the elapsed time.
//
// Memory is updated lazily: a node stores the state it had before its last
// message together with that message, and the effective memory is the GRU
// applied to the pair with the current parameters. Inside one batch the
// effective memory therefore carries gradient into the GRU and the time
// encoder, while everything older is a constant.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tgnsvdd/autodiff.hpp"
#include "tgnsvdd/ctdg.hpp"
#include "tgnsvdd/optim.hpp"

namespace tgnsvdd {

struct EncoderConfig {
  std::size_t memory_dim = 32;
  std::size_t time_dim = 32;
  std::size_t embedding_dim = 32;
  std::size_t edge_dim = 0;
  std::size_t heads = 2;
  std::size_t n_neighbors = 10;

  std::size_t head_dim() const { return (embedding_dim + heads - 1) / heads; }
  std::size_t message_dim() const { return 2 * memory_dim + time_dim + edge_dim; }
  std::size_t key_input_dim() const { return memory_dim + edge_dim + time_dim; }
  std::size_t query_input_dim() const { return memory_dim + time_dim; }
};

// Trainable encoder weights. Copies share storage.
struct EncoderParams {
  EncoderConfig config;

  ad::Tensor time_w;  // [1, d_t] frequencies
  ad::Tensor time_b;  // [1, d_t] phases

  ad::Tensor gru_wi;  // [d_msg, 3 d_m]  gates r | z | n
  ad::Tensor gru_wh;  // [d_m, 3 d_m]
  ad::Tensor gru_bi;  // [1, 3 d_m]
  ad::Tensor gru_bh;  // [1, 3 d_m]

  ad::Tensor att_wq;  // [d_m + d_t, H dh]
  ad::Tensor att_wk;  // [d_m + d_e + d_t, H dh]
  ad::Tensor att_wv;  // [d_m + d_e + d_t, H dh]

  ad::Tensor out_w;  // [H dh + d_m, p]
  ad::Tensor out_b;  // [1, p]

  std::vector<ad::Parameter> parameters(const std::string& prefix = "encoder.") const {
    return {{prefix + "time_w", time_w}, {prefix + "time_b", time_b}, {prefix + "gru_wi", gru_wi},
            {prefix + "gru_wh", gru_wh}, {prefix + "gru_bi", gru_bi}, {prefix + "gru_bh", gru_bh},
            {prefix + "att_wq", att_wq}, {prefix + "att_wk", att_wk}, {prefix + "att_wv", att_wv},
            {prefix + "out_w", out_w},   {prefix + "out_b", out_b}};
  }

  // Copy whose tensors are constants, for inference without taping.
  EncoderParams detached() const {
    EncoderParams d = *this;
    for (ad::Tensor* t : {&d.time_w, &d.time_b, &d.gru_wi, &d.gru_wh, &d.gru_bi, &d.gru_bh, &d.att_wq,
                          &d.att_wk, &d.att_wv, &d.out_w, &d.out_b}) {
      *t = t->detach();
    }
    return d;
  }

  // Glorot-uniform weights, zero biases, and geometrically spaced time
  // frequencies 10^{-9 k / (d_t - 1)}.
  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed) {
    if (cfg.memory_dim == 0 || cfg.time_dim == 0 || cfg.embedding_dim == 0 || cfg.heads == 0) {
      throw Error("encoder: dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    auto glorot = [&](std::size_t in, std::size_t out) {
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-a, a);
      std::vector<double> v(in * out);
      for (double& x : v) x = u(rng);
      return ad::Tensor::parameter({in, out}, std::move(v));
    };
    auto zeros = [](std::size_t r, std::size_t c) {
      return ad::Tensor::parameter({r, c}, std::vector<double>(r * c, 0.0));
    };
    EncoderParams p;
    p.config = cfg;
    const std::size_t dm = cfg.memory_dim, dt = cfg.time_dim, hd = cfg.heads * cfg.head_dim();
    std::vector<double> freq(dt);
    for (std::size_t k = 0; k < dt; ++k) {
      const double e = dt > 1 ? 9.0 * static_cast<double>(k) / static_cast<double>(dt - 1) : 0.0;
      freq[k] = std::pow(10.0, -e);
    }
    p.time_w = ad::Tensor::parameter({1, dt}, std::move(freq));
    p.time_b = zeros(1, dt);
    p.gru_wi = glorot(cfg.message_dim(), 3 * dm);
    p.gru_wh = glorot(dm, 3 * dm);
    p.gru_bi = zeros(1, 3 * dm);
    p.gru_bh = zeros(1, 3 * dm);
    p.att_wq = glorot(cfg.query_input_dim(), hd);
    p.att_wk = glorot(cfg.key_input_dim(), hd);
    p.att_wv = glorot(cfg.key_input_dim(), hd);
    p.out_w = glorot(hd + dm, cfg.embedding_dim);
    p.out_b = zeros(1, cfg.embedding_dim);
    return p;
  }
};

// cos(dt * w + b) for a column of time deltas, [N,1] -> [N, d_t].
inline ad::Tensor encode_time(ad::Graph& g, const EncoderParams& p, const ad::Tensor& dt) {
  return g.cos(g.add_row(g.matmul(dt, p.time_w), p.time_b));
}

// Value-only convenience for a single delta.
inline std::vector<double> encode_time(const EncoderParams& p, double dt) {
  if (dt < 0.0) throw Error("encode_time: negative time delta");
  ad::Graph g;
  auto out = encode_time(g, p, ad::Tensor::scalar(dt));
  return {out.value().begin(), out.value().end()};
}

// PyTorch-convention GRU cell over row batches: x [N, d_msg], h [N, d_m].
inline ad::Tensor gru_cell(ad::Graph& g, const EncoderParams& p, const ad::Tensor& x,
                           const ad::Tensor& h) {
  const std::size_t dm = p.config.memory_dim;
  auto gi = g.linear(x, p.gru_wi, p.gru_bi);
  auto gh = g.linear(h, p.gru_wh, p.gru_bh);
  auto r = g.sigmoid(g.add(g.slice_cols(gi, 0, dm), g.slice_cols(gh, 0, dm)));
  auto z = g.sigmoid(g.add(g.slice_cols(gi, dm, 2 * dm), g.slice_cols(gh, dm, 2 * dm)));
  auto n = g.tanh(g.add(g.slice_cols(gi, 2 * dm, 3 * dm), g.mul(r, g.slice_cols(gh, 2 * dm, 3 * dm))));
  // (1 - z) * n + z * h
  return g.add(g.mul(g.rsub(1.0, z), n), g.mul(z, h));
}

// Raw message for one endpoint of an event. The full message vector is
// self_memory ⊕ other_memory ⊕ encode_time(delta_t) ⊕ features.
struct Message {
  NodeId node = 0;
  double time = 0.0;
  std::vector<double> self_memory;
  std::vector<double> other_memory;
  double delta_t = 0.0;
  std::vector<double> features;
};

// Materialises messages as rows of a [N, d_msg] tensor.
inline ad::Tensor message_rows(ad::Graph& g, const EncoderParams& p, std::span<const Message> msgs) {
  const auto& c = p.config;
  const std::size_t n = msgs.size();
  std::vector<double> selfv, otherv, dtv, featv;
  selfv.reserve(n * c.memory_dim);
  otherv.reserve(n * c.memory_dim);
  featv.reserve(n * c.edge_dim);
  for (const auto& m : msgs) {
    selfv.insert(selfv.end(), m.self_memory.begin(), m.self_memory.end());
    otherv.insert(otherv.end(), m.other_memory.begin(), m.other_memory.end());
    dtv.push_back(m.delta_t);
    featv.insert(featv.end(), m.features.begin(), m.features.end());
  }
  std::vector<ad::Tensor> parts{ad::Tensor::constant({n, c.memory_dim}, std::move(selfv)),
                                ad::Tensor::constant({n, c.memory_dim}, std::move(otherv)),
                                encode_time(g, p, ad::Tensor::constant({n, 1}, std::move(dtv)))};
  if (c.edge_dim > 0) parts.push_back(ad::Tensor::constant({n, c.edge_dim}, std::move(featv)));
  return g.concat(parts);
}

inline std::vector<double> message_vector(const EncoderParams& p, const Message& m) {
  ad::Graph g;
  auto t = message_rows(g, p, std::span<const Message>(&m, 1));
  return {t.value().begin(), t.value().end()};
}

class MemoryStore {
 public:
  MemoryStore() = default;
  MemoryStore(std::size_t node_count, std::size_t dim)
      : dim_(dim), base_(node_count * dim, 0.0), last_update_(node_count, 0.0), pending_(node_count) {}

  std::size_t dim() const { return dim_; }
  std::size_t node_count() const { return last_update_.size(); }

  void reset() {
    std::fill(base_.begin(), base_.end(), 0.0);
    std::fill(last_update_.begin(), last_update_.end(), 0.0);
    for (auto& p : pending_) p.reset();
  }

  void ensure_nodes(std::size_t node_count) {
    if (node_count <= this->node_count()) return;
    base_.resize(node_count * dim_, 0.0);
    last_update_.resize(node_count, 0.0);
    pending_.resize(node_count);
  }

  double last_update(NodeId node) const { return node < node_count() ? last_update_[node] : 0.0; }
  bool has_pending(NodeId node) const { return node < node_count() && pending_[node].has_value(); }

  // Effective memory of `nodes` as rows of a [N, d_m] tensor. Rows of nodes
  // with a pending message are recomputed through the GRU on `g`.
  ad::Tensor gather(ad::Graph& g, const EncoderParams& p, std::span<const NodeId> nodes) const {
    std::vector<Message> msgs;
    std::vector<double> prev, constant;
    std::vector<std::size_t> block_row, const_slot;
    std::vector<bool> via_gru(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const NodeId v = nodes[i];
      via_gru[i] = has_pending(v);
      if (via_gru[i]) {
        block_row.push_back(msgs.size());
        msgs.push_back(*pending_[v]);
        prev.insert(prev.end(), base_.begin() + v * dim_, base_.begin() + (v + 1) * dim_);
      } else {
        block_row.push_back(const_slot.size());
        const_slot.push_back(i);
        if (v < node_count()) {
          constant.insert(constant.end(), base_.begin() + v * dim_, base_.begin() + (v + 1) * dim_);
        } else {
          constant.insert(constant.end(), dim_, 0.0);
        }
      }
    }
    const std::size_t n_msg = msgs.size(), n_const = const_slot.size();
    std::vector<ad::Tensor> blocks;
    if (n_msg > 0) {
      auto x = message_rows(g, p, msgs);
      auto h = ad::Tensor::constant({n_msg, dim_}, std::move(prev));
      blocks.push_back(gru_cell(g, p, x, h));
    }
    if (n_const > 0) blocks.push_back(ad::Tensor::constant({n_const, dim_}, std::move(constant)));
    if (blocks.empty()) return ad::Tensor::zeros({0, dim_});
    if (n_msg == 0) return blocks[0];
    auto stacked = blocks.size() == 1 ? blocks[0] : g.concat_rows(blocks);
    std::vector<std::size_t> idx(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) idx[i] = via_gru[i] ? block_row[i] : n_msg + block_row[i];
    return g.gather_rows(stacked, std::move(idx));
  }

  // Effective memory values of one node.
  std::vector<double> value(const EncoderParams& p, NodeId node) const {
    ad::Graph g;
    auto t = gather(g, p, std::span<const NodeId>(&node, 1));
    return {t.value().begin(), t.value().end()};
  }

  // Makes `m` the pending message of its node; the node's current effective
  // memory (`current`) becomes the base state.
  void commit(const Message& m, std::span<const double> current) {
    ensure_nodes(m.node + std::size_t{1});
    std::copy(current.begin(), current.end(), base_.begin() + m.node * dim_);
    pending_[m.node] = m;
    last_update_[m.node] = m.time;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> base_;
  std::vector<double> last_update_;
  std::vector<std::optional<Message>> pending_;
};

inline void reset_memory(MemoryStore& memory) { memory.reset(); }

namespace detail {

inline std::vector<NodeId> unique_nodes(std::span<const Event> batch) {
  std::vector<NodeId> nodes;
  for (const auto& ev : batch) {
    nodes.push_back(ev.src);
    nodes.push_back(ev.dst);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

}  // namespace detail

// Messages for every event of a batch, source then destination, all built
// from pre-batch memory. Memory is not modified.
inline std::vector<Message> compute_messages(std::span<const Event> batch, const MemoryStore& memory,
                                             const EncoderParams& p) {
  auto nodes = detail::unique_nodes(batch);
  ad::Graph g;
  auto mem = memory.gather(g, p, nodes);
  const std::size_t dm = memory.dim();
  auto row = [&](NodeId v) {
    const std::size_t i = static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), v) - nodes.begin());
    return std::vector<double>(mem.value().begin() + i * dm, mem.value().begin() + (i + 1) * dm);
  };
  std::vector<Message> out;
  out.reserve(2 * batch.size());
  for (const auto& ev : batch) {
    auto s_src = row(ev.src);
    auto s_dst = row(ev.dst);
    out.push_back({ev.src, ev.time, s_src, s_dst, ev.time - memory.last_update(ev.src), ev.features});
    out.push_back({ev.dst, ev.time, s_dst, s_src, ev.time - memory.last_update(ev.dst), ev.features});
  }
  return out;
}

// Applies the most recent message of every node in `messages` (later entries
// win) through the GRU. Nodes without messages are untouched.
inline void update_memory(MemoryStore& memory, std::span<const Message> messages, const EncoderParams& p) {
  std::unordered_map<NodeId, std::size_t> latest;
  std::vector<NodeId> order;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    auto [it, inserted] = latest.insert_or_assign(messages[i].node, i);
    if (inserted) order.push_back(messages[i].node);
  }
  std::sort(order.begin(), order.end());
  ad::Graph g;
  auto mem = memory.gather(g, p, order);
  const std::size_t dm = memory.dim();
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::span<const double> current(mem.value().data() + k * dm, dm);
    memory.commit(messages[latest[order[k]]], current);
  }
}

// Updates memory with a batch of events.
inline void update_memory(MemoryStore& memory, std::span<const Event> batch, const EncoderParams& p) {
  auto msgs = compute_messages(batch, memory, p);
  update_memory(memory, msgs, p);
}

struct EmbeddingQuery {
  NodeId node = 0;
  double time = 0.0;
};

struct EmbeddingBatch {
  ad::Tensor z;  // [Q, p]
  // Attention weights, one row of n_neighbors per (query, head), laid out
  // query-major. Padded slots carry weight 0.
  std::vector<double> attention;
};

// One layer of temporal multi-head attention for a batch of queries.
inline EmbeddingBatch embed_batch(ad::Graph& g, const EncoderParams& p, const MemoryStore& memory,
                                  const TemporalGraph& graph, std::span<const EmbeddingQuery> queries) {
  const auto& c = p.config;
  const std::size_t nq = queries.size(), n = c.n_neighbors, dm = c.memory_dim, de = c.edge_dim;
  const std::size_t heads = c.heads, dh = c.head_dim();
  if (n == 0) throw Error("embed: n_neighbors must be >= 1");
  if (graph.stream().feature_dim() != de) {
    throw Error("embed: graph has " + std::to_string(graph.stream().feature_dim()) +
                " edge features, encoder expects " + std::to_string(de));
  }

  // Collect neighbors and the node set whose memory is needed.
  std::vector<std::vector<TemporalNeighbor>> nbrs(nq);
  std::vector<NodeId> nodes;
  for (std::size_t q = 0; q < nq; ++q) {
    nbrs[q] = graph.temporal_neighbors(queries[q].node, queries[q].time, n);
    nodes.push_back(queries[q].node);
    for (const auto& nb : nbrs[q]) nodes.push_back(nb.node);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  auto pos = [&](NodeId v) {
    return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), v) - nodes.begin());
  };
  auto mem = memory.gather(g, p, nodes);
  const std::size_t zero_row = nodes.size();
  auto mem_padded = g.concat_rows({mem, ad::Tensor::zeros({1, dm})});

  std::vector<std::size_t> qidx(nq), kidx(nq * n, zero_row);
  std::vector<double> feats(nq * n * de, 0.0), dts(nq * n, 0.0), present(nq * n, 0.0),
      mask(nq * n, -1e30);
  for (std::size_t q = 0; q < nq; ++q) {
    qidx[q] = pos(queries[q].node);
    if (nbrs[q].empty()) mask[q * n] = 0.0;  // attend to the zero pad
    for (std::size_t k = 0; k < nbrs[q].size(); ++k) {
      const auto& nb = nbrs[q][k];
      const std::size_t s = q * n + k;
      kidx[s] = pos(nb.node);
      std::copy(nb.features.begin(), nb.features.end(), feats.begin() + s * de);
      dts[s] = queries[q].time - nb.time;
      present[s] = 1.0;
      mask[s] = 0.0;
    }
  }

  auto s_query = g.gather_rows(mem, qidx);
  auto q_in = g.concat({s_query, encode_time(g, p, ad::Tensor::zeros({nq, 1}))});
  std::vector<ad::Tensor> key_parts{g.gather_rows(mem_padded, kidx)};
  if (de > 0) key_parts.push_back(ad::Tensor::constant({nq * n, de}, std::move(feats)));
  key_parts.push_back(g.mul_col(encode_time(g, p, ad::Tensor::constant({nq * n, 1}, std::move(dts))),
                                ad::Tensor::constant({nq * n, 1}, std::move(present))));
  auto k_in = g.concat(key_parts);

  auto qp = g.matmul(q_in, p.att_wq);
  auto kp = g.matmul(k_in, p.att_wk);
  auto vp = g.matmul(k_in, p.att_wv);
  auto mask_t = ad::Tensor::constant({nq * n, 1}, std::move(mask));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  EmbeddingBatch out;
  out.attention.assign(nq * heads * n, 0.0);
  std::vector<ad::Tensor> head_out;
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = g.repeat_rows(g.slice_cols(qp, h * dh, (h + 1) * dh), n);
    auto kh = g.slice_cols(kp, h * dh, (h + 1) * dh);
    auto vh = g.slice_cols(vp, h * dh, (h + 1) * dh);
    auto logits = g.add(g.scale(g.row_sum(g.mul(qh, kh)), inv_sqrt), mask_t);
    auto w = g.softmax_rows(g.reshape(logits, {nq, n}));
    for (std::size_t q = 0; q < nq; ++q)
      for (std::size_t k = 0; k < n; ++k) out.attention[(q * heads + h) * n + k] = w.at(q, k);
    head_out.push_back(g.group_sum_rows(g.mul_col(vh, g.reshape(w, {nq * n, 1})), n));
  }
  auto attn = heads == 1 ? head_out[0] : g.concat(head_out);
  out.z = g.linear(g.concat({attn, s_query}), p.out_w, p.out_b);
  return out;
}

struct Embedding {
  std::vector<double> z;
  NodeId node = 0;
  double time = 0.0;
};

inline Embedding embed(NodeId node, double t, const MemoryStore& memory, const TemporalGraph& graph,
                       const EncoderParams& p) {
  ad::Graph g;
  EmbeddingQuery q{node, t};
  auto b = embed_batch(g, p, memory, graph, std::span<const EmbeddingQuery>(&q, 1));
  return {{b.z.value().begin(), b.z.value().end()}, node, t};
}

}  // namespace tgnsvdd
