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

#include "tgnsvdd/tgn_encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "test_util.hpp"

namespace tgnsvdd {
namespace {

using testing::make_event;
using Vec = std::vector<double>;

EncoderConfig small_config(std::size_t edge_dim = 2) {
  EncoderConfig c;
  c.memory_dim = 4;
  c.time_dim = 3;
  c.embedding_dim = 5;
  c.edge_dim = edge_dim;
  c.heads = 2;
  c.n_neighbors = 3;
  return c;
}

// Every entry random, biases and phases included.
EncoderParams random_params(const EncoderConfig& c, std::uint64_t seed) {
  EncoderParams p = EncoderParams::init(c, seed);
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (auto& prm : p.parameters())
    for (double& x : prm.tensor.mutable_value()) x = u(rng);
  return p;
}

// ---- independent oracles: explicit loops over raw parameter values ----

Vec vec_mat(const Vec& x, const ad::Tensor& w) {
  Vec out(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[i] * w.at(i, j);
  return out;
}

Vec oracle_time(const EncoderParams& p, double dt) {
  Vec out(p.config.time_dim);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::cos(dt * p.time_w.value()[k] + p.time_b.value()[k]);
  return out;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec oracle_gru(const EncoderParams& p, const Vec& x, const Vec& h) {
  const std::size_t d = p.config.memory_dim;
  Vec gi = vec_mat(x, p.gru_wi), gh = vec_mat(h, p.gru_wh);
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double r = sigm(gi[i] + p.gru_bi.value()[i] + gh[i] + p.gru_bh.value()[i]);
    const double z = sigm(gi[d + i] + p.gru_bi.value()[d + i] + gh[d + i] + p.gru_bh.value()[d + i]);
    const double n =
        std::tanh(gi[2 * d + i] + p.gru_bi.value()[2 * d + i] + r * (gh[2 * d + i] + p.gru_bh.value()[2 * d + i]));
    out[i] = (1 - z) * n + z * h[i];
  }
  return out;
}

Vec cat(std::initializer_list<Vec> parts) {
  Vec out;
  for (const auto& v : parts) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// Eager memory: every batch applies the GRU to the latest message per node.
struct OracleMemory {
  std::map<NodeId, Vec> mem;
  std::map<NodeId, double> last;
  std::size_t dim;

  Vec get(NodeId v) const {
    auto it = mem.find(v);
    return it == mem.end() ? Vec(dim, 0.0) : it->second;
  }
  double last_update(NodeId v) const {
    auto it = last.find(v);
    return it == last.end() ? 0.0 : it->second;
  }
  void apply(const EncoderParams& p, std::span<const Event> batch) {
    std::map<NodeId, std::pair<Vec, double>> latest;
    for (const auto& ev : batch) {
      latest[ev.src] = {cat({get(ev.src), get(ev.dst), oracle_time(p, ev.time - last_update(ev.src)), ev.features}),
                        ev.time};
      latest[ev.dst] = {cat({get(ev.dst), get(ev.src), oracle_time(p, ev.time - last_update(ev.dst)), ev.features}),
                        ev.time};
    }
    std::map<NodeId, Vec> next;
    for (const auto& [v, m] : latest) next[v] = oracle_gru(p, m.first, get(v));
    for (const auto& [v, m] : latest) {
      mem[v] = next[v];
      last[v] = m.second;
    }
  }
};

struct OracleEmbedding {
  Vec z;
  std::vector<Vec> weights;  // per head
};

OracleEmbedding oracle_embed(const EncoderParams& p, const OracleMemory& memory, const EventStream& stream, NodeId node,
                             double t) {
  const auto& c = p.config;
  const std::size_t dh = c.head_dim();
  // Most recent neighbors strictly before t.
  std::vector<const Event*> nb;
  for (std::size_t i = stream.size(); i-- > 0 && nb.size() < c.n_neighbors;) {
    const Event& ev = stream[i];
    if (ev.time < t && (ev.src == node || ev.dst == node)) nb.push_back(&ev);
  }
  Vec q = vec_mat(cat({memory.get(node), oracle_time(p, 0.0)}), p.att_wq);
  std::vector<Vec> keys, values;
  for (const Event* ev : nb) {
    NodeId other = ev->src == node ? ev->dst : ev->src;
    Vec in = cat({memory.get(other), ev->features, oracle_time(p, t - ev->time)});
    keys.push_back(vec_mat(in, p.att_wk));
    values.push_back(vec_mat(in, p.att_wv));
  }
  if (nb.empty()) {
    keys.emplace_back(c.heads * dh, 0.0);
    values.emplace_back(c.heads * dh, 0.0);
  }
  OracleEmbedding out;
  Vec attn;
  for (std::size_t h = 0; h < c.heads; ++h) {
    Vec logits;
    for (const auto& k : keys) {
      double s = 0.0;
      for (std::size_t d = 0; d < dh; ++d) s += q[h * dh + d] * k[h * dh + d];
      logits.push_back(s / std::sqrt(static_cast<double>(dh)));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    Vec w;
    for (double l : logits) {
      w.push_back(std::exp(l - mx));
      total += w.back();
    }
    for (double& x : w) x /= total;
    for (std::size_t d = 0; d < dh; ++d) {
      double s = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * values[k][h * dh + d];
      attn.push_back(s);
    }
    out.weights.push_back(w);
  }
  out.z = vec_mat(cat({attn, memory.get(node)}), p.out_w);
  for (std::size_t j = 0; j < out.z.size(); ++j) out.z[j] += p.out_b.value()[j];
  return out;
}

// ---- time encoding ----

TEST(EncodeTimeTest, ZeroDeltaZeroPhaseIsOnes) {
  EncoderParams p = EncoderParams::init(small_config(), 1);
  for (double v : encode_time(p, 0.0)) EXPECT_EQ(v, 1.0);
}

TEST(EncodeTimeTest, ZeroFrequencyIsConstant) {
  EncoderParams p = random_params(small_config(), 2);
  for (double& w : p.time_w.mutable_value()) w = 0.0;
  auto a = encode_time(p, 0.3), b = encode_time(p, 1e4);
  EXPECT_EQ(a, b);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], std::cos(p.time_b.value()[k]));
}

TEST(EncodeTimeTest, MatchesScalarLoop) {
  EncoderParams p = random_params(small_config(), 3);
  auto got = encode_time(p, 1.5);
  auto want = oracle_time(p, 1.5);
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  EXPECT_THROW(encode_time(p, -1.0), Error);
}

TEST(EncodeTimeTest, InitialFrequenciesAreGeometric) {
  EncoderConfig c = small_config();
  c.time_dim = 10;
  EncoderParams p = EncoderParams::init(c, 0);
  EXPECT_DOUBLE_EQ(p.time_w.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(p.time_w.value()[9], 1e-9);
  EXPECT_DOUBLE_EQ(p.time_w.value()[1], std::pow(10.0, -1.0));
}

// ---- messages ----

TEST(MessageTest, FreshMemory) {
  EncoderParams p = random_params(small_config(), 4);
  MemoryStore mem(3, 4);
  std::vector<Event> batch{make_event(0, 1, 2.5, {0.1, 0.2})};
  auto msgs = compute_messages(batch, mem, p);
  ASSERT_EQ(msgs.size(), 2u);
  Vec want = cat({Vec(4, 0.0), Vec(4, 0.0), oracle_time(p, 2.5), {0.1, 0.2}});
  auto got = message_vector(p, msgs[0]);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
  EXPECT_EQ(msgs[1].node, 1u);
}

TEST(MessageTest, BatchUsesPreBatchMemory) {
  EncoderParams p = random_params(small_config(), 5);
  MemoryStore mem(3, 4);
  std::vector<Event> first{make_event(0, 1, 1.0, {1, 1})};
  update_memory(mem, first, p);
  const Vec before = mem.value(p, 0);
  std::vector<Event> batch{make_event(0, 2, 2.0, {0, 1}), make_event(0, 1, 3.0, {1, 0})};
  auto msgs = compute_messages(batch, mem, p);
  EXPECT_EQ(msgs[0].self_memory, before);
  EXPECT_EQ(msgs[2].self_memory, before);
  EXPECT_EQ(msgs[0].delta_t, 1.0);
  EXPECT_EQ(msgs[2].delta_t, 2.0);
  EXPECT_EQ(mem.value(p, 0), before);  // read-only
}

TEST(MessageTest, HandBuiltThreeNodeStream) {
  EncoderParams p = random_params(small_config(), 6);
  std::vector<Event> b1{make_event(0, 1, 1.0, {0.5, 0.1}), make_event(1, 2, 2.0, {0.2, 0.3})};
  std::vector<Event> b2{make_event(2, 0, 4.0, {0.9, 0.4})};
  MemoryStore mem(3, 4);
  OracleMemory oracle{{}, {}, 4};
  update_memory(mem, b1, p);
  oracle.apply(p, b1);
  auto msgs = compute_messages(b2, mem, p);
  Vec want_src = cat({oracle.get(2), oracle.get(0), oracle_time(p, 4.0 - 2.0), {0.9, 0.4}});
  Vec want_dst = cat({oracle.get(0), oracle.get(2), oracle_time(p, 4.0 - 1.0), {0.9, 0.4}});
  auto got_src = message_vector(p, msgs[0]);
  auto got_dst = message_vector(p, msgs[1]);
  for (std::size_t i = 0; i < want_src.size(); ++i) {
    EXPECT_NEAR(got_src[i], want_src[i], 1e-12) << i;
    EXPECT_NEAR(got_dst[i], want_dst[i], 1e-12) << i;
  }
}

// ---- memory ----

TEST(MemoryTest, UntouchedNodeIsBitIdentical) {
  EncoderParams p = random_params(small_config(), 7);
  MemoryStore mem(4, 4);
  std::vector<Event> b1{make_event(0, 3, 1.0, {1, 0})};
  update_memory(mem, b1, p);
  const Vec m3 = mem.value(p, 3);
  const double l3 = mem.last_update(3);
  std::vector<Event> b2{make_event(1, 2, 2.0, {0, 1})};
  update_memory(mem, b2, p);
  EXPECT_EQ(mem.value(p, 3), m3);
  EXPECT_EQ(mem.last_update(3), l3);
  EXPECT_EQ(mem.last_update(1), 2.0);
}

TEST(MemoryTest, ZeroWeightGruMatchesHandStep) {
  EncoderParams p = random_params(small_config(), 8);
  for (auto* t : {&p.gru_wi, &p.gru_wh})
    for (double& x : t->mutable_value()) x = 0.0;
  // With zero weights the gates are functions of the biases alone.
  MemoryStore mem(2, 4);
  std::vector<Event> b{make_event(0, 1, 1.0, {1, 1})};
  update_memory(mem, b, p);
  update_memory(mem, b, p);
  Vec h(4, 0.0);
  for (int step = 0; step < 2; ++step) {
    Vec next(4);
    for (std::size_t i = 0; i < 4; ++i) {
      const double r = sigm(p.gru_bi.value()[i] + p.gru_bh.value()[i]);
      const double z = sigm(p.gru_bi.value()[4 + i] + p.gru_bh.value()[4 + i]);
      const double n = std::tanh(p.gru_bi.value()[8 + i] + r * p.gru_bh.value()[8 + i]);
      next[i] = (1 - z) * n + z * h[i];
    }
    h = next;
  }
  auto got = mem.value(p, 0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], h[i], 1e-15);
}

TEST(MemoryTest, RandomGruMatchesOracle) {
  EncoderParams p = random_params(small_config(), 9);
  ad::Graph g;
  Vec x(p.config.message_dim()), h(4);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : x) v = u(rng);
  for (double& v : h) v = u(rng);
  auto out = gru_cell(g, p, ad::Tensor::row(x), ad::Tensor::row(h));
  auto want = oracle_gru(p, x, h);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.value()[i], want[i], 1e-14);
}

TEST(MemoryTest, LatestMessageWins) {
  EncoderParams p = random_params(small_config(), 10);
  MemoryStore agg(4, 4), once(4, 4);
  std::vector<Event> warm{make_event(0, 1, 0.5, {0.3, 0.3})};
  update_memory(agg, warm, p);
  update_memory(once, warm, p);

  std::vector<Event> batch{make_event(0, 1, 1.0, {1, 0}), make_event(2, 0, 2.0, {0, 1}),
                           make_event(0, 3, 3.0, {0.5, 0.5})};
  auto msgs = compute_messages(batch, agg, p);
  update_memory(agg, msgs, p);

  std::vector<Message> last_only;
  for (const auto& m : msgs)
    if (m.node == 0 && m.time == 3.0) last_only.push_back(m);
  ASSERT_EQ(last_only.size(), 1u);
  update_memory(once, last_only, p);
  EXPECT_EQ(agg.value(p, 0), once.value(p, 0));
  EXPECT_EQ(agg.last_update(0), 3.0);
}

TEST(MemoryTest, DisjointPermutationInvariant) {
  EncoderParams p = random_params(small_config(), 11);
  std::vector<Event> a{make_event(0, 1, 1.0, {1, 0}), make_event(2, 3, 1.0, {0, 1}), make_event(4, 5, 1.0, {1, 1})};
  std::vector<Event> b{a[2], a[0], a[1]};
  MemoryStore ma(6, 4), mb(6, 4);
  update_memory(ma, a, p);
  update_memory(mb, b, p);
  for (NodeId v = 0; v < 6; ++v) EXPECT_EQ(ma.value(p, v), mb.value(p, v));
}

TEST(MemoryTest, ResetZeroesEverything) {
  EncoderParams p = random_params(small_config(), 12);
  MemoryStore mem(3, 4);
  std::vector<Event> b{make_event(0, 1, 1.0, {1, 0}), make_event(1, 2, 2.0, {0, 1})};
  update_memory(mem, b, p);
  reset_memory(mem);
  for (NodeId v = 0; v < 3; ++v) {
    EXPECT_EQ(mem.value(p, v), Vec(4, 0.0));
    EXPECT_EQ(mem.last_update(v), 0.0);
  }
  auto msgs = compute_messages(b, mem, p);
  for (const auto& m : msgs) {
    EXPECT_EQ(m.self_memory, Vec(4, 0.0));
    EXPECT_EQ(m.other_memory, Vec(4, 0.0));
  }
}

// ---- embedding ----

EventStream toy_stream() {
  EventStream s(2);
  const double t[] = {1, 2, 2, 3, 5, 6, 6.5, 8};
  const NodeId src[] = {0, 1, 2, 0, 3, 1, 0, 2};
  const NodeId dst[] = {1, 2, 3, 2, 0, 0, 3, 1};
  for (int i = 0; i < 8; ++i) s.append(make_event(src[i], dst[i], t[i], {0.1 * i, 1.0 - 0.1 * i}));
  return s;
}

TEST(EmbedTest, IsolatedNodeGivesOutputBias) {
  EncoderParams p = random_params(small_config(), 13);
  MemoryStore mem(5, 4);
  TemporalGraph g(toy_stream());
  auto e = embed(4, 10.0, mem, g, p);
  for (std::size_t j = 0; j < e.z.size(); ++j) EXPECT_DOUBLE_EQ(e.z[j], p.out_b.value()[j]);
}

TEST(EmbedTest, SingleNeighborGetsAllWeight) {
  EncoderParams p = random_params(small_config(), 14);
  EventStream s(2);
  s.append(make_event(0, 1, 1.0, {0.3, 0.7}));
  TemporalGraph g(s);
  MemoryStore mem(2, 4);
  update_memory(mem, s.events(), p);
  ad::Graph tape;
  EmbeddingQuery q{0, 4.0};
  auto b = embed_batch(tape, p, mem, g, std::span<const EmbeddingQuery>(&q, 1));
  for (std::size_t h = 0; h < 2; ++h) {
    EXPECT_EQ(b.attention[h * 3 + 0], 1.0);
    EXPECT_EQ(b.attention[h * 3 + 1], 0.0);
    EXPECT_EQ(b.attention[h * 3 + 2], 0.0);
  }
}

TEST(EmbedTest, MatchesStraightLineOracle) {
  EncoderParams p = random_params(small_config(), 15);
  const EventStream s = toy_stream();
  // Memory after the first two batches of three events.
  MemoryStore mem(4, 4);
  OracleMemory oracle{{}, {}, 4};
  const EventStream seen = s.slice(0, 6);
  for (auto batch : chronological_batches(seen, 3)) {
    update_memory(mem, batch, p);
    oracle.apply(p, batch);
  }
  TemporalGraph g(seen);
  std::vector<EmbeddingQuery> queries{{0, 6.5}, {1, 6.5}, {2, 7.0}, {3, 6.0}, {0, 2.0}};
  ad::Graph tape;
  auto b = embed_batch(tape, p, mem, g, queries);
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    auto want = oracle_embed(p, oracle, seen, queries[qi].node, queries[qi].time);
    for (std::size_t j = 0; j < want.z.size(); ++j) EXPECT_NEAR(b.z.at(qi, j), want.z[j], 1e-10) << qi;
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t k = 0; k < want.weights[h].size(); ++k)
        EXPECT_NEAR(b.attention[(qi * 2 + h) * 3 + k], want.weights[h][k], 1e-10);
  }
}

TEST(EmbedTest, AttentionRowsSumToOne) {
  EncoderParams p = random_params(small_config(), 16);
  const EventStream s = toy_stream();
  TemporalGraph g(s);
  MemoryStore mem(4, 4);
  update_memory(mem, s.events(), p);
  std::vector<EmbeddingQuery> queries;
  for (NodeId v = 0; v < 5; ++v) queries.push_back({v, 9.0});
  queries.push_back({0, 0.5});
  ad::Graph tape;
  auto b = embed_batch(tape, p, mem, g, queries);
  for (std::size_t r = 0; r < queries.size() * 2; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += b.attention[r * 3 + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(EmbedTest, FutureEventsDoNotLeak) {
  EncoderParams p = random_params(small_config(), 17);
  const EventStream s = toy_stream();
  const double t = 5.0;
  MemoryStore mem(4, 4);
  std::size_t past = 0;
  while (past < s.size() && s[past].time < t) ++past;
  update_memory(mem, s.slice(0, past).events(), p);

  EventStream perturbed = s.slice(0, past);
  perturbed.append(make_event(1, 3, 5.0, {9, 9}));  // same time as the query
  perturbed.append(make_event(0, 2, 7.0, {-3, 4}));
  auto a = embed(0, t, mem, TemporalGraph(s), p);
  auto b = embed(0, t, mem, TemporalGraph(perturbed), p);
  EXPECT_EQ(a.z, b.z);
}

TEST(EmbedTest, ReplayAfterResetIsDeterministic) {
  EncoderParams p = random_params(small_config(), 18);
  const EventStream s = toy_stream();
  TemporalGraph g(s);
  MemoryStore mem(4, 4);
  auto run = [&] {
    reset_memory(mem);
    std::vector<Vec> zs;
    for (auto batch : chronological_batches(s, 2)) {
      for (const auto& ev : batch) zs.push_back(embed(ev.src, ev.time, mem, g, p).z);
      update_memory(mem, batch, p);
    }
    return zs;
  };
  EXPECT_EQ(run(), run());
}

TEST(EmbedTest, EdgeDimMismatchIsRejected) {
  EncoderParams p = random_params(small_config(3), 19);
  MemoryStore mem(4, 4);
  EXPECT_THROW(embed(0, 1.0, mem, TemporalGraph(toy_stream()), p), Error);
}

TEST(EmbedTest, GradientsMatchFiniteDifferences) {
  EncoderParams p = random_params(small_config(), 20);
  const EventStream s = toy_stream();
  MemoryStore mem(4, 4);
  update_memory(mem, s.slice(0, 4).events(), p);  // leaves pending messages, so the GRU is on the tape
  TemporalGraph g(s.slice(0, 4));
  std::vector<EmbeddingQuery> queries{{0, 5.0}, {2, 5.0}, {3, 5.0}};
  auto params = p.parameters();
  auto loss = [&](ad::Graph& tape) {
    auto b = embed_batch(tape, p, mem, g, queries);
    return tape.mean(tape.row_squared_norm(b.z));
  };
  EXPECT_LT(ad::grad_check(loss, params, 1e-6), 1e-4);
  for (const auto& prm : params) EXPECT_TRUE(prm.tensor.has_grad()) << prm.name;
}

}  // namespace
}  // namespace tgnsvdd
