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

// Continuous-time dynamic graph primitives: interaction events, the
// time-ordered event stream, the per-node temporal neighbor index, snapshots
// and chronological batching.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tgnsvdd/error.hpp"

namespace tgnsvdd {

using NodeId = std::uint32_t;

struct Label {
  enum class Kind { kUnlabeled, kNormal, kAttack };

  Kind kind = Kind::kUnlabeled;
  std::string attack_name;  // only meaningful for kAttack

  static Label Unlabeled() { return {}; }
  static Label Normal() { return {Kind::kNormal, {}}; }
  static Label Attack(std::string name) { return {Kind::kAttack, std::move(name)}; }

  bool is_attack() const { return kind == Kind::kAttack; }
  bool operator==(const Label&) const = default;
};

struct Event {
  NodeId src = 0;
  NodeId dst = 0;
  double time = 0.0;  // seconds
  std::vector<double> features;
  Label label;

  bool operator==(const Event&) const = default;
};

// Time-ordered sequence of interaction events sharing one feature width.
class EventStream {
 public:
  EventStream() = default;
  explicit EventStream(std::size_t feature_dim) : feature_dim_(feature_dim) {}

  // Rejects events that go back in time or carry the wrong feature width.
  void append(Event ev) {
    if (ev.features.size() != feature_dim_) {
      throw Error("append_event: event " + std::to_string(events_.size()) + " has " +
                  std::to_string(ev.features.size()) + " features, stream expects " +
                  std::to_string(feature_dim_));
    }
    if (!(ev.time >= 0.0)) {
      throw Error("append_event: event " + std::to_string(events_.size()) +
                  " has negative or NaN timestamp");
    }
    if (!events_.empty() && ev.time < events_.back().time) {
      throw Error("append_event: out-of-order timestamp at event " +
                  std::to_string(events_.size()) + " (" + std::to_string(ev.time) + " < " +
                  std::to_string(events_.back().time) + ")");
    }
    node_count_ = std::max<std::size_t>(node_count_, std::max(ev.src, ev.dst) + std::size_t{1});
    events_.push_back(std::move(ev));
  }

  const std::vector<Event>& events() const { return events_; }
  const Event& operator[](std::size_t i) const { return events_[i]; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  std::size_t feature_dim() const { return feature_dim_; }

  // Dense ids: one past the largest id seen. Can be raised to account for
  // nodes that exist in a wider id space (e.g. the full dataset).
  std::size_t node_count() const { return node_count_; }
  void reserve_nodes(std::size_t n) { node_count_ = std::max(node_count_, n); }

  // Contiguous sub-range [begin, end) as a new stream.
  EventStream slice(std::size_t begin, std::size_t end) const {
    EventStream out(feature_dim_);
    out.node_count_ = node_count_;
    end = std::min(end, events_.size());
    for (std::size_t i = begin; i < end; ++i) out.events_.push_back(events_[i]);
    return out;
  }

  bool operator==(const EventStream&) const = default;

 private:
  std::vector<Event> events_;
  std::size_t feature_dim_ = 0;
  std::size_t node_count_ = 0;
};

// Appends every event of `tail` to `head`.
inline EventStream concat_streams(const EventStream& head, const EventStream& tail) {
  if (!head.empty() && !tail.empty() && head.feature_dim() != tail.feature_dim()) {
    throw Error("concat_streams: feature width mismatch");
  }
  EventStream out(head.empty() ? tail.feature_dim() : head.feature_dim());
  out.reserve_nodes(std::max(head.node_count(), tail.node_count()));
  for (const auto& ev : head.events()) out.append(ev);
  for (const auto& ev : tail.events()) out.append(ev);
  return out;
}

struct NeighborEntry {
  NodeId other = 0;
  double time = 0.0;
  std::size_t event_index = 0;
  bool outgoing = false;  // true when the indexed node was the source
};

// Per-node interaction history, each list ordered by event time (ties keep
// ingestion order).
class NeighborIndex {
 public:
  void add(const Event& ev, std::size_t event_index) {
    const std::size_t need = std::max(ev.src, ev.dst) + std::size_t{1};
    if (lists_.size() < need) lists_.resize(need);
    lists_[ev.src].push_back({ev.dst, ev.time, event_index, true});
    lists_[ev.dst].push_back({ev.src, ev.time, event_index, false});
  }

  std::span<const NeighborEntry> history(NodeId node) const {
    if (node >= lists_.size()) return {};
    return lists_[node];
  }

  // Number of indexed interactions of `node` with time strictly below t.
  std::size_t count_before(NodeId node, double t) const {
    auto h = history(node);
    return static_cast<std::size_t>(
        std::lower_bound(h.begin(), h.end(), t,
                         [](const NeighborEntry& e, double v) { return e.time < v; }) -
        h.begin());
  }

  std::size_t node_slots() const { return lists_.size(); }

 private:
  std::vector<std::vector<NeighborEntry>> lists_;
};

struct TemporalNeighbor {
  NodeId node = 0;
  double time = 0.0;
  std::span<const double> features;
  bool outgoing = false;
  std::size_t event_index = 0;
};

// An event stream together with its neighbor index. Single writer during
// ingestion; read-only queries are safe to share afterwards.
class TemporalGraph {
 public:
  TemporalGraph() = default;
  explicit TemporalGraph(std::size_t feature_dim) : stream_(feature_dim) {}
  explicit TemporalGraph(const EventStream& stream) : stream_(stream.feature_dim()) {
    stream_.reserve_nodes(stream.node_count());
    for (const auto& ev : stream.events()) append_event(ev);
  }

  void append_event(Event ev) {
    stream_.append(std::move(ev));
    index_.add(stream_.events().back(), stream_.size() - 1);
  }

  // Up to n most recent interactions of `node` strictly before t, newest first.
  std::vector<TemporalNeighbor> temporal_neighbors(NodeId node, double t, std::size_t n) const {
    if (n == 0) throw Error("temporal_neighbors: n must be >= 1");
    std::vector<TemporalNeighbor> out;
    auto h = index_.history(node);
    std::size_t end = index_.count_before(node, t);
    std::size_t take = std::min(n, end);
    out.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
      const NeighborEntry& e = h[end - 1 - k];
      out.push_back({e.other, e.time, stream_[e.event_index].features, e.outgoing, e.event_index});
    }
    return out;
  }

  const EventStream& stream() const { return stream_; }
  const NeighborIndex& index() const { return index_; }

 private:
  EventStream stream_;
  NeighborIndex index_;
};

struct Snapshot {
  std::vector<NodeId> vertices;  // sorted, unique
  std::vector<std::pair<NodeId, NodeId>> edges;
};

// Static multigraph of all events with time <= t.
inline Snapshot snapshot(const EventStream& stream, double t) {
  const auto& evs = stream.events();
  auto end = std::upper_bound(evs.begin(), evs.end(), t,
                              [](double v, const Event& e) { return v < e.time; });
  Snapshot s;
  for (auto it = evs.begin(); it != end; ++it) {
    s.edges.emplace_back(it->src, it->dst);
    s.vertices.push_back(it->src);
    s.vertices.push_back(it->dst);
  }
  std::sort(s.vertices.begin(), s.vertices.end());
  s.vertices.erase(std::unique(s.vertices.begin(), s.vertices.end()), s.vertices.end());
  return s;
}

// Contiguous slices of at most batch_size events, in stream order.
inline std::vector<std::span<const Event>> chronological_batches(const EventStream& stream,
                                                                 std::size_t batch_size) {
  if (batch_size == 0) throw Error("chronological_batches: batch_size must be >= 1");
  std::vector<std::span<const Event>> out;
  std::span<const Event> all(stream.events());
  for (std::size_t b = 0; b < all.size(); b += batch_size) {
    out.push_back(all.subspan(b, std::min(batch_size, all.size() - b)));
  }
  return out;
}

}  // namespace tgnsvdd
