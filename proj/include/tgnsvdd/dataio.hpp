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

// Ingestion and preprocessing of temporal adjacency-list CSVs, day
// stitching, chronological splitting, the identity-swap injection and a
// synthetic flow generator.
//
// CSV schema (UTF-8, comma separated, header required):
//   src,dst,timestamp,label,f0,...,f{d-1}
// timestamp is integer milliseconds; internally times are seconds.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tgnsvdd/ctdg.hpp"
#include "tgnsvdd/error.hpp"

namespace tgnsvdd {

// Stream plus the original key (e.g. IP address) of every dense node id.
struct Dataset {
  EventStream stream;
  std::vector<std::string> node_keys;

  bool operator==(const Dataset&) const = default;
};

struct LabelMapping {
  std::vector<std::string> normal_labels{"BENIGN", "Benign", "benign", "Normal", "normal"};

  Label parse(const std::string& s) const {
    if (s.empty()) return Label::Unlabeled();
    if (std::find(normal_labels.begin(), normal_labels.end(), s) != normal_labels.end()) return Label::Normal();
    return Label::Attack(s);
  }
};

inline std::string label_text(const Label& l) {
  switch (l.kind) {
    case Label::Kind::kNormal:
      return "BENIGN";
    case Label::Kind::kAttack:
      return l.attack_name;
    default:
      return "";
  }
}

enum class IdMode {
  kEnumerate,  // keys are arbitrary strings, numbered by first appearance in time order
  kDense,      // keys are already dense nonnegative integer ids
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::int64_t to_millis(double seconds) { return std::llround(seconds * 1000.0); }

}  // namespace detail

inline Dataset load_temporal_csv(std::istream& in, const LabelMapping& labels = {},
                                 IdMode ids = IdMode::kEnumerate) {
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: missing header row");
  auto header = detail::split_commas(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(detail::trim(header[i]))] = i;
  for (const char* required : {"src", "dst", "timestamp", "label"}) {
    if (!col.count(required)) throw Error(std::string("csv: line 1: missing column '") + required + "'");
  }
  std::vector<std::size_t> feature_cols;
  for (std::size_t k = 0;; ++k) {
    auto it = col.find("f" + std::to_string(k));
    if (it == col.end()) break;
    feature_cols.push_back(it->second);
  }
  const std::size_t width = header.size();
  if (col.size() != 4 + feature_cols.size()) {
    throw Error("csv: line 1: unexpected columns (features must be named f0..f{d-1} without gaps)");
  }

  struct Row {
    std::string src, dst;
    std::int64_t ms;
    std::vector<double> features;
    Label label;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    const std::string where = "csv: line " + std::to_string(line_no) + ": ";
    if (cells.size() != width) {
      throw Error(where + "expected " + std::to_string(width) + " fields, found " + std::to_string(cells.size()));
    }
    Row r;
    r.src = std::string(detail::trim(cells[col["src"]]));
    r.dst = std::string(detail::trim(cells[col["dst"]]));
    if (r.src.empty() || r.dst.empty()) throw Error(where + "empty node key");
    if (!detail::parse_number(cells[col["timestamp"]], r.ms)) throw Error(where + "non-integer timestamp");
    if (r.ms < 0) throw Error(where + "negative timestamp");
    r.label = labels.parse(std::string(detail::trim(cells[col["label"]])));
    r.features.resize(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      if (!detail::parse_number(cells[feature_cols[k]], r.features[k]) || !std::isfinite(r.features[k])) {
        throw Error(where + "non-numeric feature f" + std::to_string(k));
      }
    }
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ms < b.ms; });

  Dataset out;
  out.stream = EventStream(feature_cols.size());
  std::unordered_map<std::string, NodeId> id_of;
  auto resolve = [&](const std::string& key) -> NodeId {
    if (ids == IdMode::kDense) {
      std::uint64_t v = 0;
      if (!detail::parse_number(std::string_view(key), v) || v > 0xFFFFFFFFull) {
        throw Error("csv: node id '" + key + "' is not a dense integer id");
      }
      if (out.node_keys.size() <= v) {
        for (std::size_t k = out.node_keys.size(); k <= v; ++k) out.node_keys.push_back(std::to_string(k));
      }
      return static_cast<NodeId>(v);
    }
    auto [it, inserted] = id_of.try_emplace(key, static_cast<NodeId>(out.node_keys.size()));
    if (inserted) out.node_keys.push_back(key);
    return it->second;
  };
  for (auto& r : rows) {
    Event ev;
    ev.src = resolve(r.src);
    ev.dst = resolve(r.dst);
    ev.time = static_cast<double>(r.ms) / 1000.0;
    ev.features = std::move(r.features);
    ev.label = std::move(r.label);
    out.stream.append(std::move(ev));
  }
  out.stream.reserve_nodes(out.node_keys.size());
  return out;
}

inline Dataset load_temporal_csv(const std::string& path, const LabelMapping& labels = {},
                                 IdMode ids = IdMode::kEnumerate) {
  std::ifstream in(path);
  if (!in) throw Error("csv: cannot open '" + path + "'");
  return load_temporal_csv(in, labels, ids);
}

// Canonical form: dense ids, integer milliseconds, round-trippable features.
inline void save_temporal_csv(const EventStream& stream, std::ostream& out) {
  out << "src,dst,timestamp,label";
  for (std::size_t k = 0; k < stream.feature_dim(); ++k) out << ",f" << k;
  out << '\n';
  for (const auto& ev : stream.events()) {
    out << ev.src << ',' << ev.dst << ',' << detail::to_millis(ev.time) << ',' << label_text(ev.label);
    for (double f : ev.features) out << ',' << detail::format_double(f);
    out << '\n';
  }
}

// Same schema with the original node keys in src/dst.
inline void save_keyed_csv(const Dataset& data, std::ostream& out) {
  out << "src,dst,timestamp,label";
  for (std::size_t k = 0; k < data.stream.feature_dim(); ++k) out << ",f" << k;
  out << '\n';
  for (const auto& ev : data.stream.events()) {
    out << data.node_keys.at(ev.src) << ',' << data.node_keys.at(ev.dst) << ',' << detail::to_millis(ev.time)
        << ',' << label_text(ev.label);
    for (double f : ev.features) out << ',' << detail::format_double(f);
    out << '\n';
  }
}

struct FeatureScaling {
  std::vector<double> min;
  std::vector<double> max;
};

// Min-max statistics from the first `fit_rows` events.
inline FeatureScaling fit_scaling(const EventStream& stream, std::size_t fit_rows) {
  FeatureScaling s;
  const std::size_t d = stream.feature_dim();
  s.min.assign(d, std::numeric_limits<double>::infinity());
  s.max.assign(d, -std::numeric_limits<double>::infinity());
  fit_rows = std::min(fit_rows, stream.size());
  for (std::size_t i = 0; i < fit_rows; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      s.min[k] = std::min(s.min[k], stream[i].features[k]);
      s.max[k] = std::max(s.max[k], stream[i].features[k]);
    }
  return s;
}

// Scales every feature into [0,1] with the given statistics, clamping values
// outside the fitted range. Constant (or unfitted) columns map to 0.
inline EventStream apply_scaling(const EventStream& stream, const FeatureScaling& s) {
  EventStream out(stream.feature_dim());
  out.reserve_nodes(stream.node_count());
  for (Event ev : stream.events()) {
    for (std::size_t k = 0; k < ev.features.size(); ++k) {
      const double range = s.max[k] - s.min[k];
      ev.features[k] = range > 0.0 ? std::clamp((ev.features[k] - s.min[k]) / range, 0.0, 1.0) : 0.0;
    }
    out.append(std::move(ev));
  }
  return out;
}

// Min-max scaling fitted on the first `fit_rows` events (the train slice).
inline EventStream scale_features(const EventStream& stream, std::size_t fit_rows) {
  return apply_scaling(stream, fit_scaling(stream, fit_rows));
}

// Every feature set to 0, ids and timestamps kept.
inline EventStream zero_features(const EventStream& stream) {
  EventStream out(stream.feature_dim());
  out.reserve_nodes(stream.node_count());
  for (Event ev : stream.events()) {
    std::fill(ev.features.begin(), ev.features.end(), 0.0);
    out.append(std::move(ev));
  }
  return out;
}

// Joins a benign day and an attack day into one timeline that starts at 0:
// the benign part is shifted to start at 0 and the attack part to start
// where the benign part ends. Attack-day node keys already present in the
// benign day keep their ids.
inline Dataset stitch_days(const Dataset& benign, const Dataset& attack_day) {
  if (benign.stream.empty() || attack_day.stream.empty()) throw Error("stitch_days: both parts must be nonempty");
  if (benign.stream.feature_dim() != attack_day.stream.feature_dim()) {
    throw Error("stitch_days: feature width mismatch");
  }
  const auto& b = benign.stream.events();
  const auto& a = attack_day.stream.events();
  const double b0 = b.front().time, b_end = b.back().time - b0;
  const double a0 = a.front().time;

  Dataset out;
  out.node_keys = benign.node_keys;
  if (out.node_keys.size() < benign.stream.node_count()) {
    for (std::size_t k = out.node_keys.size(); k < benign.stream.node_count(); ++k)
      out.node_keys.push_back(std::to_string(k));
  }
  std::unordered_map<std::string, NodeId> id_of;
  for (std::size_t i = 0; i < out.node_keys.size(); ++i) id_of.emplace(out.node_keys[i], static_cast<NodeId>(i));
  auto remap = [&](NodeId v) {
    const std::string key = v < attack_day.node_keys.size() ? attack_day.node_keys[v] : "attack:" + std::to_string(v);
    auto [it, inserted] = id_of.try_emplace(key, static_cast<NodeId>(out.node_keys.size()));
    if (inserted) out.node_keys.push_back(key);
    return it->second;
  };

  out.stream = EventStream(benign.stream.feature_dim());
  for (Event ev : b) {
    ev.time -= b0;
    out.stream.append(std::move(ev));
  }
  for (Event ev : a) {
    ev.time = ev.time - a0 + b_end;
    ev.src = remap(ev.src);
    ev.dst = remap(ev.dst);
    out.stream.append(std::move(ev));
  }
  out.stream.reserve_nodes(out.node_keys.size());
  return out;
}

struct SplitSpec {
  std::size_t n_train = 200000;
  std::size_t n_val = 70000;
};

struct ChronoSplit {
  EventStream train;
  EventStream val;
  EventStream test;
};

// Contiguous train / validation / test prefix split. Train and validation
// must be free of attack events.
inline ChronoSplit chrono_split(const EventStream& stream, const SplitSpec& spec) {
  if (spec.n_train + spec.n_val > stream.size()) {
    throw Error("chrono_split: n_train + n_val = " + std::to_string(spec.n_train + spec.n_val) +
                " exceeds stream length " + std::to_string(stream.size()));
  }
  const std::size_t guard = spec.n_train + spec.n_val;
  for (std::size_t i = 0; i < guard; ++i) {
    if (stream[i].label.is_attack()) {
      throw Error("chrono_split: attack event '" + stream[i].label.attack_name + "' at index " + std::to_string(i) +
                  " falls inside the train/validation range (first " + std::to_string(guard) + " events)");
    }
  }
  return {stream.slice(0, spec.n_train), stream.slice(spec.n_train, guard), stream.slice(guard, stream.size())};
}

// Copies n randomly chosen events whose source is `donor`, replaces the
// source with `suspect`, labels them Normal and merges them back at their
// original timestamps (after the originals on ties).
inline EventStream inject_identity_swap(const EventStream& train, NodeId donor, NodeId suspect, std::size_t n,
                                        std::uint64_t seed) {
  std::vector<std::size_t> donor_events;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].src == donor) donor_events.push_back(i);
  if (donor_events.size() < n) {
    throw Error("inject_identity_swap: donor node " + std::to_string(donor) + " is the source of only " +
                std::to_string(donor_events.size()) + " events, " + std::to_string(n) + " requested");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(donor_events.begin(), donor_events.end(), rng);
  donor_events.resize(n);
  std::sort(donor_events.begin(), donor_events.end());

  std::vector<Event> merged(train.events().begin(), train.events().end());
  for (std::size_t i : donor_events) {
    Event copy = train[i];
    copy.src = suspect;
    copy.label = Label::Normal();
    merged.push_back(std::move(copy));
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
  EventStream out(train.feature_dim());
  out.reserve_nodes(std::max<std::size_t>(train.node_count(), suspect + std::size_t{1}));
  for (auto& ev : merged) out.append(std::move(ev));
  return out;
}

struct SynthConfig {
  std::size_t n_nodes = 50;
  std::size_t n_benign_events = 2000;
  std::size_t n_attack_events = 200;
  std::size_t attacker_count = 2;
  std::size_t victim_count = 2;
  std::size_t n_features = 8;
  std::size_t n_communities = 5;
  double benign_interarrival = 1.0;   // mean seconds between benign events
  double attack_interarrival = 0.05;  // mean seconds between attack events
  // Attacks start after this fraction of the benign events and overlap the
  // rest of the benign timeline. 1.0 appends them after all benign traffic.
  double attack_start_fraction = 0.85;
  double feature_noise = 0.05;
  // Attackers reuse ids of benign hosts instead of appearing as fresh nodes.
  bool hard_mode = false;
  std::uint64_t seed = 7;
};

// Benign traffic among communities of hosts, each community talking mostly
// to its own server with its own protocol mix, plus a late attack phase in
// which a few attackers send fast bursts to a few victims with their own
// feature prototypes.
inline Dataset synth_generate(const SynthConfig& cfg) {
  if (cfg.n_nodes < 2) throw Error("synth: need at least 2 nodes");
  if (cfg.n_communities == 0 || cfg.n_communities > cfg.n_nodes) throw Error("synth: bad community count");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.feature_noise);
  const std::size_t d = cfg.n_features;
  constexpr std::size_t kProtocols = 4;

  auto prototype = [&] {
    std::vector<double> p(d);
    for (double& x : p) x = 0.15 + 0.7 * unit(rng);
    return p;
  };
  std::vector<std::vector<double>> benign_proto, attack_proto;
  for (std::size_t k = 0; k < kProtocols; ++k) benign_proto.push_back(prototype());
  for (std::size_t k = 0; k < 2; ++k) attack_proto.push_back(prototype());
  auto draw_features = [&](const std::vector<double>& proto) {
    std::vector<double> f(d);
    for (std::size_t k = 0; k < d; ++k) f[k] = std::clamp(proto[k] + noise(rng), 0.0, 1.0);
    return f;
  };

  Dataset out;
  out.stream = EventStream(d);
  const std::size_t nc = cfg.n_communities;
  for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
    out.node_keys.push_back("10.0." + std::to_string(i % nc) + "." + std::to_string(10 + i / nc));
  }
  // Community c holds nodes {c, c + nc, ...}; its server is node c.
  std::vector<std::vector<NodeId>> members(nc);
  for (std::size_t i = 0; i < cfg.n_nodes; ++i) members[i % nc].push_back(static_cast<NodeId>(i));
  std::vector<double> activity(cfg.n_nodes);
  for (std::size_t i = 0; i < cfg.n_nodes; ++i) activity[i] = 1.0 / std::pow(1.0 + static_cast<double>(i / nc), 0.7);
  std::discrete_distribution<std::size_t> pick_src(activity.begin(), activity.end());
  std::exponential_distribution<double> benign_gap(1.0 / cfg.benign_interarrival);

  double t = 0.0;
  auto stamp = [](double seconds) { return static_cast<double>(std::llround(seconds * 1000.0)) / 1000.0; };
  for (std::size_t e = 0; e < cfg.n_benign_events; ++e) {
    t += benign_gap(rng);
    const auto src = static_cast<NodeId>(pick_src(rng));
    const std::size_t c = src % nc;
    NodeId dst = src;
    const double u = unit(rng);
    while (dst == src) {
      if (u < 0.6 && src != c) {
        dst = static_cast<NodeId>(c);
      } else if (u < 0.9) {
        dst = members[c][static_cast<std::size_t>(unit(rng) * static_cast<double>(members[c].size()))];
      } else {
        dst = static_cast<NodeId>(unit(rng) * static_cast<double>(cfg.n_nodes));
      }
      if (members[c].size() == 1 && dst == src) dst = static_cast<NodeId>((src + 1) % cfg.n_nodes);
    }
    const std::size_t proto = unit(rng) < 0.8 ? c % kProtocols : static_cast<std::size_t>(unit(rng) * kProtocols);
    out.stream.append({src, dst, stamp(t), draw_features(benign_proto[proto]), Label::Normal()});
  }

  if (cfg.n_attack_events > 0) {
    if (cfg.attacker_count == 0 || cfg.victim_count == 0) throw Error("synth: attacks need attackers and victims");
    std::vector<NodeId> attackers, victims;
    // Victims: the busiest server first, then random hosts.
    victims.push_back(0);
    while (victims.size() < std::min(cfg.victim_count, cfg.n_nodes)) {
      auto v = static_cast<NodeId>(unit(rng) * static_cast<double>(cfg.n_nodes));
      if (std::find(victims.begin(), victims.end(), v) == victims.end()) victims.push_back(v);
    }
    if (cfg.hard_mode) {
      std::vector<NodeId> pool;
      for (std::size_t v = nc; v < cfg.n_nodes; ++v)
        if (std::find(victims.begin(), victims.end(), v) == victims.end()) pool.push_back(static_cast<NodeId>(v));
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(std::min(pool.size(), cfg.attacker_count));
      attackers = pool;
    } else {
      for (std::size_t k = 0; k < cfg.attacker_count; ++k) {
        attackers.push_back(static_cast<NodeId>(out.node_keys.size()));
        out.node_keys.push_back("172.16.0." + std::to_string(1 + k));
      }
    }
    if (attackers.empty()) throw Error("synth: no room for attackers");

    // Bursts of ~50 events start at random points of the attack window,
    // which spans the tail of the benign timeline.
    const auto& benign = out.stream.events();
    const double span_end = benign.empty() ? 0.0 : benign.back().time;
    const std::size_t first = static_cast<std::size_t>(cfg.attack_start_fraction * static_cast<double>(benign.size()));
    const double window_begin = first < benign.size() ? benign[first].time : span_end;
    const std::size_t n_bursts = std::max<std::size_t>(1, cfg.n_attack_events / 50);
    std::vector<double> burst_start(n_bursts);
    for (double& b : burst_start) b = window_begin + unit(rng) * std::max(0.0, span_end - window_begin);
    std::sort(burst_start.begin(), burst_start.end());
    std::exponential_distribution<double> attack_gap(1.0 / cfg.attack_interarrival);
    static const char* kAttackNames[] = {"DoS", "PortScan"};
    std::vector<Event> attacks;
    for (std::size_t b = 0; b < n_bursts; ++b) {
      const std::size_t count = cfg.n_attack_events / n_bursts + (b < cfg.n_attack_events % n_bursts ? 1 : 0);
      const std::size_t a = b % attackers.size();
      const std::size_t kind = a % 2;
      double ta = burst_start[b];
      for (std::size_t e = 0; e < count; ++e) {
        ta += attack_gap(rng);
        const NodeId v = victims[static_cast<std::size_t>(unit(rng) * static_cast<double>(victims.size()))];
        attacks.push_back({attackers[a], v, stamp(ta), draw_features(attack_proto[kind]),
                           Label::Attack(kAttackNames[kind])});
      }
    }
    std::vector<Event> merged(benign.begin(), benign.end());
    merged.insert(merged.end(), attacks.begin(), attacks.end());
    std::stable_sort(merged.begin(), merged.end(), [](const Event& x, const Event& y) { return x.time < y.time; });
    out.stream = EventStream(d);
    for (auto& ev : merged) out.stream.append(std::move(ev));
  }
  out.stream.reserve_nodes(out.node_keys.size());
  return out;
}

}  // namespace tgnsvdd
