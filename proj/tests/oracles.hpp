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

// Straight-line reference implementations shared by the unit tests and the
// acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tgnsvdd/baselines.hpp"

namespace tgnsvdd::testing {

inline TabularView points_2d(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> v(2 * n);
  for (double& x : v) x = u(rng);
  return TabularView(2, std::move(v));
}

// Straight-line LOF: full distance matrix, sort by (distance, index).
inline std::vector<double> brute_lof(const TabularView* train, const TabularView& test, std::size_t k, bool novelty) {
  const TabularView& ref = novelty ? *train : test;
  const std::size_t n = ref.rows();
  auto dist = [](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  auto knn = [&](std::span<const double> q, long self) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < n; ++j)
      if (static_cast<long>(j) != self) d.push_back({dist(q, ref.row(j)), j});
    std::sort(d.begin(), d.end());
    d.resize(k);
    return d;
  };
  std::vector<std::vector<std::pair<double, std::size_t>>> nb(n);
  std::vector<double> kdist(n), lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    nb[i] = knn(ref.row(i), static_cast<long>(i));
    kdist[i] = nb[i].back().first;
  }
  auto lrd_of = [&](const std::vector<std::pair<double, std::size_t>>& ns) {
    double s = 0.0;
    for (const auto& [d, j] : ns) s += std::max(kdist[j], d);
    return 1.0 / (s / static_cast<double>(k) + 1e-10);
  };
  for (std::size_t i = 0; i < n; ++i) lrd[i] = lrd_of(nb[i]);
  std::vector<double> out;
  for (std::size_t i = 0; i < test.rows(); ++i) {
    auto ns = novelty ? knn(test.row(i), -1) : nb[i];
    const double own = novelty ? lrd_of(ns) : lrd[i];
    double m = 0.0;
    for (const auto& [d, j] : ns) m += lrd[j];
    out.push_back(m / static_cast<double>(k) / own);
  }
  return out;
}

// P(attack > normal) + P(tie)/2 by counting every pair.
inline double pair_count_auc(const std::vector<bool>& truth, const std::vector<double>& s) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!truth[i] || truth[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return wins / pairs;
}

}  // namespace tgnsvdd::testing
