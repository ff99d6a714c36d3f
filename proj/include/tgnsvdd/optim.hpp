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

// Named parameters, Adam with decoupled weight decay, finite-difference
// gradient checking and the JSON checkpoint container.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tgnsvdd/autodiff.hpp"
#include "tgnsvdd/error.hpp"

namespace tgnsvdd::ad {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool decay = true;  // subject to weight decay
};

inline void zero_grad(std::span<Parameter> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One Adam update. Weight decay is decoupled: p <- p - lr * lambda * p for
// parameters flagged `decay`, applied before the moment-based step.
inline void adam_step(std::span<Parameter> params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: parameter list changed size");
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw Error("adam_step: parameter '" + p.name + "' has no gradient");
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto w = p.tensor.mutable_value();
    auto g = p.tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != w.size()) throw Error("adam_step: moment shape mismatch for '" + p.name + "'");
    const double decay = p.decay ? 1.0 - c.lr * c.weight_decay : 1.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = w[i] * decay - c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

// Largest relative error between analytic gradients of `loss_fn` and central
// differences with step eps, over every entry of every parameter. Relative
// error is |a - n| / max(|a|, |n|, floor) so that entries with vanishing
// gradient are compared absolutely.
inline double grad_check(const std::function<Tensor(Graph&)>& loss_fn, std::span<Parameter> params,
                         double eps = 1e-5, double floor = 1e-6) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  zero_grad(params);
  {
    Graph g;
    Tensor loss = loss_fn(g);
    g.backward(loss);
  }
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto w = p.tensor.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      Graph gp;
      const double fp = loss_fn(gp).item();
      w[i] = orig - eps;
      Graph gm;
      const double fm = loss_fn(gm).item();
      w[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json checkpoint_to_json(std::span<const Parameter> params) {
  nlohmann::ordered_json j;
  j["format"] = "tgnsvdd-checkpoint";
  j["version"] = kCheckpointVersion;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["shape"] = {p.tensor.rows(), p.tensor.cols()};
    e["values"] = std::vector<double>(p.tensor.value().begin(), p.tensor.value().end());
    arr.push_back(std::move(e));
  }
  j["parameters"] = std::move(arr);
  return j;
}

// Loads values by name into already-shaped parameters. Every parameter must
// be present with a matching shape.
inline void checkpoint_from_json(const nlohmann::ordered_json& j, std::span<Parameter> params) {
  if (j.value("format", "") != "tgnsvdd-checkpoint") throw Error("checkpoint: unrecognised format");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw Error("checkpoint: unsupported version " + j.value("version", nlohmann::ordered_json()).dump());
  }
  const auto& arr = j.at("parameters");
  for (auto& p : params) {
    auto it = std::find_if(arr.begin(), arr.end(),
                           [&](const auto& e) { return e.at("name").template get<std::string>() == p.name; });
    if (it == arr.end()) throw Error("checkpoint: missing parameter '" + p.name + "'");
    auto shape = it->at("shape").template get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.tensor.rows() || shape[1] != p.tensor.cols()) {
      throw Error("checkpoint: shape mismatch for '" + p.name + "'");
    }
    auto values = it->at("values").template get<std::vector<double>>();
    if (values.size() != p.tensor.size()) throw Error("checkpoint: value count mismatch for '" + p.name + "'");
    std::copy(values.begin(), values.end(), p.tensor.mutable_value().begin());
  }
}

}  // namespace tgnsvdd::ad
