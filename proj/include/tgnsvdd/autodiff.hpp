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

// A small reverse-mode differentiation core over dense row-major matrices.
//
// Every value is a 2-D matrix (a vector is a 1 x n row). Operations are
// recorded on a Graph in creation order, which is already a topological
// order, so backward() is a single reverse sweep. Tensors that do not depend
// on any trainable input are not recorded at all, which makes inference
// through the same code path cheap.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tgnsvdd/error.hpp"

namespace tgnsvdd::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "," + std::to_string(s.cols) + "]";
}

// Shared handle to a matrix value and its gradient. Copies alias the same
// storage, so a parameter captured by a graph is updated in place by the
// optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values) {
    if (values.size() != shape.size()) {
      throw Error("tensor: " + std::to_string(values.size()) + " values for shape " +
                  to_string(shape));
    }
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = shape;
    t.s_->value = std::move(values);
    return t;
  }
  static Tensor zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size())); }
  static Tensor row(std::vector<double> values) {
    const std::size_t n = values.size();
    return constant({1, n}, std::move(values));
  }
  static Tensor scalar(double v) { return constant({1, 1}, {v}); }
  static Tensor parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(shape, std::move(values));
    t.s_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  Shape shape() const { return s_->shape; }
  std::size_t rows() const { return s_->shape.rows; }
  std::size_t cols() const { return s_->shape.cols; }
  std::size_t size() const { return s_->value.size(); }

  std::span<const double> value() const { return s_->value; }
  std::span<double> mutable_value() { return s_->value; }
  double at(std::size_t r, std::size_t c) const { return s_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw Error("tensor: item() on shape " + to_string(shape()));
    return s_->value[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  // Handle semantics: gradient storage is shared, so accumulation is allowed
  // through const handles.
  std::span<double> mutable_grad() const {
    ensure_grad();
    return s_->grad;
  }
  void ensure_grad() const {
    if (s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), 0.0);
  }
  void zero_grad() { s_->grad.assign(s_->value.size(), 0.0); }
  void clear_grad() { s_->grad.clear(); }

  // Detached copy of the value.
  Tensor detach() const { return constant(shape(), s_->value); }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  friend class Graph;
  struct Storage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Records operations and their backward rules for one forward pass.
class Graph {
 public:
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // ---- linear algebra -------------------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) mismatch("matmul", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    auto av = a.value(), bv = b.value();
    for (std::size_t i = 0; i < m; ++i) {
      double* orow = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double x = av[i * k + p];
        if (x == 0.0) continue;
        const double* brow = bv.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
      }
    }
    return record(Shape{m, n}, std::move(out), {a, b}, [a, b, m, k, n](Tensor& o) mutable {
      auto g = o.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto bv = b.value();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g.data() + i * n;
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto av = a.value();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            double* gbrow = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
          }
        }
      }
    });
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) mismatch("add", a, b);
    std::vector<double> out(a.size());
    auto av = a.value(), bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return record(a.shape(), std::move(out), {a, b}, [a, b](Tensor& o) mutable {
      accumulate(a, o.grad());
      accumulate(b, o.grad());
    });
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) mismatch("sub", a, b);
    std::vector<double> out(a.size());
    auto av = a.value(), bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return record(a.shape(), std::move(out), {a, b}, [a, b](Tensor& o) mutable {
      accumulate(a, o.grad());
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto g = o.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }

  // Elementwise product.
  Tensor mul(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) mismatch("mul", a, b);
    std::vector<double> out(a.size());
    auto av = a.value(), bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return record(a.shape(), std::move(out), {a, b}, [a, b](Tensor& o) mutable {
      auto g = o.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto bv = b.value();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto av = a.value();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }

  // a[m,n] + bias[1,n] broadcast over rows.
  Tensor add_row(const Tensor& a, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) mismatch("add_row", a, bias);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.value().begin(), a.value().end());
    auto bv = bias.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return record(a.shape(), std::move(out), {a, bias}, [a, bias, m, n](Tensor& o) mutable {
      accumulate(a, o.grad());
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        auto g = o.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }

  // a[m,n] * w[m,1] broadcast over columns.
  Tensor mul_col(const Tensor& a, const Tensor& w) {
    if (w.cols() != 1 || w.rows() != a.rows()) mismatch("mul_col", a, w);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    auto av = a.value(), wv = w.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * wv[i];
    return record(a.shape(), std::move(out), {a, w}, [a, w, m, n](Tensor& o) mutable {
      auto g = o.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto wv = w.value();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * wv[i];
      }
      if (w.requires_grad()) {
        auto gw = w.mutable_grad();
        auto av = a.value();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * av[i * n + j];
          gw[i] += acc;
        }
      }
    });
  }

  // ---- scalar ops -----------------------------------------------------------

  Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.value().begin(), a.value().end());
    for (double& x : out) x *= s;
    return record(a.shape(), std::move(out), {a}, [a, s](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto g = o.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }

  Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.value().begin(), a.value().end());
    for (double& x : out) x += s;
    return record(a.shape(), std::move(out), {a}, [a](Tensor& o) mutable { accumulate(a, o.grad()); });
  }

  // s - a
  Tensor rsub(double s, const Tensor& a) { return add_scalar(scale(a, -1.0), s); }

  // ---- shape ops ------------------------------------------------------------

  // Column-wise concatenation of matrices with equal row counts.
  Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat: no inputs");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
      if (p.rows() != m) mismatch("concat", parts[0], p);
      n += p.cols();
    }
    std::vector<double> out(m * n);
    std::size_t off = 0;
    for (const auto& p : parts) {
      auto pv = p.value();
      const std::size_t pc = p.cols();
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(pv.data() + i * pc, pc, out.data() + i * n + off);
      off += pc;
    }
    return record(Shape{m, n}, std::move(out), parts, [parts, m, n](Tensor& o) mutable {
      auto g = o.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t pc = p.cols();
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * n + off + j];
        }
        off += pc;
      }
    });
  }

  // Row-wise stacking of matrices with equal column counts.
  Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat_rows: no inputs");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
      if (p.cols() != n) mismatch("concat_rows", parts[0], p);
      m += p.rows();
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    return record(Shape{m, n}, std::move(out), parts, [parts](Tensor& o) mutable {
      auto g = o.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
        }
        off += p.size();
      }
    });
  }

  // Columns [begin, end).
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.cols()) {
      throw Error("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                  ") out of shape " + to_string(a.shape()));
    }
    const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
    std::vector<double> out(m * w);
    auto av = a.value();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(av.data() + i * n + begin, w, out.data() + i * w);
    return record(Shape{m, w}, std::move(out), {a}, [a, m, n, w, begin](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto g = o.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
    });
  }

  // Rows of a selected by index (indices may repeat).
  Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
    const std::size_t n = a.cols();
    std::vector<double> out(idx.size() * n);
    auto av = a.value();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= a.rows()) {
        throw Error("gather_rows: index " + std::to_string(idx[r]) + " out of shape " +
                    to_string(a.shape()));
      }
      std::copy_n(av.data() + idx[r] * n, n, out.data() + r * n);
    }
    const Shape s{idx.size(), n};
    return record(s, std::move(out), {a}, [a, idx = std::move(idx), n](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto g = o.grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += g[r * n + j];
    });
  }

  // Each row repeated `times` times consecutively.
  Tensor repeat_rows(const Tensor& a, std::size_t times) {
    std::vector<std::size_t> idx;
    idx.reserve(a.rows() * times);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t t = 0; t < times; ++t) idx.push_back(i);
    return gather_rows(a, std::move(idx));
  }

  Tensor reshape(const Tensor& a, Shape shape) {
    if (shape.size() != a.size()) mismatch_shape("reshape", a.shape(), shape);
    std::vector<double> out(a.value().begin(), a.value().end());
    return record(shape, std::move(out), {a}, [a](Tensor& o) mutable { accumulate(a, o.grad()); });
  }

  // [m,n] -> [m,1] sums across columns.
  Tensor row_sum(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    auto av = a.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
    return record(Shape{m, 1}, std::move(out), {a}, [a, m, n](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto g = o.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
    });
  }

  // Sums consecutive blocks of `group` rows: [m*group, n] -> [m, n].
  Tensor group_sum_rows(const Tensor& a, std::size_t group) {
    if (group == 0 || a.rows() % group != 0) {
      throw Error("group_sum_rows: " + to_string(a.shape()) + " not divisible into groups of " +
                  std::to_string(group));
    }
    const std::size_t m = a.rows() / group, n = a.cols();
    std::vector<double> out(m * n, 0.0);
    auto av = a.value();
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) out[(i / group) * n + j] += av[i * n + j];
    return record(Shape{m, n}, std::move(out), {a}, [a, group, n](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto g = o.grad();
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[(i / group) * n + j];
    });
  }

  // ---- nonlinearities ---------------------------------------------------------

  Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
  }
  Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double x) { return stable_sigmoid(x); },
                 [](double, double y) { return y * (1.0 - y); });
  }
  Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }
  Tensor cos(const Tensor& a) {
    return unary(a, [](double x) { return std::cos(x); },
                 [](double x, double) { return -std::sin(x); });
  }
  // log(1 + exp(x))
  Tensor softplus(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return stable_sigmoid(x); });
  }

  // Softmax across each row.
  Tensor softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    auto av = a.value();
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = av.data() + i * n;
      const double mx = *std::max_element(row, row + n);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    return record(a.shape(), std::move(out), {a}, [a, m, n](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto g = o.grad();
      auto y = o.value();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
      }
    });
  }

  // ---- reductions -------------------------------------------------------------

  Tensor sum(const Tensor& a) {
    const double s = std::accumulate(a.value().begin(), a.value().end(), 0.0);
    return record(Shape{1, 1}, {s}, {a}, [a](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      const double g = o.grad()[0];
      for (double& x : a.mutable_grad()) x += g;
    });
  }

  Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw Error("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
  }

  Tensor squared_l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double x : a.value()) s += x * x;
    return record(Shape{1, 1}, {s}, {a}, [a](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      const double g = o.grad()[0];
      auto ga = a.mutable_grad();
      auto av = a.value();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * av[i] * g;
    });
  }

  // ---- composites ---------------------------------------------------------------

  // x W + b
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

  // Per-row squared euclidean norm, [m,n] -> [m,1].
  Tensor row_squared_norm(const Tensor& a) { return row_sum(mul(a, a)); }

  // User-supplied elementwise op: f(x) forward, df(x, f(x)) as its derivative.
  template <typename F, typename D>
  Tensor elementwise(const Tensor& a, F f, D df) {
    return unary(a, std::move(f), std::move(df));
  }

  // ---- backward -----------------------------------------------------------------

  // Accumulates d(loss)/d(t) into every recorded tensor that requires grad.
  // Parameters keep whatever gradient they held before, so callers zero them
  // first.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw Error("backward: loss must be scalar, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    Tensor l = loss;
    l.ensure_grad();
    l.mutable_grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward(it->output);
    }
  }

 private:
  struct Record {
    Tensor output;
    std::function<void(Tensor&)> backward;
  };

  static double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  static void accumulate(const Tensor& t, std::span<const double> g) {
    if (!t.requires_grad()) return;
    auto gt = t.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
  }

  [[noreturn]] static void mismatch(const char* op, const Tensor& a, const Tensor& b) {
    mismatch_shape(op, a.shape(), b.shape());
  }
  [[noreturn]] static void mismatch_shape(const char* op, Shape a, Shape b) {
    throw Error(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
  }

  template <typename F, typename D>
  Tensor unary(const Tensor& a, F f, D df) {
    std::vector<double> out(a.size());
    auto av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return record(a.shape(), std::move(out), {a}, [a, df](Tensor& o) mutable {
      if (!a.requires_grad()) return;
      auto ga = a.mutable_grad();
      auto av = a.value();
      auto y = o.value();
      auto g = o.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(av[i], y[i]);
    });
  }

  Tensor record(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                std::function<void(Tensor&)> backward) {
    Tensor out = Tensor::constant(shape, std::move(value));
    const bool needs =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
      out.s_->requires_grad = true;
      records_.push_back({out, std::move(backward)});
    }
    return out;
  }

  std::vector<Record> records_;
};

}  // namespace tgnsvdd::ad
