// Copyright 2026 The SMES Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smes/error.hpp"

namespace smes {

using ExpertIndex = std::size_t;
// Sorted ascending, duplicate free.
using IndexSet = std::vector<std::size_t>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check(data_.size() == rows_ * cols_, ErrorCode::kShapeMismatch,
          "matrix data length " + std::to_string(data_.size()) +
              " does not match shape " + shape_string());
  }

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      check(row.size() == c, ErrorCode::kShapeMismatch,
            "ragged initializer for Matrix::from_rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  static Matrix row_vector(std::span<const double> values) {
    return Matrix(1, values.size(),
                  std::vector<double>(values.begin(), values.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Accumulates multiply-add counts of matrix products. Activations, softmax
/// and weighted aggregation are not counted.
struct FlopCounter {
  std::uint64_t multiply_adds = 0;

  void add(std::uint64_t n) noexcept { multiply_adds += n; }
  void reset() noexcept { multiply_adds = 0; }
};

namespace detail {

inline void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    fail(ErrorCode::kNumeric,
         std::string(op) + " produced a non-finite entry in " +
             m.shape_string() + " result");
  }
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b, FlopCounter& counter) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kShapeMismatch, "matmul " + a.shape_string() + " x " +
                                        b.shape_string() +
                                        ": inner dimensions differ");
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  counter.add(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
  detail::require_finite(out, "matmul");
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  FlopCounter scratch;
  return matmul(a, b, scratch);
}

/// aᵀ·b without materializing the transpose. Used by backward passes.
inline Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::kShapeMismatch, "matmul_transpose_a " + a.shape_string() +
                                        "^T x " + b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto arow = a.row(r);
    const auto brow = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      double* dst = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += ai * brow[j];
    }
  }
  return out;
}

/// a·bᵀ without materializing the transpose.
inline Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::kShapeMismatch, "matmul_transpose_b " + a.shape_string() +
                                        " x " + b.shape_string() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

/// Row vector x (length w.rows()) times w, plus optional bias.
inline std::vector<double> vecmat(std::span<const double> x, const Matrix& w,
                                  std::span<const double> bias,
                                  FlopCounter& counter) {
  if (x.size() != w.rows() || (!bias.empty() && bias.size() != w.cols())) {
    fail(ErrorCode::kShapeMismatch,
         "vecmat [1x" + std::to_string(x.size()) + "] x " + w.shape_string() +
             " + bias[" + std::to_string(bias.size()) + "]");
  }
  std::vector<double> out(w.cols(), 0.0);
  if (!bias.empty()) std::copy(bias.begin(), bias.end(), out.begin());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    const auto wrow = w.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xk * wrow[j];
  }
  counter.add(static_cast<std::uint64_t>(w.rows()) * w.cols());
  return out;
}

inline void add_row_bias(Matrix& m, std::span<const double> bias) {
  if (bias.size() != m.cols()) {
    fail(ErrorCode::kShapeMismatch, "bias of length " +
                                        std::to_string(bias.size()) +
                                        " added to " + m.shape_string());
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

inline std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  return out;
}

/// Numerically stable softmax (max subtraction).
inline std::vector<double> softmax(std::span<const double> logits) {
  check(!logits.empty(), ErrorCode::kInvalidArgument,
        "softmax of an empty vector");
  for (double z : logits) {
    check(std::isfinite(z), ErrorCode::kNumeric, "softmax of non-finite logit");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace detail {

// Orders candidates by descending score, lowest index first on ties.
inline void select_top(std::vector<std::size_t>& candidates,
                       std::span<const double> scores, std::size_t k) {
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(),
                    candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), before);
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end());
}

}  // namespace detail

/// Indices of the k largest scores as a sorted set. Ties go to the lowest
/// index.
inline IndexSet top_k(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) {
    fail(ErrorCode::kInvalidArgument,
         "top_k with k=" + std::to_string(k) + " over " +
             std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> candidates(scores.size());
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  detail::select_top(candidates, scores, k);
  return candidates;
}

/// top_k restricted to indices outside `excluded` (a sorted set).
inline IndexSet top_k_excluding(std::span<const double> scores,
                                const IndexSet& excluded, std::size_t k) {
  std::vector<std::size_t> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::binary_search(excluded.begin(), excluded.end(), i)) {
      candidates.push_back(i);
    }
  }
  if (k > candidates.size()) {
    fail(ErrorCode::kInfeasible,
         "top_k_excluding needs " + std::to_string(k) + " candidates but only " +
             std::to_string(candidates.size()) + " remain");
  }
  detail::select_top(candidates, scores, k);
  return candidates;
}

inline IndexSet set_union(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

inline IndexSet set_intersection(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

inline bool contains(const IndexSet& set, std::size_t value) {
  return std::binary_search(set.begin(), set.end(), value);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace smes
