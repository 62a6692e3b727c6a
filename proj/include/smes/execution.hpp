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
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "smes/error.hpp"
#include "smes/matrix.hpp"
#include "smes/routing.hpp"

namespace smes {

enum class Activation { kIdentity, kRelu };

inline double activate(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0.0 ? x : 0.0) : x;
}

inline double activation_derivative(Activation a, double pre) {
  return a == Activation::kRelu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0;
}

/// E affine experts d_in -> d_out sharing one elementwise activation.
struct ExpertPool {
  std::vector<Matrix> weights;             // E entries, d_in x d_out
  std::vector<std::vector<double>> biases;  // E entries, length d_out
  Activation activation = Activation::kIdentity;

  ExpertPool() = default;
  ExpertPool(std::size_t num_experts, std::size_t in_dim, std::size_t out_dim,
             Activation act = Activation::kIdentity)
      : weights(num_experts, Matrix(in_dim, out_dim)),
        biases(num_experts, std::vector<double>(out_dim, 0.0)),
        activation(act) {}

  std::size_t size() const noexcept { return weights.size(); }
  std::size_t in_dim() const noexcept {
    return weights.empty() ? 0 : weights.front().rows();
  }
  std::size_t out_dim() const noexcept {
    return weights.empty() ? 0 : weights.front().cols();
  }

  void validate() const {
    check(biases.size() == weights.size(), ErrorCode::kShapeMismatch,
          "expert pool weight/bias counts differ");
    for (std::size_t e = 0; e < weights.size(); ++e) {
      check(weights[e].rows() == in_dim() && weights[e].cols() == out_dim() &&
                biases[e].size() == out_dim(),
            ErrorCode::kShapeMismatch,
            "expert " + std::to_string(e) + " has shape " +
                weights[e].shape_string());
    }
  }
};

/// One packed row: instance b evaluated by expert e.
struct ActivationSlot {
  std::size_t instance = 0;
  ExpertIndex expert = 0;

  friend bool operator==(const ActivationSlot&, const ActivationSlot&) = default;
};

/// Expert-major packing of the deduplicated (instance, expert) activations of
/// a batch, with the back-map from (instance, expert) to packed row.
class ExecutionPlan {
 public:
  using RowEntry = std::pair<ExpertIndex, std::size_t>;  // (expert, row)

  std::size_t num_experts() const noexcept { return loads_.size(); }
  std::size_t num_instances() const noexcept { return back_map_.size(); }
  const std::vector<std::size_t>& loads() const noexcept { return loads_; }
  std::size_t total_activations() const noexcept { return gather_.size(); }
  const std::vector<ActivationSlot>& gather_rows() const noexcept {
    return gather_;
  }
  // E + 1 prefix sums of loads.
  const std::vector<std::size_t>& segment_offsets() const noexcept {
    return offsets_;
  }
  std::span<const RowEntry> instance_rows(std::size_t b) const {
    return back_map_.at(b);
  }

  std::optional<std::size_t> find_row(std::size_t b, ExpertIndex e) const {
    if (b >= back_map_.size()) return std::nullopt;
    const auto& rows = back_map_[b];
    auto it = std::lower_bound(
        rows.begin(), rows.end(), e,
        [](const RowEntry& entry, ExpertIndex key) { return entry.first < key; });
    if (it == rows.end() || it->first != e) return std::nullopt;
    return it->second;
  }

  std::size_t row(std::size_t b, ExpertIndex e) const {
    const auto r = find_row(b, e);
    if (!r) {
      fail(ErrorCode::kInconsistent,
           "execution plan has no row for instance " + std::to_string(b) +
               ", expert " + std::to_string(e));
    }
    return *r;
  }

 private:
  friend ExecutionPlan build_execution_plan(std::span<const IndexSet>,
                                            std::size_t);

  std::vector<std::size_t> loads_;
  std::vector<std::size_t> offsets_;
  std::vector<ActivationSlot> gather_;
  // Per instance, sorted by expert.
  std::vector<std::vector<RowEntry>> back_map_;
};

inline ExecutionPlan build_execution_plan(std::span<const IndexSet> unions,
                                          std::size_t num_experts) {
  ExecutionPlan plan;
  plan.loads_.assign(num_experts, 0);
  std::vector<std::vector<std::size_t>> buckets(num_experts);
  for (std::size_t b = 0; b < unions.size(); ++b) {
    for (ExpertIndex e : unions[b]) {
      if (e >= num_experts) {
        fail(ErrorCode::kInvalidArgument,
             "instance " + std::to_string(b) + " activates expert " +
                 std::to_string(e) + " but only " +
                 std::to_string(num_experts) + " experts exist");
      }
      ++plan.loads_[e];
      buckets[e].push_back(b);
    }
  }
  plan.offsets_.assign(num_experts + 1, 0);
  for (std::size_t e = 0; e < num_experts; ++e) {
    plan.offsets_[e + 1] = plan.offsets_[e] + plan.loads_[e];
  }
  plan.gather_.reserve(plan.offsets_.back());
  plan.back_map_.assign(unions.size(), {});
  for (std::size_t e = 0; e < num_experts; ++e) {
    for (std::size_t b : buckets[e]) {
      plan.back_map_[b].emplace_back(e, plan.gather_.size());
      plan.gather_.push_back({b, e});
    }
  }
  return plan;
}

/// Copies each activated instance representation into its packed row.
inline Matrix gather_inputs(const Matrix& reps, const ExecutionPlan& plan) {
  check(reps.rows() == plan.num_instances(), ErrorCode::kShapeMismatch,
        "gather: representations " + reps.shape_string() + " for plan with " +
            std::to_string(plan.num_instances()) + " instances");
  Matrix packed(plan.total_activations(), reps.cols());
  const auto& rows = plan.gather_rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = reps.row(rows[r].instance);
    std::copy(src.begin(), src.end(), packed.row(r).begin());
  }
  return packed;
}

namespace detail {

inline void run_segment(const Matrix& packed, const ExpertPool& pool,
                        std::size_t expert, std::size_t begin, std::size_t end,
                        Matrix& out, Matrix* pre_activation) {
  const Matrix& w = pool.weights[expert];
  const auto& bias = pool.biases[expert];
  const std::size_t d_in = w.rows();
  const std::size_t d_out = w.cols();
  for (std::size_t r = begin; r < end; ++r) {
    const double* x = packed.row(r).data();
    double* y = out.row(r).data();
    std::copy(bias.begin(), bias.end(), y);
    for (std::size_t k = 0; k < d_in; ++k) {
      const double xk = x[k];
      const double* wrow = w.row(k).data();
      for (std::size_t j = 0; j < d_out; ++j) y[j] += xk * wrow[j];
    }
    if (pre_activation != nullptr) {
      std::copy(y, y + d_out, pre_activation->row(r).begin());
    }
    for (std::size_t j = 0; j < d_out; ++j) y[j] = activate(pool.activation, y[j]);
  }
}

}  // namespace detail

/// Applies expert e to its contiguous packed segment, for every e. Segments
/// are disjoint, so `workers > 1` splits experts across threads without
/// changing the result.
inline Matrix grouped_gemm(const Matrix& packed, const ExpertPool& pool,
                           const ExecutionPlan& plan, FlopCounter& counter,
                           Matrix* pre_activation = nullptr,
                           std::size_t workers = 1) {
  if (packed.rows() != plan.total_activations()) {
    fail(ErrorCode::kShapeMismatch,
         "grouped gemm: packed input " + packed.shape_string() +
             " but plan has " + std::to_string(plan.total_activations()) +
             " rows");
  }
  check(plan.num_experts() == pool.size(), ErrorCode::kShapeMismatch,
        "grouped gemm: plan covers " + std::to_string(plan.num_experts()) +
            " experts, pool has " + std::to_string(pool.size()));
  check(packed.cols() == pool.in_dim(), ErrorCode::kShapeMismatch,
        "grouped gemm: packed width " + std::to_string(packed.cols()) +
            " vs expert input " + std::to_string(pool.in_dim()));

  Matrix out(packed.rows(), pool.out_dim());
  if (pre_activation != nullptr) {
    *pre_activation = Matrix(packed.rows(), pool.out_dim());
  }
  const auto& offsets = plan.segment_offsets();
  auto run_range = [&](std::size_t first_expert, std::size_t stride) {
    for (std::size_t e = first_expert; e < pool.size(); e += stride) {
      detail::run_segment(packed, pool, e, offsets[e], offsets[e + 1], out,
                          pre_activation);
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, pool.size()));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back(run_range, w, workers);
    }
  }
  counter.add(static_cast<std::uint64_t>(plan.total_activations()) *
              pool.in_dim() * pool.out_dim());
  detail::require_finite(out, "grouped_gemm");
  return out;
}

/// h_t^(b) = sum over e in K_t^(b) of p_{t,e}^(b) * O[pi(b, e)]. Returns one
/// B x d_out matrix per task.
inline std::vector<Matrix> reconstruct_task_reps(
    const Matrix& expert_out, const ExecutionPlan& plan,
    std::span<const RoutingDecision> decisions) {
  check(decisions.size() == plan.num_instances(), ErrorCode::kInconsistent,
        "reconstruct: " + std::to_string(decisions.size()) +
            " decisions for a plan over " +
            std::to_string(plan.num_instances()) + " instances");
  check(expert_out.rows() == plan.total_activations(), ErrorCode::kShapeMismatch,
        "reconstruct: expert output " + expert_out.shape_string());
  const std::size_t tasks = decisions.empty() ? 0 : decisions[0].num_tasks();
  std::vector<Matrix> reps(tasks, Matrix(decisions.size(), expert_out.cols()));
  for (std::size_t b = 0; b < decisions.size(); ++b) {
    const auto& d = decisions[b];
    check(d.num_tasks() == tasks, ErrorCode::kInconsistent,
          "reconstruct: task count differs across instances");
    for (std::size_t t = 0; t < tasks; ++t) {
      auto dst = reps[t].row(b);
      for (ExpertIndex e : d.active[t]) {
        const double w = d.weights(t, e);
        const auto src = expert_out.row(plan.row(b, e));
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
      }
    }
  }
  return reps;
}

}  // namespace smes
