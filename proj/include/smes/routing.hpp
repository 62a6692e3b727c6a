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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "smes/error.hpp"
#include "smes/matrix.hpp"

namespace smes {

/// Per-task expert budget K = shared + adaptive.
struct RoutingBudget {
  std::size_t shared = 0;
  std::size_t adaptive = 0;

  std::size_t total() const noexcept { return shared + adaptive; }

  // Upper bound on distinct experts one instance can activate.
  std::size_t union_bound(std::size_t num_experts,
                          std::size_t num_tasks) const noexcept {
    return std::min(num_experts, shared + num_tasks * adaptive);
  }

  void validate(std::size_t num_experts) const {
    const std::string where = "routing budget (shared=" +
                              std::to_string(shared) + ", adaptive=" +
                              std::to_string(adaptive) + ", experts=" +
                              std::to_string(num_experts) + ")";
    check(total() >= 1, ErrorCode::kInvalidArgument, where + ": K must be >= 1");
    check(shared <= num_experts, ErrorCode::kInvalidArgument,
          where + ": more shared experts than experts");
    // Equivalent to K <= E; reported as a stage-II candidate shortage.
    check(num_experts - shared >= adaptive, ErrorCode::kInfeasible,
          where + ": too few candidates left for the adaptive stage");
  }
};

/// Per-task affine gates d_in -> E.
struct RouterBank {
  std::vector<Matrix> weights;             // T entries, each d_in x E
  std::vector<std::vector<double>> biases;  // T entries, each length E
  std::vector<double> task_weights;        // pooling weights, default 1

  RouterBank() = default;
  RouterBank(std::size_t in_dim, std::size_t num_experts, std::size_t num_tasks)
      : weights(num_tasks, Matrix(in_dim, num_experts)),
        biases(num_tasks, std::vector<double>(num_experts, 0.0)),
        task_weights(num_tasks, 1.0) {}

  std::size_t num_tasks() const noexcept { return weights.size(); }
  std::size_t num_experts() const noexcept {
    return weights.empty() ? 0 : weights.front().cols();
  }
  std::size_t in_dim() const noexcept {
    return weights.empty() ? 0 : weights.front().rows();
  }

  void validate() const {
    check(biases.size() == weights.size() &&
              task_weights.size() == weights.size(),
          ErrorCode::kShapeMismatch, "router bank task counts disagree");
    for (std::size_t t = 0; t < weights.size(); ++t) {
      check(weights[t].rows() == in_dim() &&
                weights[t].cols() == num_experts() &&
                biases[t].size() == num_experts(),
            ErrorCode::kShapeMismatch,
            "router " + std::to_string(t) + " has shape " +
                weights[t].shape_string());
      check(task_weights[t] >= 0.0, ErrorCode::kInvalidArgument,
            "task weight " + std::to_string(t) + " is negative");
    }
  }

  /// T x E logits for one representation.
  Matrix logits(std::span<const double> h, FlopCounter& counter) const {
    Matrix out(num_tasks(), num_experts());
    for (std::size_t t = 0; t < num_tasks(); ++t) {
      const auto z = vecmat(h, weights[t], biases[t], counter);
      std::copy(z.begin(), z.end(), out.row(t).begin());
    }
    return out;
  }
};

/// Routing outcome for one instance.
struct RoutingDecision {
  IndexSet shared;                 // S, empty for naive routing
  std::vector<IndexSet> adaptive;  // A_t
  std::vector<IndexSet> active;    // K_t = S u A_t
  IndexSet union_set;              // U
  Matrix weights;                  // T x E, zero outside K_t
  Matrix full_probs;               // T x E softmax over all experts

  std::size_t num_tasks() const noexcept { return active.size(); }
  std::size_t num_experts() const noexcept { return weights.cols(); }
};

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

/// Softmax renormalized over `active` only; exact zeros elsewhere.
inline std::vector<double> sparse_weights(std::span<const double> logits,
                                          const IndexSet& active) {
  check(!active.empty(), ErrorCode::kInvalidArgument,
        "sparse weights over an empty active set");
  double peak = logits[active.front()];
  for (std::size_t e : active) peak = std::max(peak, logits[e]);
  std::vector<double> out(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t e : active) {
    out[e] = std::exp(logits[e] - peak);
    total += out[e];
  }
  for (std::size_t e : active) out[e] /= total;
  return out;
}

namespace detail {

inline void finish_decision(RoutingDecision& d, const Matrix& logits) {
  const std::size_t tasks = d.active.size();
  d.weights = Matrix(tasks, logits.cols());
  d.union_set.clear();
  for (std::size_t t = 0; t < tasks; ++t) {
    const auto w = sparse_weights(logits.row(t), d.active[t]);
    std::copy(w.begin(), w.end(), d.weights.row(t).begin());
    d.union_set = set_union(d.union_set, d.active[t]);
  }
}

}  // namespace detail

/// Independent per-task top-K (the naive multi-task extension).
inline RoutingDecision naive_sparse_route(const Matrix& logits, std::size_t k) {
  check(k >= 1, ErrorCode::kInvalidArgument, "naive routing with K=0");
  if (k > logits.cols()) {
    fail(ErrorCode::kInvalidArgument,
         "naive routing with K=" + std::to_string(k) + " > E=" +
             std::to_string(logits.cols()));
  }
  RoutingDecision d;
  d.full_probs = softmax_rows(logits);
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    d.active.push_back(top_k(logits.row(t), k));
  }
  d.adaptive = d.active;
  detail::finish_decision(d, logits);
  return d;
}

/// s_e = sum_t w_t * p_{t,e}; the literal weighted sum, not normalized.
inline std::vector<double> compute_global_scores(
    const Matrix& probs, std::span<const double> task_weights) {
  if (task_weights.size() != probs.rows()) {
    fail(ErrorCode::kShapeMismatch,
         "global scores: " + std::to_string(task_weights.size()) +
             " task weights for " + std::to_string(probs.rows()) + " tasks");
  }
  std::vector<double> scores(probs.cols(), 0.0);
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    check(task_weights[t] >= 0.0, ErrorCode::kInvalidArgument,
          "negative task weight in global scores");
    const auto p = probs.row(t);
    for (std::size_t e = 0; e < scores.size(); ++e) {
      scores[e] += task_weights[t] * p[e];
    }
  }
  return scores;
}

/// Two-stage routing: a shared set from pooled probabilities, then per-task
/// adaptive experts ranked by raw logits outside the shared set.
inline RoutingDecision progressive_route(const Matrix& logits,
                                         const Matrix& probs,
                                         const RoutingBudget& budget,
                                         std::span<const double> task_weights) {
  if (logits.rows() != probs.rows() || logits.cols() != probs.cols()) {
    fail(ErrorCode::kShapeMismatch, "progressive routing: logits " +
                                        logits.shape_string() + " vs probs " +
                                        probs.shape_string());
  }
  budget.validate(logits.cols());

  RoutingDecision d;
  d.full_probs = probs;
  const auto scores = compute_global_scores(probs, task_weights);
  d.shared = top_k(scores, budget.shared);
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    d.adaptive.push_back(
        top_k_excluding(logits.row(t), d.shared, budget.adaptive));
    d.active.push_back(set_union(d.shared, d.adaptive.back()));
  }
  detail::finish_decision(d, logits);
  return d;
}

inline RoutingDecision progressive_route(const Matrix& logits,
                                         const RoutingBudget& budget,
                                         std::span<const double> task_weights) {
  return progressive_route(logits, softmax_rows(logits), budget, task_weights);
}

/// Recomputes weights and full probabilities for new logits while keeping the
/// selected sets fixed. Gradient checks use this to freeze routing.
inline void reweight(RoutingDecision& d, const Matrix& logits) {
  check(logits.rows() == d.num_tasks(), ErrorCode::kShapeMismatch,
        "reweight: logits " + logits.shape_string() + " for " +
            std::to_string(d.num_tasks()) + " tasks");
  d.full_probs = softmax_rows(logits);
  detail::finish_decision(d, logits);
}

/// Experts every task activated (the intersection of all K_t).
inline IndexSet common_experts(const RoutingDecision& d) {
  if (d.active.empty()) return {};
  IndexSet out = d.active.front();
  for (std::size_t t = 1; t < d.active.size(); ++t) {
    out = set_intersection(out, d.active[t]);
  }
  return out;
}

}  // namespace smes
