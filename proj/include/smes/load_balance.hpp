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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "smes/error.hpp"
#include "smes/matrix.hpp"
#include "smes/routing.hpp"

namespace smes {

/// Which per-(instance, task) weights feed the probability mass p̄.
enum class MassSource {
  kSparseWeights,  // renormalized weights over K_t (default)
  kFullSoftmax,    // softmax over all E experts
};

/// Batch-level expert utilization.
struct LoadStats {
  std::vector<double> frequency;     // f̄_e
  std::vector<double> mass;          // p̄_e
  std::vector<std::uint64_t> counts;  // c_e = B*T*f̄_e
  double l_lb = 0.0;
  std::size_t batch_size = 0;
  std::size_t num_tasks = 0;
  std::size_t budget = 0;  // K
  MassSource source = MassSource::kSparseWeights;

  std::size_t num_experts() const noexcept { return counts.size(); }
};

inline LoadStats compute_load_stats(
    std::span<const RoutingDecision> decisions,
    MassSource source = MassSource::kSparseWeights) {
  check(!decisions.empty(), ErrorCode::kInvalidArgument,
        "load statistics of an empty batch");
  const auto& first = decisions.front();
  check(first.num_tasks() > 0 && !first.active[0].empty(),
        ErrorCode::kInvalidArgument, "decision without tasks or experts");
  LoadStats s;
  s.batch_size = decisions.size();
  s.num_tasks = first.num_tasks();
  s.budget = first.active[0].size();
  s.source = source;
  const std::size_t experts = first.num_experts();
  s.counts.assign(experts, 0);
  s.mass.assign(experts, 0.0);

  for (std::size_t b = 0; b < decisions.size(); ++b) {
    const auto& d = decisions[b];
    check(d.num_tasks() == s.num_tasks && d.num_experts() == experts,
          ErrorCode::kInconsistent,
          "decision " + std::to_string(b) + " has a different task or expert count");
    const Matrix& weights =
        source == MassSource::kSparseWeights ? d.weights : d.full_probs;
    for (std::size_t t = 0; t < s.num_tasks; ++t) {
      check(d.active[t].size() == s.budget, ErrorCode::kInconsistent,
            "routers selected different numbers of experts");
      for (ExpertIndex e : d.active[t]) ++s.counts[e];
      const auto w = weights.row(t);
      for (std::size_t e = 0; e < experts; ++e) s.mass[e] += w[e];
    }
  }
  const double denom = static_cast<double>(s.batch_size * s.num_tasks);
  s.frequency.resize(experts);
  double dot = 0.0;
  for (std::size_t e = 0; e < experts; ++e) {
    s.frequency[e] = static_cast<double>(s.counts[e]) / denom;
    s.mass[e] /= denom;
    dot += s.frequency[e] * s.mass[e];
  }
  s.l_lb = static_cast<double>(experts) / static_cast<double>(s.budget) * dot;
  return s;
}

/// d l_lb / d z_{t,e} for every instance (T x E each). f̄ is held constant;
/// the gradient flows through p̄ into the softmax that produced the mass, so
/// with sparse mass it is zero outside K_t.
inline std::vector<Matrix> lb_loss_gradient(
    const LoadStats& stats, std::span<const RoutingDecision> decisions,
    std::span<const Matrix> logits) {
  check(decisions.size() == stats.batch_size && logits.size() == decisions.size(),
        ErrorCode::kInconsistent,
        "load stats cover " + std::to_string(stats.batch_size) +
            " instances but got " + std::to_string(decisions.size()) +
            " decisions and " + std::to_string(logits.size()) + " logit sets");
  const std::size_t experts = stats.num_experts();
  const double scale = static_cast<double>(experts) /
                       static_cast<double>(stats.budget) /
                       static_cast<double>(stats.batch_size * stats.num_tasks);
  // d l_lb / d p_{t,e}^(b) = scale * f̄_e, identical for every (b, t).
  std::vector<double> dmass(experts);
  for (std::size_t e = 0; e < experts; ++e) dmass[e] = scale * stats.frequency[e];

  std::vector<Matrix> grads;
  grads.reserve(decisions.size());
  for (std::size_t b = 0; b < decisions.size(); ++b) {
    const auto& d = decisions[b];
    check(d.num_tasks() == stats.num_tasks && d.num_experts() == experts &&
              logits[b].rows() == stats.num_tasks &&
              logits[b].cols() == experts,
          ErrorCode::kInconsistent,
          "instance " + std::to_string(b) + " does not match the load stats");
    Matrix g(stats.num_tasks, experts);
    for (std::size_t t = 0; t < stats.num_tasks; ++t) {
      auto row = g.row(t);
      if (stats.source == MassSource::kSparseWeights) {
        const auto p = d.weights.row(t);
        double mean = 0.0;
        for (ExpertIndex e : d.active[t]) mean += p[e] * dmass[e];
        for (ExpertIndex e : d.active[t]) row[e] = p[e] * (dmass[e] - mean);
      } else {
        const auto p = d.full_probs.row(t);
        double mean = 0.0;
        for (std::size_t e = 0; e < experts; ++e) mean += p[e] * dmass[e];
        for (std::size_t e = 0; e < experts; ++e) row[e] = p[e] * (dmass[e] - mean);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

struct SkewDiagnostics {
  double coefficient_of_variation = 0.0;  // population std / mean of c_e
  double max_mean_ratio = 0.0;
  double dead_fraction = 0.0;             // share of experts with c_e == 0
};

inline SkewDiagnostics skew_diagnostics(std::span<const std::uint64_t> counts) {
  SkewDiagnostics s;
  if (counts.empty()) return s;
  const double n = static_cast<double>(counts.size());
  double total = 0.0;
  std::size_t dead = 0;
  std::uint64_t peak = 0;
  for (auto c : counts) {
    total += static_cast<double>(c);
    if (c == 0) ++dead;
    peak = std::max(peak, c);
  }
  s.dead_fraction = static_cast<double>(dead) / n;
  const double mean = total / n;
  if (mean == 0.0) return s;
  double var = 0.0;
  for (auto c : counts) {
    const double diff = static_cast<double>(c) - mean;
    var += diff * diff;
  }
  s.coefficient_of_variation = std::sqrt(var / n) / mean;
  s.max_mean_ratio = static_cast<double>(peak) / mean;
  return s;
}

inline SkewDiagnostics skew_diagnostics(const LoadStats& stats) {
  return skew_diagnostics(stats.counts);
}

}  // namespace smes
