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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smes/error.hpp"
#include "smes/execution.hpp"
#include "smes/matrix.hpp"
#include "smes/model.hpp"
#include "smes/routing.hpp"

namespace smes {

/// Multiply-adds split by stage.
struct CostBreakdown {
  FlopCounter encoder;
  FlopCounter router;
  FlopCounter expert;
  FlopCounter head;

  std::uint64_t total() const noexcept {
    return encoder.multiply_adds + router.multiply_adds +
           expert.multiply_adds + head.multiply_adds;
  }
};

struct EncoderCache {
  Matrix hidden_pre;  // B x hidden, before relu
  Matrix hidden;      // B x hidden
  Matrix reps;        // B x d_in
};

inline EncoderCache encode(const Encoder& enc, const Matrix& inputs,
                           FlopCounter& counter) {
  EncoderCache c;
  c.hidden_pre = matmul(inputs, enc.hidden_weight, counter);
  add_row_bias(c.hidden_pre, enc.hidden_bias);
  c.hidden = c.hidden_pre;
  for (double& v : c.hidden.values()) v = v > 0.0 ? v : 0.0;
  c.reps = matmul(c.hidden, enc.out_weight, counter);
  add_row_bias(c.reps, enc.out_bias);
  return c;
}

namespace detail {

inline void apply_heads(const TaskHeads& heads,
                        const std::vector<Matrix>& task_reps,
                        Matrix& head_logits, Matrix& predictions,
                        FlopCounter& counter) {
  const std::size_t tasks = task_reps.size();
  const std::size_t batch = tasks == 0 ? 0 : task_reps[0].rows();
  head_logits = Matrix(batch, tasks);
  predictions = Matrix(batch, tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    const auto w = heads.weights.row(t);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto h = task_reps[t].row(b);
      double a = heads.biases[t];
      for (std::size_t j = 0; j < w.size(); ++j) a += w[j] * h[j];
      head_logits(b, t) = a;
      predictions(b, t) = sigmoid(a);
    }
    counter.add(static_cast<std::uint64_t>(batch) * w.size());
  }
}

inline void check_inputs(const MoeModel& model, const Matrix& inputs) {
  check(inputs.cols() == model.dims.input_dim, ErrorCode::kShapeMismatch,
        "inputs " + inputs.shape_string() + " but model expects width " +
            std::to_string(model.dims.input_dim));
}

}  // namespace detail

/// Everything the sparse backward pass needs.
struct SparseForward {
  Matrix inputs;
  EncoderCache encoder;
  std::vector<Matrix> logits;  // per instance, T x E
  std::vector<RoutingDecision> decisions;
  ExecutionPlan plan;
  Matrix packed_inputs;   // N_act x d_in
  Matrix expert_pre;      // N_act x d_out
  Matrix expert_out;      // N_act x d_out
  std::vector<Matrix> task_reps;  // T x (B x d_out)
  Matrix head_logits;     // B x T
  Matrix predictions;     // B x T
  CostBreakdown cost;

  bool valid() const noexcept {
    return !inputs.empty() && decisions.size() == inputs.rows() &&
           plan.num_instances() == inputs.rows();
  }
};

/// Routes every instance with progressive routing, executes each distinct
/// (instance, expert) pair once through the grouped matmul, and mixes the
/// shared outputs per task. If `frozen` is given, its selected sets are reused
/// and only the weights are recomputed from the current logits.
inline SparseForward forward_sparse(
    const Matrix& inputs, const MoeModel& model,
    const std::vector<RoutingDecision>* frozen = nullptr,
    std::size_t workers = 1) {
  detail::check_inputs(model, inputs);
  model.budget.validate(model.dims.num_experts);
  const auto& p = model.params;
  const std::size_t batch = inputs.rows();
  if (frozen != nullptr) {
    check(frozen->size() == batch, ErrorCode::kInconsistent,
          "frozen decisions cover " + std::to_string(frozen->size()) +
              " instances, batch has " + std::to_string(batch));
  }

  SparseForward f;
  f.inputs = inputs;
  f.encoder = encode(p.encoder, inputs, f.cost.encoder);
  f.logits.reserve(batch);
  f.decisions.reserve(batch);
  std::vector<IndexSet> unions;
  unions.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    f.logits.push_back(p.routers.logits(f.encoder.reps.row(b), f.cost.router));
    if (frozen != nullptr) {
      RoutingDecision d = (*frozen)[b];
      reweight(d, f.logits.back());
      f.decisions.push_back(std::move(d));
    } else {
      f.decisions.push_back(progressive_route(f.logits.back(), model.budget,
                                              p.routers.task_weights));
    }
    unions.push_back(f.decisions.back().union_set);
  }
  f.plan = build_execution_plan(unions, model.dims.num_experts);
  f.packed_inputs = gather_inputs(f.encoder.reps, f.plan);
  f.expert_out = grouped_gemm(f.packed_inputs, p.experts, f.plan, f.cost.expert,
                              &f.expert_pre, workers);
  f.task_reps = reconstruct_task_reps(f.expert_out, f.plan, f.decisions);
  detail::apply_heads(p.heads, f.task_reps, f.head_logits, f.predictions,
                      f.cost.head);
  return f;
}

/// Dense baseline: all E experts on every instance, full softmax gates.
struct DenseForward {
  Matrix inputs;
  EncoderCache encoder;
  std::vector<Matrix> logits;      // T x (B x E)
  std::vector<Matrix> probs;       // T x (B x E)
  std::vector<Matrix> expert_pre;  // E x (B x d_out)
  std::vector<Matrix> expert_out;  // E x (B x d_out)
  std::vector<Matrix> task_reps;   // T x (B x d_out)
  Matrix head_logits;
  Matrix predictions;
  CostBreakdown cost;

  bool valid() const noexcept {
    return !inputs.empty() && expert_out.size() > 0;
  }
};

inline DenseForward forward_dense(const Matrix& inputs, const MoeModel& model) {
  detail::check_inputs(model, inputs);
  const auto& p = model.params;
  const std::size_t batch = inputs.rows();
  DenseForward f;
  f.inputs = inputs;
  f.encoder = encode(p.encoder, inputs, f.cost.encoder);
  const Matrix& reps = f.encoder.reps;

  for (std::size_t t = 0; t < model.dims.num_tasks; ++t) {
    Matrix z = matmul(reps, p.routers.weights[t], f.cost.router);
    add_row_bias(z, p.routers.biases[t]);
    f.probs.push_back(softmax_rows(z));
    f.logits.push_back(std::move(z));
  }
  for (std::size_t e = 0; e < model.dims.num_experts; ++e) {
    Matrix pre = matmul(reps, p.experts.weights[e], f.cost.expert);
    add_row_bias(pre, p.experts.biases[e]);
    Matrix out = pre;
    for (double& v : out.values()) v = activate(p.experts.activation, v);
    f.expert_pre.push_back(std::move(pre));
    f.expert_out.push_back(std::move(out));
  }
  for (std::size_t t = 0; t < model.dims.num_tasks; ++t) {
    Matrix h(batch, model.dims.expert_out);
    for (std::size_t b = 0; b < batch; ++b) {
      auto dst = h.row(b);
      for (std::size_t e = 0; e < model.dims.num_experts; ++e) {
        const double w = f.probs[t](b, e);
        const auto src = f.expert_out[e].row(b);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
      }
    }
    f.task_reps.push_back(std::move(h));
  }
  detail::apply_heads(p.heads, f.task_reps, f.head_logits, f.predictions,
                      f.cost.head);
  return f;
}

/// Dense mixture for one representation h: returns T x d_out with row t equal
/// to sum_e softmax(g_t(h))_e * f_e(h).
inline Matrix dense_mmoe_forward(std::span<const double> h,
                                 const MoeModel& model, FlopCounter& counter) {
  const auto& p = model.params;
  check(h.size() == p.experts.in_dim() && h.size() == p.routers.in_dim(),
        ErrorCode::kShapeMismatch,
        "dense mixture: representation of length " + std::to_string(h.size()) +
            ", experts expect " + std::to_string(p.experts.in_dim()));
  std::vector<std::vector<double>> outputs;
  outputs.reserve(p.experts.size());
  for (std::size_t e = 0; e < p.experts.size(); ++e) {
    auto o = vecmat(h, p.experts.weights[e], p.experts.biases[e], counter);
    for (double& v : o) v = activate(p.experts.activation, v);
    outputs.push_back(std::move(o));
  }
  const Matrix probs = softmax_rows(p.routers.logits(h, counter));
  Matrix out(probs.rows(), p.experts.out_dim());
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    auto dst = out.row(t);
    for (std::size_t e = 0; e < outputs.size(); ++e) {
      for (std::size_t j = 0; j < dst.size(); ++j) {
        dst[j] += probs(t, e) * outputs[e][j];
      }
    }
  }
  return out;
}

inline Matrix dense_mmoe_forward(std::span<const double> h, const MoeModel& model) {
  FlopCounter counter;
  return dense_mmoe_forward(h, model, counter);
}

}  // namespace smes
