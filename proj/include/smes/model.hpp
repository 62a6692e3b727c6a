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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "smes/error.hpp"
#include "smes/execution.hpp"
#include "smes/matrix.hpp"
#include "smes/routing.hpp"

namespace smes {

struct ModelDims {
  std::size_t input_dim = 16;       // d
  std::size_t encoder_hidden = 32;
  std::size_t expert_in = 16;       // d_in, the shared representation
  std::size_t expert_out = 8;       // d_out
  std::size_t num_experts = 8;      // E
  std::size_t num_tasks = 2;        // T

  void validate() const {
    check(input_dim > 0 && encoder_hidden > 0 && expert_in > 0 &&
              expert_out > 0 && num_experts > 0 && num_tasks > 0,
          ErrorCode::kInvalidArgument, "all model dimensions must be positive");
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Two-layer shared encoder: h = W2 * relu(W1 * x + b1) + b2.
struct Encoder {
  Matrix hidden_weight;  // d x hidden
  std::vector<double> hidden_bias;
  Matrix out_weight;     // hidden x d_in
  std::vector<double> out_bias;
};

/// Per-task logistic heads over the task representation.
struct TaskHeads {
  Matrix weights;  // T x d_out
  std::vector<double> biases;
};

struct Parameters {
  Encoder encoder;
  ExpertPool experts;
  RouterBank routers;
  TaskHeads heads;
};

struct MoeModel {
  ModelDims dims;
  Parameters params;
  RoutingBudget budget;
  std::vector<double> loss_weights;  // lambda_t
  double beta = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    dims.validate();
    const auto& p = params;
    check(p.encoder.hidden_weight.rows() == dims.input_dim &&
              p.encoder.hidden_weight.cols() == dims.encoder_hidden &&
              p.encoder.hidden_bias.size() == dims.encoder_hidden &&
              p.encoder.out_weight.rows() == dims.encoder_hidden &&
              p.encoder.out_weight.cols() == dims.expert_in &&
              p.encoder.out_bias.size() == dims.expert_in,
          ErrorCode::kShapeMismatch, "encoder shapes disagree with model dims");
    p.experts.validate();
    check(p.experts.size() == dims.num_experts &&
              p.experts.in_dim() == dims.expert_in &&
              p.experts.out_dim() == dims.expert_out,
          ErrorCode::kShapeMismatch, "expert pool disagrees with model dims");
    p.routers.validate();
    check(p.routers.num_tasks() == dims.num_tasks &&
              p.routers.num_experts() == dims.num_experts &&
              p.routers.in_dim() == dims.expert_in,
          ErrorCode::kShapeMismatch, "router bank disagrees with model dims");
    check(p.heads.weights.rows() == dims.num_tasks &&
              p.heads.weights.cols() == dims.expert_out &&
              p.heads.biases.size() == dims.num_tasks,
          ErrorCode::kShapeMismatch, "task heads disagree with model dims");
    check(loss_weights.size() == dims.num_tasks, ErrorCode::kShapeMismatch,
          "need one loss weight per task");
    for (double l : loss_weights) {
      check(l >= 0.0, ErrorCode::kInvalidArgument, "loss weights must be >= 0");
    }
    check(beta >= 0.0, ErrorCode::kInvalidArgument, "beta must be >= 0");
  }
};

struct ModelSpec {
  ModelDims dims;
  RoutingBudget budget{1, 1};
  Activation expert_activation = Activation::kRelu;
  std::vector<double> loss_weights;  // empty means all ones
  std::vector<double> task_weights;  // empty means all ones
  double beta = 0.01;
  double router_init_scale = 0.01;
  std::uint64_t seed = 0;
};

namespace detail {

inline void fill_uniform(std::span<double> values, double bound,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : values) v = dist(rng);
}

}  // namespace detail

/// Draws parameters in block order from one seeded stream. Weights are
/// uniform in +-1/sqrt(fan_in); routers are scaled down by
/// router_init_scale so early routing is close to uniform; biases start at 0.
inline MoeModel make_model(const ModelSpec& spec) {
  const ModelDims& d = spec.dims;
  d.validate();
  MoeModel m;
  m.dims = d;
  m.budget = spec.budget;
  m.beta = spec.beta;
  m.seed = spec.seed;
  m.loss_weights = spec.loss_weights.empty()
                       ? std::vector<double>(d.num_tasks, 1.0)
                       : spec.loss_weights;

  std::mt19937_64 rng(spec.seed);
  auto& p = m.params;
  p.encoder.hidden_weight = Matrix(d.input_dim, d.encoder_hidden);
  p.encoder.hidden_bias.assign(d.encoder_hidden, 0.0);
  p.encoder.out_weight = Matrix(d.encoder_hidden, d.expert_in);
  p.encoder.out_bias.assign(d.expert_in, 0.0);
  detail::fill_uniform(p.encoder.hidden_weight.values(),
                       1.0 / std::sqrt(static_cast<double>(d.input_dim)), rng);
  detail::fill_uniform(p.encoder.out_weight.values(),
                       1.0 / std::sqrt(static_cast<double>(d.encoder_hidden)),
                       rng);

  p.experts = ExpertPool(d.num_experts, d.expert_in, d.expert_out,
                         spec.expert_activation);
  const double expert_bound = 1.0 / std::sqrt(static_cast<double>(d.expert_in));
  for (auto& w : p.experts.weights) {
    detail::fill_uniform(w.values(), expert_bound, rng);
  }

  p.routers = RouterBank(d.expert_in, d.num_experts, d.num_tasks);
  if (!spec.task_weights.empty()) p.routers.task_weights = spec.task_weights;
  for (auto& w : p.routers.weights) {
    detail::fill_uniform(w.values(), spec.router_init_scale * expert_bound, rng);
  }

  p.heads.weights = Matrix(d.num_tasks, d.expert_out);
  p.heads.biases.assign(d.num_tasks, 0.0);
  detail::fill_uniform(p.heads.weights.values(),
                       1.0 / std::sqrt(static_cast<double>(d.expert_out)), rng);

  m.validate();
  return m;
}

/// Same shapes, every parameter zero. Used as the gradient accumulator.
inline Parameters zeros_like(const Parameters& p) {
  Parameters z = p;
  z.encoder.hidden_weight.fill(0.0);
  std::fill(z.encoder.hidden_bias.begin(), z.encoder.hidden_bias.end(), 0.0);
  z.encoder.out_weight.fill(0.0);
  std::fill(z.encoder.out_bias.begin(), z.encoder.out_bias.end(), 0.0);
  for (auto& w : z.experts.weights) w.fill(0.0);
  for (auto& b : z.experts.biases) std::fill(b.begin(), b.end(), 0.0);
  for (auto& w : z.routers.weights) w.fill(0.0);
  for (auto& b : z.routers.biases) std::fill(b.begin(), b.end(), 0.0);
  z.heads.weights.fill(0.0);
  std::fill(z.heads.biases.begin(), z.heads.biases.end(), 0.0);
  return z;
}

struct ParameterBlock {
  std::string name;
  std::span<double> values;
};

// Canonical order, shared by optimizers, gradient checks and checkpoints:
// encoder.hidden.{weight,bias}, encoder.out.{weight,bias},
// expert[e].{weight,bias} for e ascending, router[t].{weight,bias} for t
// ascending, head.{weight,bias}.
inline std::vector<ParameterBlock> parameter_blocks(Parameters& p) {
  std::vector<ParameterBlock> blocks;
  blocks.push_back({"encoder.hidden.weight", p.encoder.hidden_weight.values()});
  blocks.push_back({"encoder.hidden.bias", p.encoder.hidden_bias});
  blocks.push_back({"encoder.out.weight", p.encoder.out_weight.values()});
  blocks.push_back({"encoder.out.bias", p.encoder.out_bias});
  for (std::size_t e = 0; e < p.experts.size(); ++e) {
    const std::string prefix = "expert[" + std::to_string(e) + "]";
    blocks.push_back({prefix + ".weight", p.experts.weights[e].values()});
    blocks.push_back({prefix + ".bias", p.experts.biases[e]});
  }
  for (std::size_t t = 0; t < p.routers.num_tasks(); ++t) {
    const std::string prefix = "router[" + std::to_string(t) + "]";
    blocks.push_back({prefix + ".weight", p.routers.weights[t].values()});
    blocks.push_back({prefix + ".bias", p.routers.biases[t]});
  }
  blocks.push_back({"head.weight", p.heads.weights.values()});
  blocks.push_back({"head.bias", p.heads.biases});
  return blocks;
}

inline std::size_t parameter_count(Parameters& p) {
  std::size_t n = 0;
  for (const auto& b : parameter_blocks(p)) n += b.values.size();
  return n;
}

/// Parameters of the expert pool only (weights and biases).
inline std::uint64_t expert_parameter_count(const ModelDims& d,
                                            std::size_t experts) {
  return static_cast<std::uint64_t>(experts) *
         (d.expert_in * d.expert_out + d.expert_out);
}

}  // namespace smes
