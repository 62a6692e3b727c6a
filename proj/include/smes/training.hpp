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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "smes/data.hpp"
#include "smes/error.hpp"
#include "smes/forward.hpp"
#include "smes/load_balance.hpp"
#include "smes/matrix.hpp"
#include "smes/metrics.hpp"
#include "smes/model.hpp"
#include "smes/text.hpp"

namespace smes {

// Predictions are clamped to [kProbClamp, 1 - kProbClamp] before the log. A
// clamped prediction contributes no gradient.
inline constexpr double kProbClamp = 1e-7;

/// Sum over tasks of lambda_t * BCE, averaged over the batch.
inline double task_loss(const Matrix& predictions, const Matrix& labels,
                        std::span<const double> loss_weights) {
  check(predictions.rows() == labels.rows() && predictions.cols() == labels.cols(),
        ErrorCode::kShapeMismatch, "task loss: predictions " +
                                       predictions.shape_string() + " vs labels " +
                                       labels.shape_string());
  check(loss_weights.size() == predictions.cols(), ErrorCode::kShapeMismatch,
        "task loss: need one weight per task");
  check(predictions.rows() > 0, ErrorCode::kInvalidArgument, "task loss of an empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < predictions.rows(); ++b) {
    for (std::size_t t = 0; t < predictions.cols(); ++t) {
      const double p = predictions(b, t);
      const double y = labels(b, t);
      check(std::isfinite(p), ErrorCode::kNumeric,
            "non-finite prediction at (" + std::to_string(b) + ", " + std::to_string(t) + ")");
      if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorCode::kInvalidArgument,
             "prediction " + text::format_real(p) + " at (" + std::to_string(b) +
                 ", " + std::to_string(t) + ") is outside [0, 1]");
      }
      check(y == 0.0 || y == 1.0, ErrorCode::kInvalidArgument, "labels must be 0 or 1");
      if (loss_weights[t] == 0.0) continue;
      const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      total -= loss_weights[t] * (y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    }
  }
  return total / static_cast<double>(predictions.rows());
}

inline double total_loss(double task, double l_lb, double beta) {
  return task + beta * l_lb;
}

struct LossParts {
  double task = 0.0;
  double lb = 0.0;
  double total = 0.0;
};

using Gradients = Parameters;

struct BackwardResult {
  Gradients grads;
  LossParts loss;
  std::optional<LoadStats> stats;  // sparse path only
};

namespace detail {

// d loss / d head logit, honouring the clamp.
inline Matrix head_logit_grads(const Matrix& predictions, const Matrix& labels,
                               std::span<const double> loss_weights) {
  Matrix g(predictions.rows(), predictions.cols());
  const double inv_b = 1.0 / static_cast<double>(predictions.rows());
  for (std::size_t b = 0; b < g.rows(); ++b) {
    for (std::size_t t = 0; t < g.cols(); ++t) {
      const double p = predictions(b, t);
      if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
      g(b, t) = loss_weights[t] * (p - labels(b, t)) * inv_b;
    }
  }
  return g;
}

// Returns d loss / d task representation, one B x d_out matrix per task.
inline std::vector<Matrix> backprop_heads(const TaskHeads& heads,
                                          const std::vector<Matrix>& task_reps,
                                          const Matrix& dlogits, TaskHeads& grad) {
  std::vector<Matrix> dreps;
  for (std::size_t t = 0; t < task_reps.size(); ++t) {
    const auto w = heads.weights.row(t);
    auto gw = grad.weights.row(t);
    Matrix d(task_reps[t].rows(), task_reps[t].cols());
    for (std::size_t b = 0; b < d.rows(); ++b) {
      const double g = dlogits(b, t);
      grad.biases[t] += g;
      const auto h = task_reps[t].row(b);
      auto dst = d.row(b);
      for (std::size_t j = 0; j < dst.size(); ++j) {
        gw[j] += g * h[j];
        dst[j] = g * w[j];
      }
    }
    dreps.push_back(std::move(d));
  }
  return dreps;
}

inline void backprop_encoder(const Encoder& enc, const EncoderCache& cache,
                             const Matrix& inputs, const Matrix& dreps,
                             Encoder& grad) {
  const Matrix gw2 = matmul_transpose_a(cache.hidden, dreps);
  for (std::size_t i = 0; i < gw2.size(); ++i) {
    grad.out_weight.values()[i] += gw2.values()[i];
  }
  const auto gb2 = column_sums(dreps);
  for (std::size_t j = 0; j < gb2.size(); ++j) grad.out_bias[j] += gb2[j];

  Matrix dhidden = matmul_transpose_b(dreps, enc.out_weight);
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (cache.hidden_pre.values()[i] <= 0.0) dhidden.values()[i] = 0.0;
  }
  const Matrix gw1 = matmul_transpose_a(inputs, dhidden);
  for (std::size_t i = 0; i < gw1.size(); ++i) {
    grad.hidden_weight.values()[i] += gw1.values()[i];
  }
  const auto gb1 = column_sums(dhidden);
  for (std::size_t j = 0; j < gb1.size(); ++j) grad.hidden_bias[j] += gb1[j];
}

// Backprop of dz through g_t(h) = h G_t + c_t for one instance.
inline void backprop_router(const RouterBank& routers, std::size_t t,
                            std::span<const double> h, std::span<const double> dz,
                            RouterBank& grad, std::span<double> dh) {
  const Matrix& w = routers.weights[t];
  Matrix& gw = grad.weights[t];
  for (std::size_t e = 0; e < dz.size(); ++e) grad.biases[t][e] += dz[e];
  for (std::size_t k = 0; k < h.size(); ++k) {
    auto grow = gw.row(k);
    const auto wrow = w.row(k);
    double acc = 0.0;
    for (std::size_t e = 0; e < dz.size(); ++e) {
      grow[e] += h[k] * dz[e];
      acc += wrow[e] * dz[e];
    }
    dh[k] += acc;
  }
}

}  // namespace detail

/// Loss of a cached sparse forward pass.
inline LossParts sparse_loss(const SparseForward& f, const MoeModel& model,
                             const Matrix& labels,
                             MassSource source = MassSource::kSparseWeights) {
  LossParts l;
  l.task = task_loss(f.predictions, labels, model.loss_weights);
  l.lb = compute_load_stats(f.decisions, source).l_lb;
  l.total = total_loss(l.task, l.lb, model.beta);
  return l;
}

/// Exact gradients of task loss + beta * l_lb for the sparse path, with the
/// routing selections of `f` held fixed.
inline BackwardResult backward_sparse(const SparseForward& f, const MoeModel& model,
                                      const Matrix& labels,
                                      MassSource source = MassSource::kSparseWeights) {
  check(f.valid(), ErrorCode::kInconsistent,
        "backward called without a cached sparse forward pass");
  check(labels.rows() == f.inputs.rows(), ErrorCode::kShapeMismatch,
        "backward: labels " + labels.shape_string() + " for batch of " +
            std::to_string(f.inputs.rows()));
  const auto& p = model.params;
  const std::size_t batch = f.inputs.rows();
  const std::size_t tasks = model.dims.num_tasks;
  const std::size_t experts = model.dims.num_experts;

  BackwardResult r;
  r.grads = zeros_like(p);
  r.stats = compute_load_stats(f.decisions, source);
  r.loss.task = task_loss(f.predictions, labels, model.loss_weights);
  r.loss.lb = r.stats->l_lb;
  r.loss.total = total_loss(r.loss.task, r.loss.lb, model.beta);

  const Matrix dlogits = detail::head_logit_grads(f.predictions, labels, model.loss_weights);
  const auto dtask = detail::backprop_heads(p.heads, f.task_reps, dlogits, r.grads.heads);

  std::vector<Matrix> lb_grads;
  if (model.beta != 0.0) lb_grads = lb_loss_gradient(*r.stats, f.decisions, f.logits);

  Matrix dpacked_out(f.expert_out.rows(), f.expert_out.cols());
  Matrix dreps(batch, model.dims.expert_in);
  std::vector<double> dweight(experts);
  std::vector<double> dz(experts);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& d = f.decisions[b];
    for (std::size_t t = 0; t < tasks; ++t) {
      const auto dh = dtask[t].row(b);
      const auto w = d.weights.row(t);
      std::fill(dz.begin(), dz.end(), 0.0);
      double mean = 0.0;
      for (ExpertIndex e : d.active[t]) {
        const std::size_t row = f.plan.row(b, e);
        const auto o = f.expert_out.row(row);
        auto dout = dpacked_out.row(row);
        double acc = 0.0;
        for (std::size_t j = 0; j < dh.size(); ++j) {
          dout[j] += w[e] * dh[j];
          acc += dh[j] * o[j];
        }
        dweight[e] = acc;
        mean += w[e] * acc;
      }
      // Renormalized softmax over K_t.
      for (ExpertIndex e : d.active[t]) dz[e] = w[e] * (dweight[e] - mean);
      if (!lb_grads.empty()) {
        const auto g = lb_grads[b].row(t);
        for (std::size_t e = 0; e < experts; ++e) dz[e] += model.beta * g[e];
      }
      detail::backprop_router(p.routers, t, f.encoder.reps.row(b), dz,
                              r.grads.routers, dreps.row(b));
    }
  }

  // Experts: only packed rows contribute, so an expert outside every K_t keeps
  // a zero gradient.
  const auto& offsets = f.plan.segment_offsets();
  const auto& gather = f.plan.gather_rows();
  for (std::size_t e = 0; e < experts; ++e) {
    const Matrix& w = p.experts.weights[e];
    Matrix& gw = r.grads.experts.weights[e];
    auto& gb = r.grads.experts.biases[e];
    for (std::size_t row = offsets[e]; row < offsets[e + 1]; ++row) {
      const auto x = f.packed_inputs.row(row);
      const auto pre = f.expert_pre.row(row);
      const auto dout = dpacked_out.row(row);
      auto dx = dreps.row(gather[row].instance);
      for (std::size_t j = 0; j < dout.size(); ++j) {
        const double g = dout[j] * activation_derivative(p.experts.activation, pre[j]);
        if (g == 0.0) continue;
        gb[j] += g;
        for (std::size_t k = 0; k < x.size(); ++k) {
          gw(k, j) += x[k] * g;
          dx[k] += w(k, j) * g;
        }
      }
    }
  }

  detail::backprop_encoder(p.encoder, f.encoder, f.inputs, dreps, r.grads.encoder);
  return r;
}

/// Dense MMoE loss. Every router selects all E experts, so f̄ is 1 everywhere
/// and l_lb reduces to the total mass.
inline LossParts dense_loss(const DenseForward& f, const MoeModel& model,
                            const Matrix& labels) {
  LossParts l;
  l.task = task_loss(f.predictions, labels, model.loss_weights);
  double mass = 0.0;
  for (const auto& probs : f.probs) {
    for (double v : probs.values()) mass += v;
  }
  l.lb = mass / static_cast<double>(f.inputs.rows() * f.probs.size());
  l.total = total_loss(l.task, l.lb, model.beta);
  return l;
}

/// Dense-path gradients. The regularizer is constant here (its gradient
/// through the full softmax vanishes), so only the task loss contributes.
inline BackwardResult backward_dense(const DenseForward& f, const MoeModel& model,
                                     const Matrix& labels) {
  check(f.valid(), ErrorCode::kInconsistent,
        "backward called without a cached dense forward pass");
  const auto& p = model.params;
  const std::size_t batch = f.inputs.rows();
  const std::size_t tasks = model.dims.num_tasks;
  const std::size_t experts = model.dims.num_experts;

  BackwardResult r;
  r.grads = zeros_like(p);
  r.loss = dense_loss(f, model, labels);

  const Matrix dlogits = detail::head_logit_grads(f.predictions, labels, model.loss_weights);
  const auto dtask = detail::backprop_heads(p.heads, f.task_reps, dlogits, r.grads.heads);

  std::vector<Matrix> dexpert_out(experts, Matrix(batch, model.dims.expert_out));
  Matrix dreps(batch, model.dims.expert_in);
  for (std::size_t t = 0; t < tasks; ++t) {
    Matrix dz(batch, experts);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto dh = dtask[t].row(b);
      std::vector<double> dweight(experts);
      double mean = 0.0;
      for (std::size_t e = 0; e < experts; ++e) {
        const double w = f.probs[t](b, e);
        const auto o = f.expert_out[e].row(b);
        auto dout = dexpert_out[e].row(b);
        double acc = 0.0;
        for (std::size_t j = 0; j < dh.size(); ++j) {
          dout[j] += w * dh[j];
          acc += dh[j] * o[j];
        }
        dweight[e] = acc;
        mean += w * acc;
      }
      for (std::size_t e = 0; e < experts; ++e) {
        dz(b, e) = f.probs[t](b, e) * (dweight[e] - mean);
      }
    }
    const Matrix gw = matmul_transpose_a(f.encoder.reps, dz);
    for (std::size_t i = 0; i < gw.size(); ++i) {
      r.grads.routers.weights[t].values()[i] += gw.values()[i];
    }
    const auto gb = column_sums(dz);
    for (std::size_t e = 0; e < experts; ++e) r.grads.routers.biases[t][e] += gb[e];
    const Matrix dh = matmul_transpose_b(dz, p.routers.weights[t]);
    for (std::size_t i = 0; i < dh.size(); ++i) dreps.values()[i] += dh.values()[i];
  }

  for (std::size_t e = 0; e < experts; ++e) {
    Matrix dpre = dexpert_out[e];
    for (std::size_t i = 0; i < dpre.size(); ++i) {
      dpre.values()[i] *= activation_derivative(p.experts.activation,
                                                f.expert_pre[e].values()[i]);
    }
    const Matrix gw = matmul_transpose_a(f.encoder.reps, dpre);
    for (std::size_t i = 0; i < gw.size(); ++i) {
      r.grads.experts.weights[e].values()[i] += gw.values()[i];
    }
    const auto gb = column_sums(dpre);
    for (std::size_t j = 0; j < gb.size(); ++j) r.grads.experts.biases[e][j] += gb[j];
    const Matrix dh = matmul_transpose_b(dpre, p.experts.weights[e]);
    for (std::size_t i = 0; i < dh.size(); ++i) dreps.values()[i] += dh.values()[i];
  }

  detail::backprop_encoder(p.encoder, f.encoder, f.inputs, dreps, r.grads.encoder);
  return r;
}

enum class Architecture { kSparse, kDense };

struct GradCheckEntry {
  std::string block;
  std::size_t size = 0;
  double max_abs_error = 0.0;
  // max |analytic - numeric| over the block divided by the larger of the two
  // blocks' max magnitudes (floored at 1e-8); 0 when both are exactly zero.
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double worst_relative() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_error);
    return w;
  }
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradCheckEntry& e) { return e.passed; });
  }
};

/// Central differences of the total loss with routing selections frozen at
/// the unperturbed forward pass, compared block by block with backward().
inline GradCheckReport grad_check(const MoeModel& model, const Matrix& inputs,
                                  const Matrix& labels, double tolerance = 1e-4,
                                  Architecture arch = Architecture::kSparse,
                                  MassSource source = MassSource::kSparseWeights,
                                  double step = 1e-5) {
  MoeModel probe = model;
  std::vector<RoutingDecision> frozen;
  Gradients analytic;
  if (arch == Architecture::kSparse) {
    const auto f = forward_sparse(inputs, probe);
    frozen = f.decisions;
    analytic = backward_sparse(f, probe, labels, source).grads;
  } else {
    analytic = backward_dense(forward_dense(inputs, probe), probe, labels).grads;
  }
  auto loss_at = [&]() {
    if (arch == Architecture::kSparse) {
      return sparse_loss(forward_sparse(inputs, probe, &frozen), probe, labels, source).total;
    }
    return dense_loss(forward_dense(inputs, probe), probe, labels).total;
  };

  GradCheckReport report;
  auto blocks = parameter_blocks(probe.params);
  auto grad_blocks = parameter_blocks(analytic);
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    GradCheckEntry entry;
    entry.block = blocks[bi].name;
    entry.size = blocks[bi].values.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < blocks[bi].values.size(); ++i) {
      double& param = blocks[bi].values[i];
      const double saved = param;
      param = saved + step;
      const double up = loss_at();
      param = saved - step;
      const double down = loss_at();
      param = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grad_blocks[bi].values[i];
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    if (entry.max_abs_error > 0.0) {
      entry.max_rel_error = entry.max_abs_error / std::max(scale, 1e-8);
    }
    entry.passed = entry.max_rel_error < tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain SGD, or Adam with bias correction.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, Parameters& shape) : cfg_(cfg) {
    check(cfg.learning_rate > 0.0, ErrorCode::kInvalidArgument,
          "learning rate must be positive");
    if (cfg_.kind == OptimizerKind::kAdam) {
      for (const auto& b : parameter_blocks(shape)) {
        first_.emplace_back(b.values.size(), 0.0);
        second_.emplace_back(b.values.size(), 0.0);
      }
    }
  }

  void step(Parameters& params, Gradients& grads) {
    auto pb = parameter_blocks(params);
    auto gb = parameter_blocks(grads);
    check(pb.size() == gb.size(), ErrorCode::kInconsistent,
          "optimizer: gradient blocks do not match parameters");
    ++steps_;
    const double lr = cfg_.learning_rate;
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < pb.size(); ++i) {
        for (std::size_t j = 0; j < pb[i].values.size(); ++j) {
          pb[i].values[j] -= lr * gb[i].values[j];
        }
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < pb.size(); ++i) {
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < pb[i].values.size(); ++j) {
        const double g = gb[i].values[j];
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
        pb[i].values[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

struct TrainConfig {
  Architecture architecture = Architecture::kSparse;
  OptimizerConfig optimizer;
  std::size_t batch_size = 256;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;  // shuffling
  MassSource lb_mass = MassSource::kSparseWeights;
  std::size_t workers = 1;

  void validate() const {
    check(batch_size > 0, ErrorCode::kInvalidArgument, "batch size must be positive");
    check(epochs > 0, ErrorCode::kInvalidArgument, "epoch count must be positive");
    check(optimizer.learning_rate > 0.0, ErrorCode::kInvalidArgument,
          "learning rate must be positive");
  }
};

struct StepResult {
  LossParts loss;
  std::size_t union_total = 0;  // sum over instances of |U|
};

/// Owns a model and its optimizer state; one call to step() is one
/// forward/backward/update on a batch.
class Trainer {
 public:
  Trainer(MoeModel model, TrainConfig cfg)
      : model_(std::move(model)), cfg_(cfg), optimizer_(cfg.optimizer, model_.params) {
    cfg_.validate();
    model_.validate();
  }

  StepResult step(const Matrix& inputs, const Matrix& labels) {
    StepResult s;
    BackwardResult r;
    if (cfg_.architecture == Architecture::kSparse) {
      const auto f = forward_sparse(inputs, model_, nullptr, cfg_.workers);
      r = backward_sparse(f, model_, labels, cfg_.lb_mass);
      s.union_total = f.plan.total_activations();
    } else {
      const auto f = forward_dense(inputs, model_);
      r = backward_dense(f, model_, labels);
      s.union_total = inputs.rows() * model_.dims.num_experts;
    }
    s.loss = r.loss;
    if (!std::isfinite(s.loss.total)) {
      fail(ErrorCode::kNumeric,
           "non-finite loss after " + std::to_string(steps_) + " steps: task=" +
               text::format_real(s.loss.task) + " lb=" + text::format_real(s.loss.lb));
    }
    optimizer_.step(model_.params, r.grads);
    ++steps_;
    return s;
  }

  const MoeModel& model() const noexcept { return model_; }
  MoeModel& model() noexcept { return model_; }
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  MoeModel model_;
  TrainConfig cfg_;
  Optimizer optimizer_;
  std::uint64_t steps_ = 0;
};

/// Predictions and routing load of a model over a whole log.
struct Evaluation {
  Matrix predictions;                // N x T
  std::vector<std::uint64_t> loads;  // summed c_e over the log
  double mean_union = 0.0;
  SkewDiagnostics skew;
  std::vector<double> auc;   // per task, NaN when undefined
  std::vector<double> gauc;  // per task, NaN when undefined
};

inline Evaluation evaluate(const MoeModel& model, Architecture arch,
                           const InteractionLog& log, std::size_t batch_size = 1024) {
  check(log.size() > 0, ErrorCode::kInvalidArgument, "evaluation on an empty log");
  Evaluation ev;
  const std::size_t tasks = model.dims.num_tasks;
  ev.predictions = Matrix(log.size(), tasks);
  ev.loads.assign(model.dims.num_experts, 0);
  std::uint64_t union_total = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < log.size(); start += batch_size) {
    const std::size_t end = std::min(log.size(), start + batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Batch batch = make_batch(log, rows);
    Matrix preds;
    if (arch == Architecture::kSparse) {
      const auto f = forward_sparse(batch.features, model);
      preds = f.predictions;
      const auto stats = compute_load_stats(f.decisions);
      for (std::size_t e = 0; e < ev.loads.size(); ++e) ev.loads[e] += stats.counts[e];
      union_total += f.plan.total_activations();
    } else {
      const auto f = forward_dense(batch.features, model);
      preds = f.predictions;
      for (auto& c : ev.loads) c += (end - start) * tasks;
      union_total += (end - start) * model.dims.num_experts;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(preds.row(i).begin(), preds.row(i).end(), ev.predictions.row(start + i).begin());
    }
  }
  ev.mean_union = static_cast<double>(union_total) / static_cast<double>(log.size());
  ev.skew = skew_diagnostics(ev.loads);
  const auto users = user_ids(log);
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<double> scores(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) scores[i] = ev.predictions(i, t);
    const auto labels = task_labels(log, t);
    try {
      ev.auc.push_back(auc(scores, labels));
    } catch (const Error&) {
      ev.auc.push_back(std::nan(""));
    }
    try {
      ev.gauc.push_back(gauc(scores, labels, users));
    } catch (const Error&) {
      ev.gauc.push_back(std::nan(""));
    }
  }
  return ev;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_task = 0.0;  // batch-size weighted mean over the epoch
  double l_lb = 0.0;
  double loss_total = 0.0;
  double mean_union = 0.0;  // evaluation pass
  SkewDiagnostics skew;     // evaluation pass
  std::vector<double> auc;
  std::vector<double> gauc;
};

struct TrainResult {
  MoeModel model;
  std::vector<EpochMetrics> log;
};

/// Mini-batch training with a seeded shuffle per epoch. Metrics after each
/// epoch are computed on `valid` when it is non-empty, otherwise on `train`.
inline TrainResult train(const InteractionLog& train_log, const InteractionLog& valid,
                         const ModelSpec& spec, const TrainConfig& cfg) {
  check(train_log.size() > 0, ErrorCode::kInvalidArgument, "training log is empty");
  check(train_log.dim == spec.dims.input_dim &&
            train_log.num_tasks() == spec.dims.num_tasks,
        ErrorCode::kShapeMismatch, "training log does not match model dims");
  Trainer trainer(make_model(spec), cfg);
  const InteractionLog& eval_log = valid.size() > 0 ? valid : train_log;

  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Batch batch = make_batch(
          train_log, std::span<const std::size_t>(order).subspan(start, end - start));
      const auto s = trainer.step(batch.features, batch.labels);
      const double w = static_cast<double>(end - start);
      m.loss_task += w * s.loss.task;
      m.l_lb += w * s.loss.lb;
      m.loss_total += w * s.loss.total;
    }
    const double n = static_cast<double>(order.size());
    m.loss_task /= n;
    m.l_lb /= n;
    m.loss_total /= n;
    const auto ev = evaluate(trainer.model(), cfg.architecture, eval_log);
    m.mean_union = ev.mean_union;
    m.skew = ev.skew;
    m.auc = ev.auc;
    m.gauc = ev.gauc;
    result.log.push_back(std::move(m));
  }
  result.model = trainer.model();
  return result;
}

/// CSV with one row per epoch: epoch, loss_task, l_lb, loss_total,
/// mean_union, load_cv, load_max_mean, dead_fraction, then auc_<task> and
/// gauc_<task> for each task.
inline std::string format_metrics_csv(const std::vector<EpochMetrics>& log,
                                      const std::vector<std::string>& task_names) {
  std::string out =
      "epoch,loss_task,l_lb,loss_total,mean_union,load_cv,load_max_mean,dead_fraction";
  for (const auto& t : task_names) out += ",auc_" + t;
  for (const auto& t : task_names) out += ",gauc_" + t;
  out += '\n';
  using text::format_real;
  for (const auto& m : log) {
    out += std::to_string(m.epoch) + ',' + format_real(m.loss_task) + ',' +
           format_real(m.l_lb) + ',' + format_real(m.loss_total) + ',' +
           format_real(m.mean_union) + ',' + format_real(m.skew.coefficient_of_variation) +
           ',' + format_real(m.skew.max_mean_ratio) + ',' + format_real(m.skew.dead_fraction);
    for (double v : m.auc) out += ',' + format_real(v);
    for (double v : m.gauc) out += ',' + format_real(v);
    out += '\n';
  }
  return out;
}

}  // namespace smes
