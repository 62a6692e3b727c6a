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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "smes/checkpoint.hpp"
#include "smes/config.hpp"
#include "smes/data.hpp"
#include "smes/error.hpp"
#include "smes/forward.hpp"
#include "smes/load_balance.hpp"
#include "smes/metrics.hpp"
#include "smes/model.hpp"
#include "smes/routing.hpp"
#include "smes/text.hpp"
#include "smes/training.hpp"
#include "smes/workspace.hpp"

// Experiment drivers behind the command-line subcommands. Each returns plain
// rows plus a CSV formatter so tests can check the numbers directly.
namespace smes::bench {

/// Resolves the routing budget for E experts. If `sparsity_ratio` is set,
/// K = round(ratio * E) and K_s = round(K * shared_fraction); otherwise
/// `k_shared` and `k_adaptive` are used as given.
inline RoutingBudget budget_from_config(const Config& cfg, std::size_t experts) {
  RoutingBudget budget;
  if (cfg.has("sparsity_ratio")) {
    const double ratio = cfg.get_double("sparsity_ratio", 0.0);
    if (!(ratio > 0.0 && ratio <= 1.0)) cfg.invalid("sparsity_ratio", "must lie in (0, 1]");
    const double shared_fraction = cfg.get_double("shared_fraction", 0.5);
    if (shared_fraction < 0.0 || shared_fraction > 1.0) {
      cfg.invalid("shared_fraction", "must lie in [0, 1]");
    }
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(experts))));
    budget.shared = static_cast<std::size_t>(std::llround(shared_fraction * static_cast<double>(k)));
    budget.adaptive = k - budget.shared;
  } else {
    budget.shared = cfg.get_size("k_shared", 2);
    budget.adaptive = cfg.get_size("k_adaptive", 2);
  }
  try {
    budget.validate(experts);
  } catch (const Error& e) {
    cfg.invalid(cfg.has("sparsity_ratio") ? "sparsity_ratio" : "k_shared", e.what());
  }
  return budget;
}

/// Model keys: encoder_hidden, expert_in, expert_out, experts, k_shared,
/// k_adaptive (or sparsity_ratio, shared_fraction), expert_activation,
/// loss_weights, task_weights, beta, router_init_scale, seed.
inline ModelSpec model_spec_from_config(const Config& cfg, std::size_t input_dim,
                                        std::size_t tasks,
                                        std::size_t experts_override = 0) {
  ModelSpec spec;
  spec.dims.input_dim = input_dim;
  spec.dims.num_tasks = tasks;
  spec.dims.encoder_hidden = cfg.get_size("encoder_hidden", 32);
  spec.dims.expert_in = cfg.get_size("expert_in", 16);
  spec.dims.expert_out = cfg.get_size("expert_out", 8);
  spec.dims.num_experts =
      experts_override > 0 ? experts_override : cfg.get_size("experts", 16);
  if (spec.dims.encoder_hidden == 0) cfg.invalid("encoder_hidden", "must be positive");
  if (spec.dims.expert_in == 0) cfg.invalid("expert_in", "must be positive");
  if (spec.dims.expert_out == 0) cfg.invalid("expert_out", "must be positive");
  if (spec.dims.num_experts == 0) cfg.invalid("experts", "must be positive");
  spec.budget = budget_from_config(cfg, spec.dims.num_experts);

  const auto act = cfg.get_string("expert_activation", "relu");
  if (act == "relu") {
    spec.expert_activation = Activation::kRelu;
  } else if (act == "identity") {
    spec.expert_activation = Activation::kIdentity;
  } else {
    cfg.invalid("expert_activation", "expected relu or identity, got '" + act + "'");
  }
  spec.loss_weights = cfg.get_doubles("loss_weights", {});
  if (!spec.loss_weights.empty() && spec.loss_weights.size() != tasks) {
    cfg.invalid("loss_weights", "need one weight per task");
  }
  for (double l : spec.loss_weights) {
    if (l < 0.0) cfg.invalid("loss_weights", "weights must be >= 0");
  }
  spec.task_weights = cfg.get_doubles("task_weights", {});
  if (!spec.task_weights.empty() && spec.task_weights.size() != tasks) {
    cfg.invalid("task_weights", "need one weight per task");
  }
  for (double w : spec.task_weights) {
    if (w < 0.0) cfg.invalid("task_weights", "weights must be >= 0");
  }
  spec.beta = cfg.get_double("beta", 0.01);
  if (spec.beta < 0.0) cfg.invalid("beta", "must be >= 0");
  spec.router_init_scale = cfg.get_double("router_init_scale", 0.01);
  spec.seed = cfg.get_u64("seed", 0);
  return spec;
}

/// Training keys: architecture (sparse|dense), optimizer (sgd|adam),
/// learning_rate, batch_size, epochs, lb_mass (sparse|full), workers, seed.
inline TrainConfig train_config_from_config(const Config& cfg) {
  TrainConfig tc;
  const auto arch = cfg.get_string("architecture", "sparse");
  if (arch == "sparse") {
    tc.architecture = Architecture::kSparse;
  } else if (arch == "dense") {
    tc.architecture = Architecture::kDense;
  } else {
    cfg.invalid("architecture", "expected sparse or dense, got '" + arch + "'");
  }
  const auto opt = cfg.get_string("optimizer", "sgd");
  if (opt == "sgd") {
    tc.optimizer.kind = OptimizerKind::kSgd;
  } else if (opt == "adam") {
    tc.optimizer.kind = OptimizerKind::kAdam;
  } else {
    cfg.invalid("optimizer", "expected sgd or adam, got '" + opt + "'");
  }
  tc.optimizer.learning_rate = cfg.get_double("learning_rate", 0.05);
  if (!(tc.optimizer.learning_rate > 0.0)) cfg.invalid("learning_rate", "must be positive");
  tc.batch_size = cfg.get_size("batch_size", 256);
  if (tc.batch_size == 0) cfg.invalid("batch_size", "must be positive");
  tc.epochs = cfg.get_size("epochs", 5);
  if (tc.epochs == 0) cfg.invalid("epochs", "must be positive");
  const auto mass = cfg.get_string("lb_mass", "sparse");
  if (mass == "sparse") {
    tc.lb_mass = MassSource::kSparseWeights;
  } else if (mass == "full") {
    tc.lb_mass = MassSource::kFullSoftmax;
  } else {
    cfg.invalid("lb_mass", "expected sparse or full, got '" + mass + "'");
  }
  tc.workers = std::max<std::size_t>(1, cfg.get_size("workers", 1));
  tc.seed = cfg.get_u64("seed", 0);
  return tc;
}

// ---------------------------------------------------------------------------
// Dense vs sparse cost comparison.

struct BenchRow {
  std::size_t experts = 0;
  std::size_t k_shared = 0;
  std::size_t k_adaptive = 0;
  std::size_t tasks = 0;
  std::size_t instances = 0;
  std::uint64_t expert_params_total = 0;
  std::uint64_t expert_params_active = 0;  // K experts, as seen by one task
  std::uint64_t dense_expert_flops = 0;
  std::uint64_t sparse_expert_flops = 0;
  std::uint64_t sparse_total_flops = 0;
  std::uint64_t dense_total_flops = 0;
  std::size_t min_union = 0;
  double mean_union = 0.0;
  std::size_t max_union = 0;
  std::size_t union_bound = 0;
  double l_lb = 0.0;
  double load_cv = 0.0;
  double dead_fraction = 0.0;
  double dense_ms = std::numeric_limits<double>::quiet_NaN();
  double sparse_ms = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> auc;
  std::vector<double> gauc;

  double active_ratio() const {
    return static_cast<double>(expert_params_active) /
           static_cast<double>(expert_params_total);
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Fn>
double median_ms(Fn&& fn, std::size_t reps) {
  fn();  // warmup
  std::vector<double> times;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return median(times);
}

inline std::vector<Batch> slice_batches(const InteractionLog& log, std::size_t batch_size,
                                        std::size_t batches) {
  std::vector<Batch> out;
  std::vector<std::size_t> rows(batch_size);
  for (std::size_t i = 0; i < batches; ++i) {
    for (std::size_t j = 0; j < batch_size; ++j) {
      rows[j] = (i * batch_size + j) % log.size();
    }
    out.push_back(make_batch(log, rows));
  }
  return out;
}

}  // namespace detail

/// Bench keys, on top of the generator and model keys: experts_sweep,
/// batch_size, batches, timing (false), timing_reps (>= 5), checkpoint.
/// With `checkpoint` set, that model is benchmarked instead of a sweep.
inline std::vector<BenchRow> run_bench(const Config& cfg) {
  SynthSpec synth = synth_spec_from_config(cfg);
  const std::size_t batch_size = cfg.get_size("batch_size", 64);
  const std::size_t batches = cfg.get_size("batches", 4);
  if (batch_size == 0) cfg.invalid("batch_size", "must be positive");
  if (batches == 0) cfg.invalid("batches", "must be positive");
  const bool timing = cfg.get_bool("timing", false);
  const std::size_t reps = cfg.get_size("timing_reps", 5);
  if (timing && reps < 5) cfg.invalid("timing_reps", "use at least 5 repetitions");

  std::vector<MoeModel> models;
  if (cfg.has("checkpoint")) {
    models.push_back(load_checkpoint(cfg.get_string("checkpoint", "")));
    synth.dim = models.back().dims.input_dim;
    if (synth.num_tasks() != models.back().dims.num_tasks) {
      cfg.invalid("positive_rates", "task count differs from the checkpoint");
    }
  } else {
    const auto sweep = cfg.get_sizes("experts_sweep", {16, 32, 64, 128, 256});
    if (sweep.empty()) cfg.invalid("experts_sweep", "needs at least one value");
    for (std::size_t e : sweep) {
      models.push_back(make_model(model_spec_from_config(cfg, synth.dim, synth.num_tasks(), e)));
    }
  }
  const InteractionLog log = generate(synth);
  const auto data = detail::slice_batches(log, batch_size, batches);
  std::vector<std::string> users;
  for (std::size_t i = 0; i < batches * batch_size; ++i) {
    users.push_back(log.records[i % log.size()].user_id);
  }

  std::vector<BenchRow> rows;
  for (const auto& model : models) {
    const auto& d = model.dims;
    model.budget.validate(d.num_experts);
    BenchRow row;
    row.experts = d.num_experts;
    row.k_shared = model.budget.shared;
    row.k_adaptive = model.budget.adaptive;
    row.tasks = d.num_tasks;
    row.expert_params_total = expert_parameter_count(d, d.num_experts);
    row.expert_params_active = expert_parameter_count(d, model.budget.total());
    row.union_bound = model.budget.union_bound(d.num_experts, d.num_tasks);
    row.min_union = std::numeric_limits<std::size_t>::max();

    std::vector<RoutingDecision> all_decisions;
    std::vector<std::vector<double>> scores(d.num_tasks);
    std::vector<std::vector<int>> labels(d.num_tasks);
    std::size_t union_sum = 0;
    for (const auto& batch : data) {
      const auto sparse = forward_sparse(batch.features, model);
      const auto dense = forward_dense(batch.features, model);
      row.instances += batch.features.rows();
      row.sparse_expert_flops += sparse.cost.expert.multiply_adds;
      row.dense_expert_flops += dense.cost.expert.multiply_adds;
      row.sparse_total_flops += sparse.cost.total();
      row.dense_total_flops += dense.cost.total();
      for (const auto& dec : sparse.decisions) {
        const std::size_t u = dec.union_set.size();
        row.min_union = std::min(row.min_union, u);
        row.max_union = std::max(row.max_union, u);
        union_sum += u;
        all_decisions.push_back(dec);
      }
      for (std::size_t t = 0; t < d.num_tasks; ++t) {
        for (std::size_t b = 0; b < batch.features.rows(); ++b) {
          scores[t].push_back(sparse.predictions(b, t));
          labels[t].push_back(static_cast<int>(batch.labels(b, t)));
        }
      }
    }
    row.mean_union = static_cast<double>(union_sum) / static_cast<double>(row.instances);
    const auto stats = compute_load_stats(all_decisions);
    row.l_lb = stats.l_lb;
    const auto skew = skew_diagnostics(stats);
    row.load_cv = skew.coefficient_of_variation;
    row.dead_fraction = skew.dead_fraction;
    for (std::size_t t = 0; t < d.num_tasks; ++t) {
      try {
        row.auc.push_back(auc(scores[t], labels[t]));
      } catch (const Error&) {
        row.auc.push_back(std::nan(""));
      }
      try {
        row.gauc.push_back(gauc(scores[t], labels[t], users));
      } catch (const Error&) {
        row.gauc.push_back(std::nan(""));
      }
    }
    if (timing) {
      row.dense_ms = detail::median_ms(
          [&] {
            for (const auto& b : data) (void)forward_dense(b.features, model);
          },
          reps);
      row.sparse_ms = detail::median_ms(
          [&] {
            for (const auto& b : data) (void)forward_sparse(b.features, model);
          },
          reps);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Columns: experts, k_shared, k_adaptive, tasks, instances,
/// expert_params_total, expert_params_active, active_ratio,
/// dense_expert_flops, sparse_expert_flops, flop_ratio, dense_total_flops,
/// sparse_total_flops, min_union, mean_union, max_union, union_bound, l_lb,
/// load_cv, dead_fraction, dense_ms, sparse_ms, auc_<t>..., gauc_<t>...
/// Timing columns read "nan" unless timing is enabled.
inline std::string format_bench_csv(const std::vector<BenchRow>& rows) {
  std::string out =
      "experts,k_shared,k_adaptive,tasks,instances,expert_params_total,"
      "expert_params_active,active_ratio,dense_expert_flops,sparse_expert_flops,"
      "flop_ratio,dense_total_flops,sparse_total_flops,min_union,mean_union,"
      "max_union,union_bound,l_lb,load_cv,dead_fraction,dense_ms,sparse_ms";
  const std::size_t tasks = rows.empty() ? 0 : rows.front().tasks;
  for (std::size_t t = 0; t < tasks; ++t) out += ",auc_" + std::to_string(t);
  for (std::size_t t = 0; t < tasks; ++t) out += ",gauc_" + std::to_string(t);
  out += '\n';
  using text::format_real;
  for (const auto& r : rows) {
    out += std::to_string(r.experts) + ',' + std::to_string(r.k_shared) + ',' +
           std::to_string(r.k_adaptive) + ',' + std::to_string(r.tasks) + ',' +
           std::to_string(r.instances) + ',' + std::to_string(r.expert_params_total) + ',' +
           std::to_string(r.expert_params_active) + ',' + format_real(r.active_ratio()) + ',' +
           std::to_string(r.dense_expert_flops) + ',' +
           std::to_string(r.sparse_expert_flops) + ',' +
           format_real(static_cast<double>(r.sparse_expert_flops) /
                       static_cast<double>(r.dense_expert_flops)) +
           ',' + std::to_string(r.dense_total_flops) + ',' +
           std::to_string(r.sparse_total_flops) + ',' + std::to_string(r.min_union) + ',' +
           format_real(r.mean_union) + ',' + std::to_string(r.max_union) + ',' +
           std::to_string(r.union_bound) + ',' + format_real(r.l_lb) + ',' +
           format_real(r.load_cv) + ',' + format_real(r.dead_fraction) + ',' +
           format_real(r.dense_ms) + ',' + format_real(r.sparse_ms);
    for (double v : r.auc) out += ',' + format_real(v);
    for (double v : r.gauc) out += ',' + format_real(v);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Routing pathologies: union growth and load skew, naive vs progressive.

enum class LogitMode { kCorrelated, kAdversarial };

/// Logits for one instance. Correlated mode mixes an instance-level
/// component shared by all tasks with task noise:
///   z_{t,e} = scale * (sqrt(rho) * u_e + sqrt(1 - rho) * eps_{t,e}).
/// Adversarial mode gives task t a block of K experts starting at t * K
/// (mod E) with logit 10, everything else uniform in [0, 1).
inline Matrix synthetic_logits(LogitMode mode, std::size_t tasks, std::size_t experts,
                               std::size_t k, double rho, double scale,
                               std::mt19937_64& rng) {
  Matrix z(tasks, experts);
  if (mode == LogitMode::kAdversarial) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : z.values()) v = unit(rng);
    for (std::size_t t = 0; t < tasks; ++t) {
      for (std::size_t j = 0; j < k; ++j) z(t, (t * k + j) % experts) = 10.0;
    }
    return z;
  }
  std::normal_distribution<double> normal;
  std::vector<double> shared(experts);
  for (double& v : shared) v = normal(rng);
  const double a = std::sqrt(rho);
  const double b = std::sqrt(1.0 - rho);
  for (std::size_t t = 0; t < tasks; ++t) {
    for (std::size_t e = 0; e < experts; ++e) {
      z(t, e) = scale * (a * shared[e] + b * normal(rng));
    }
  }
  return z;
}

struct PathologyRow {
  std::size_t tasks = 0;
  std::string mode;  // naive or progressive
  std::size_t instances = 0;
  double mean_union = 0.0;
  std::size_t max_union = 0;
  std::size_t union_bound = 0;
  std::size_t min_overlap = 0;  // min over instances of |intersection of K_t|
  double load_cv = 0.0;
  double load_max_mean = 0.0;
  double dead_fraction = 0.0;
};

struct PathologySettings {
  std::size_t experts = 32;
  RoutingBudget budget{2, 2};
  std::vector<std::size_t> tasks_sweep{1, 2, 4, 8};
  std::size_t decisions = 512;  // instances * tasks, held fixed across T
  LogitMode mode = LogitMode::kCorrelated;
  double rho = 0.5;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

/// Keys: experts, k_shared, k_adaptive, tasks_sweep, decisions, logit_mode
/// (correlated|adversarial), logit_correlation, logit_scale, seed.
inline PathologySettings pathology_settings_from_config(const Config& cfg) {
  PathologySettings s;
  s.experts = cfg.get_size("experts", s.experts);
  if (s.experts == 0) cfg.invalid("experts", "must be positive");
  s.budget.shared = cfg.get_size("k_shared", s.budget.shared);
  s.budget.adaptive = cfg.get_size("k_adaptive", s.budget.adaptive);
  try {
    s.budget.validate(s.experts);
  } catch (const Error& e) {
    cfg.invalid("k_shared", e.what());
  }
  s.tasks_sweep = cfg.get_sizes("tasks_sweep", s.tasks_sweep);
  for (auto t : s.tasks_sweep) {
    if (t == 0) cfg.invalid("tasks_sweep", "task counts must be positive");
  }
  s.decisions = cfg.get_size("decisions", s.decisions);
  const auto mode = cfg.get_string("logit_mode", "correlated");
  if (mode == "correlated") {
    s.mode = LogitMode::kCorrelated;
  } else if (mode == "adversarial") {
    s.mode = LogitMode::kAdversarial;
  } else {
    cfg.invalid("logit_mode", "expected correlated or adversarial, got '" + mode + "'");
  }
  s.rho = cfg.get_double("logit_correlation", s.rho);
  if (s.rho < 0.0 || s.rho > 1.0) cfg.invalid("logit_correlation", "must lie in [0, 1]");
  s.scale = cfg.get_double("logit_scale", s.scale);
  s.seed = cfg.get_u64("seed", s.seed);
  return s;
}

/// For each T, draws decisions / T instances of logits (at least one) and
/// routes them both ways on identical logits.
inline std::vector<PathologyRow> run_pathology(const PathologySettings& s) {
  std::vector<PathologyRow> rows;
  const std::size_t k = s.budget.total();
  for (std::size_t tasks : s.tasks_sweep) {
    const std::size_t instances = std::max<std::size_t>(1, s.decisions / tasks);
    std::mt19937_64 rng(s.seed + tasks);
    std::vector<RoutingDecision> naive;
    std::vector<RoutingDecision> progressive;
    const std::vector<double> task_weights(tasks, 1.0);
    for (std::size_t b = 0; b < instances; ++b) {
      const Matrix z = synthetic_logits(s.mode, tasks, s.experts, k, s.rho, s.scale, rng);
      naive.push_back(naive_sparse_route(z, k));
      progressive.push_back(progressive_route(z, s.budget, task_weights));
    }
    auto summarize = [&](const std::vector<RoutingDecision>& ds, const std::string& mode,
                         std::size_t bound) {
      PathologyRow r;
      r.tasks = tasks;
      r.mode = mode;
      r.instances = ds.size();
      r.union_bound = bound;
      r.min_overlap = std::numeric_limits<std::size_t>::max();
      std::size_t total = 0;
      for (const auto& d : ds) {
        total += d.union_set.size();
        r.max_union = std::max(r.max_union, d.union_set.size());
        r.min_overlap = std::min(r.min_overlap, common_experts(d).size());
      }
      r.mean_union = static_cast<double>(total) / static_cast<double>(ds.size());
      const auto skew = skew_diagnostics(compute_load_stats(ds));
      r.load_cv = skew.coefficient_of_variation;
      r.load_max_mean = skew.max_mean_ratio;
      r.dead_fraction = skew.dead_fraction;
      return r;
    };
    rows.push_back(summarize(naive, "naive", std::min(s.experts, tasks * k)));
    rows.push_back(summarize(progressive, "progressive",
                             s.budget.union_bound(s.experts, tasks)));
  }
  return rows;
}

inline std::string format_pathology_csv(const std::vector<PathologyRow>& rows) {
  std::string out =
      "tasks,mode,instances,mean_union,max_union,union_bound,min_overlap,load_cv,"
      "load_max_mean,dead_fraction\n";
  using text::format_real;
  for (const auto& r : rows) {
    out += std::to_string(r.tasks) + ',' + r.mode + ',' + std::to_string(r.instances) +
           ',' + format_real(r.mean_union) + ',' + std::to_string(r.max_union) + ',' +
           std::to_string(r.union_bound) + ',' + std::to_string(r.min_overlap) + ',' +
           format_real(r.load_cv) + ',' + format_real(r.load_max_mean) + ',' +
           format_real(r.dead_fraction) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Workspace profiling.

struct WorkspaceReport {
  LoadProfile profile;
  std::vector<ProvisionRow> provision;
  double replay_quantile = 1.0;
  ReplayResult replay;
};

/// Keys, on top of generator and model keys: profile_batches, batch_size,
/// quantiles, workers, page_size, elem_bytes, replay_quantile, hold_us.
inline WorkspaceReport profile_workspace(const Config& cfg) {
  const SynthSpec synth = synth_spec_from_config(cfg);
  const MoeModel model =
      make_model(model_spec_from_config(cfg, synth.dim, synth.num_tasks()));
  model.budget.validate(model.dims.num_experts);
  const std::size_t batches = cfg.get_size("profile_batches", 64);
  const std::size_t batch_size = cfg.get_size("batch_size", 32);
  if (batches == 0) cfg.invalid("profile_batches", "must be positive");
  if (batch_size == 0) cfg.invalid("batch_size", "must be positive");
  const auto quantiles = cfg.get_doubles("quantiles", {0.5, 0.9, 0.99, 1.0});
  for (double q : quantiles) {
    if (!(q > 0.0 && q <= 1.0)) cfg.invalid("quantiles", "each must lie in (0, 1]");
  }
  const std::size_t workers = std::max<std::size_t>(1, cfg.get_size("workers", 4));
  WorkspaceDims dims;
  dims.d_in = model.dims.expert_in;
  dims.d_out = model.dims.expert_out;
  dims.page_size = cfg.get_size("page_size", 4096);
  dims.elem_bytes = cfg.get_size("elem_bytes", 8);
  if (dims.page_size == 0) cfg.invalid("page_size", "must be positive");
  if (dims.elem_bytes == 0) cfg.invalid("elem_bytes", "must be positive");

  WorkspaceReport report;
  report.replay_quantile = cfg.get_double("replay_quantile", 1.0);
  if (!(report.replay_quantile > 0.0 && report.replay_quantile <= 1.0)) {
    cfg.invalid("replay_quantile", "must lie in (0, 1]");
  }
  const auto hold = std::chrono::microseconds(cfg.get_u64("hold_us", 200));

  const InteractionLog log = generate(synth);
  for (const auto& batch : detail::slice_batches(log, batch_size, batches)) {
    report.profile.samples.push_back(
        forward_sparse(batch.features, model).plan.total_activations());
  }
  report.provision = provision_report(report.profile, quantiles, dims, workers);
  const auto capacity = provision(report.profile, report.replay_quantile, dims, workers);
  report.replay = replay_workload(report.profile.samples, dims, capacity, workers, hold);
  return report;
}

inline std::string format_replay_csv(const WorkspaceReport& r) {
  return "quantile,capacity_pages,requests,infeasible,wait_events\n" +
         text::format_real(r.replay_quantile) + ',' +
         std::to_string(r.replay.capacity_pages) + ',' + std::to_string(r.replay.requests) +
         ',' + std::to_string(r.replay.infeasible) + ',' +
         std::to_string(r.replay.counters.wait_events) + '\n';
}

}  // namespace smes::bench
