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
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smes/config.hpp"
#include "smes/error.hpp"
#include "smes/matrix.hpp"
#include "smes/text.hpp"

namespace smes {

struct Record {
  std::string user_id;
  std::vector<double> features;
  std::vector<int> labels;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Multi-task interaction log: one feature vector and T binary labels per
/// record.
struct InteractionLog {
  std::vector<std::string> task_names;
  std::size_t dim = 0;
  std::vector<Record> records;

  std::size_t num_tasks() const noexcept { return task_names.size(); }
  std::size_t size() const noexcept { return records.size(); }

  void validate() const {
    check(!task_names.empty(), ErrorCode::kInvalidArgument, "log has no tasks");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      check(!r.user_id.empty(), ErrorCode::kInvalidArgument,
            "record " + std::to_string(i) + " has an empty user id");
      check(r.features.size() == dim && r.labels.size() == num_tasks(),
            ErrorCode::kShapeMismatch,
            "record " + std::to_string(i) + " has the wrong width");
    }
  }

  friend bool operator==(const InteractionLog&, const InteractionLog&) = default;
};

/// Parameters of the synthetic generator.
///
/// Each user has a latent vector u; a record's features are
/// x = sqrt(user_share) * u + sqrt(1 - user_share) * noise, so x ~ N(0, I).
/// Task t scores a record as
///   s_t = signal_t * (a_t . x) + nonlinearity * ((a_t . x)^2 - 1)
///         + user_effect * delta_{u,t} + label_noise * eps
/// with a_t = sqrt(correlation) * q_0 + sqrt(1 - correlation) * q_t over
/// orthonormal directions q. The label is 1 for the round(rate_t * N)
/// highest-scoring records.
struct SynthSpec {
  std::size_t users = 200;
  std::size_t records_per_user = 50;
  std::size_t dim = 16;
  std::vector<double> positive_rates{0.3, 0.05, 0.01};
  std::vector<double> signal{2.5};  // one value, or one per task
  double correlation = 0.5;
  double user_share = 0.3;
  double user_effect = 0.5;
  double label_noise = 1.0;
  double nonlinearity = 0.0;
  std::uint64_t seed = 0;

  std::size_t num_tasks() const noexcept { return positive_rates.size(); }

  double signal_for(std::size_t t) const {
    return signal.size() == 1 ? signal[0] : signal[t];
  }

  void validate() const {
    check(users > 0 && records_per_user > 0, ErrorCode::kInvalidArgument,
          "synthetic spec needs at least one user and one record per user");
    check(!positive_rates.empty(), ErrorCode::kInvalidArgument,
          "synthetic spec needs at least one task");
    check(dim >= num_tasks() + 1, ErrorCode::kInvalidArgument,
          "feature dim must be at least tasks + 1 for orthogonal task directions");
    for (double r : positive_rates) {
      check(r > 0.0 && r < 1.0, ErrorCode::kInvalidArgument,
            "positive rates must lie in (0, 1)");
    }
    check(signal.size() == 1 || signal.size() == num_tasks(),
          ErrorCode::kInvalidArgument, "signal must have one value or one per task");
    check(correlation >= 0.0 && correlation <= 1.0, ErrorCode::kInvalidArgument,
          "correlation must lie in [0, 1]");
    check(user_share >= 0.0 && user_share <= 1.0, ErrorCode::kInvalidArgument,
          "user_share must lie in [0, 1]");
  }
};

/// Reads generator keys from a config, naming the offending key on error.
inline SynthSpec synth_spec_from_config(const Config& cfg) {
  SynthSpec s;
  s.users = cfg.get_size("users", s.users);
  s.records_per_user = cfg.get_size("records_per_user", s.records_per_user);
  s.dim = cfg.get_size("dim", s.dim);
  s.positive_rates = cfg.get_doubles("positive_rates", s.positive_rates);
  s.signal = cfg.get_doubles("signal", s.signal);
  s.correlation = cfg.get_double("correlation", s.correlation);
  s.user_share = cfg.get_double("user_share", s.user_share);
  s.user_effect = cfg.get_double("user_effect", s.user_effect);
  s.label_noise = cfg.get_double("label_noise", s.label_noise);
  s.nonlinearity = cfg.get_double("nonlinearity", s.nonlinearity);
  s.seed = cfg.get_u64("seed", s.seed);

  if (s.users == 0) cfg.invalid("users", "must be positive");
  if (s.records_per_user == 0) cfg.invalid("records_per_user", "must be positive");
  if (s.positive_rates.empty()) cfg.invalid("positive_rates", "needs at least one task");
  for (double r : s.positive_rates) {
    if (!(r > 0.0 && r < 1.0)) {
      cfg.invalid("positive_rates", "rate " + text::format_real(r) +
                                        " is outside (0, 1)");
    }
  }
  if (s.dim < s.num_tasks() + 1) {
    cfg.invalid("dim", "must be at least the task count + 1");
  }
  if (s.signal.size() != 1 && s.signal.size() != s.num_tasks()) {
    cfg.invalid("signal", "give one value or one per task");
  }
  if (s.correlation < 0.0 || s.correlation > 1.0) {
    cfg.invalid("correlation", "must lie in [0, 1]");
  }
  if (s.user_share < 0.0 || s.user_share > 1.0) {
    cfg.invalid("user_share", "must lie in [0, 1]");
  }
  return s;
}

inline std::vector<std::string> default_task_names(std::size_t tasks) {
  std::vector<std::string> names;
  for (std::size_t t = 0; t < tasks; ++t) names.push_back(std::to_string(t));
  return names;
}

namespace detail {

// Rounds to the 9 significant digits used by the text format.
inline double quantize9(double v) {
  return *text::parse_double(text::format_real(v, 9));
}

inline std::vector<std::vector<double>> orthonormal_directions(
    std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    for (const auto& q : basis) {
      const double proj = std::inner_product(v.begin(), v.end(), q.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * q[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace detail

inline InteractionLog generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t tasks = spec.num_tasks();
  const std::size_t n = spec.users * spec.records_per_user;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;

  const auto basis = detail::orthonormal_directions(tasks + 1, spec.dim, rng);
  std::vector<std::vector<double>> directions(tasks, std::vector<double>(spec.dim));
  const double shared = std::sqrt(spec.correlation);
  const double own = std::sqrt(1.0 - spec.correlation);
  for (std::size_t t = 0; t < tasks; ++t) {
    for (std::size_t i = 0; i < spec.dim; ++i) {
      directions[t][i] = shared * basis[0][i] + own * basis[t + 1][i];
    }
  }

  InteractionLog log;
  log.task_names = default_task_names(tasks);
  log.dim = spec.dim;
  log.records.reserve(n);
  std::vector<double> scores(n * tasks);
  const double user_w = std::sqrt(spec.user_share);
  const double item_w = std::sqrt(1.0 - spec.user_share);
  std::vector<double> latent(spec.dim);
  std::vector<double> offsets(tasks);
  for (std::size_t u = 0; u < spec.users; ++u) {
    for (double& v : latent) v = normal(rng);
    for (double& v : offsets) v = normal(rng);
    const std::string user_id = "u" + std::to_string(u);
    for (std::size_t r = 0; r < spec.records_per_user; ++r) {
      Record rec;
      rec.user_id = user_id;
      rec.features.resize(spec.dim);
      for (std::size_t i = 0; i < spec.dim; ++i) {
        rec.features[i] = detail::quantize9(user_w * latent[i] + item_w * normal(rng));
      }
      const std::size_t row = log.records.size();
      for (std::size_t t = 0; t < tasks; ++t) {
        const double proj = std::inner_product(
            rec.features.begin(), rec.features.end(), directions[t].begin(), 0.0);
        scores[row * tasks + t] = spec.signal_for(t) * proj +
                                  spec.nonlinearity * (proj * proj - 1.0) +
                                  spec.user_effect * offsets[t] +
                                  spec.label_noise * normal(rng);
      }
      rec.labels.assign(tasks, 0);
      log.records.push_back(std::move(rec));
    }
  }

  // Label the top round(rate * n) scores of each task as positive.
  std::vector<std::size_t> order(n);
  for (std::size_t t = 0; t < tasks; ++t) {
    const auto wanted = static_cast<std::size_t>(
        std::llround(spec.positive_rates[t] * static_cast<double>(n)));
    const double rate = static_cast<double>(wanted) / static_cast<double>(n);
    if (wanted == 0 || std::abs(rate - spec.positive_rates[t]) >
                           0.1 * spec.positive_rates[t]) {
      fail(ErrorCode::kInfeasible,
           "cannot calibrate task " + std::to_string(t) + " to positive rate " +
               text::format_real(spec.positive_rates[t]) + " with " +
               std::to_string(n) + " records");
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(wanted),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        const double sa = scores[a * tasks + t];
                        const double sb = scores[b * tasks + t];
                        return sa != sb ? sa > sb : a < b;
                      });
    for (std::size_t i = 0; i < wanted; ++i) log.records[order[i]].labels[t] = 1;
  }
  return log;
}

/// Tab separated; header `user_id, f_0..f_{d-1}, y_<task>...`; reals with 9
/// significant digits.
inline std::string format_log(const InteractionLog& log) {
  std::string out = "user_id";
  for (std::size_t i = 0; i < log.dim; ++i) out += "\tf_" + std::to_string(i);
  for (const auto& name : log.task_names) out += "\ty_" + name;
  out += '\n';
  for (const auto& r : log.records) {
    out += r.user_id;
    for (double v : r.features) {
      out += '\t';
      out += text::format_real(v, 9);
    }
    for (int y : r.labels) {
      out += '\t';
      out += static_cast<char>('0' + y);
    }
    out += '\n';
  }
  return out;
}

inline void write_log(const InteractionLog& log, const std::filesystem::path& path) {
  log.validate();
  text::write_file_atomic(path, format_log(log));
}

inline InteractionLog parse_log(std::string_view content,
                                const std::string& source = "<log>") {
  auto lines = text::split(content, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  check(!lines.empty(), ErrorCode::kParse, source + ": missing header line");

  auto where = [&](std::size_t line, const std::string& field) {
    return source + ":" + std::to_string(line) + ": field '" + field + "'";
  };

  InteractionLog log;
  const auto header = text::split(lines[0], '\t');
  if (header.empty() || header[0] != "user_id") {
    fail(ErrorCode::kParse, where(1, "user_id") + ": header must start with user_id");
  }
  std::size_t col = 1;
  while (col < header.size() && header[col] == "f_" + std::to_string(log.dim)) {
    ++log.dim;
    ++col;
  }
  for (; col < header.size(); ++col) {
    if (header[col].substr(0, 2) != "y_" || header[col].size() < 3) {
      fail(ErrorCode::kParse, where(1, std::string(header[col])) +
                                  ": expected f_<i> or y_<task> column");
    }
    log.task_names.emplace_back(header[col].substr(2));
  }
  check(!log.task_names.empty(), ErrorCode::kParse,
        where(1, "y_*") + ": no label columns");

  const std::size_t width = 1 + log.dim + log.task_names.size();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = text::split(lines[i], '\t');
    if (fields.size() != width) {
      const std::string missing =
          fields.size() < width ? std::string(header[fields.size()]) : "<extra>";
      fail(ErrorCode::kParse, where(line_no, missing) + ": expected " +
                                  std::to_string(width) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    Record r;
    r.user_id = std::string(fields[0]);
    if (r.user_id.empty()) fail(ErrorCode::kParse, where(line_no, "user_id") + ": empty");
    r.features.reserve(log.dim);
    for (std::size_t f = 0; f < log.dim; ++f) {
      const auto v = text::parse_double(fields[1 + f]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorCode::kParse, where(line_no, std::string(header[1 + f])) +
                                    ": not a finite real");
      }
      r.features.push_back(*v);
    }
    for (std::size_t t = 0; t < log.task_names.size(); ++t) {
      const auto field = fields[1 + log.dim + t];
      if (field != "0" && field != "1") {
        fail(ErrorCode::kParse, where(line_no, std::string(header[1 + log.dim + t])) +
                                    ": label must be 0 or 1");
      }
      r.labels.push_back(field == "1" ? 1 : 0);
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

inline InteractionLog read_log(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kIo, "data file not found: " + path.string());
  }
  return parse_log(text::read_file(path), path.string());
}

/// Deterministic record-level split into (train, validation).
inline std::pair<InteractionLog, InteractionLog> split_log(
    const InteractionLog& log, double valid_fraction, std::uint64_t seed) {
  check(valid_fraction >= 0.0 && valid_fraction < 1.0, ErrorCode::kInvalidArgument,
        "validation fraction must lie in [0, 1)");
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_valid = static_cast<std::size_t>(valid_fraction * static_cast<double>(log.size()));
  InteractionLog train{log.task_names, log.dim, {}};
  InteractionLog valid{log.task_names, log.dim, {}};
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_valid), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_valid ? valid : train).records.push_back(log.records[order[i]]);
  }
  return {std::move(train), std::move(valid)};
}

struct Batch {
  Matrix features;  // B x d
  Matrix labels;    // B x T, entries 0 or 1
};

inline Batch make_batch(const InteractionLog& log, std::span<const std::size_t> rows) {
  Batch b{Matrix(rows.size(), log.dim), Matrix(rows.size(), log.num_tasks())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = log.records.at(rows[i]);
    std::copy(r.features.begin(), r.features.end(), b.features.row(i).begin());
    for (std::size_t t = 0; t < r.labels.size(); ++t) b.labels(i, t) = r.labels[t];
  }
  return b;
}

inline std::vector<int> task_labels(const InteractionLog& log, std::size_t task) {
  std::vector<int> out;
  out.reserve(log.size());
  for (const auto& r : log.records) out.push_back(r.labels.at(task));
  return out;
}

inline std::vector<std::string> user_ids(const InteractionLog& log) {
  std::vector<std::string> out;
  out.reserve(log.size());
  for (const auto& r : log.records) out.push_back(r.user_id);
  return out;
}

}  // namespace smes
