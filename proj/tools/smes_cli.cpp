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


// smes command-line harness.
//
//   smes generate          --config gen.cfg --out runs/data
//   smes train             --config train.cfg --data runs/data/interactions.tsv --out runs/model
//   smes bench             --config bench.cfg --out runs/bench
//   smes pathology         --config pathology.cfg --out runs/pathology
//   smes profile-workspace --config ws.cfg --out runs/ws
//
// Every subcommand also accepts --seed, --workers and repeated --set key=value.
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smes/smes.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config;
  std::string out = ".";
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "key = value configuration file");
  cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", opts.seed, "overrides the 'seed' key");
  cmd->add_option("--workers", opts.workers, "overrides the 'workers' key");
  cmd->add_option("--set", opts.overrides, "extra key=value override (repeatable)");
}

smes::Config resolve_config(const CommonOptions& opts) {
  smes::Config cfg =
      opts.config.empty() ? smes::Config{} : smes::Config::load(opts.config);
  for (const auto& o : opts.overrides) cfg.apply_override(o);
  if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
  if (opts.workers) cfg.set("workers", std::to_string(*opts.workers));
  return cfg;
}

fs::path output_dir(const CommonOptions& opts) {
  fs::path dir(opts.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) smes::fail(smes::ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void emit(const fs::path& path, const std::string& content) {
  smes::text::write_file_atomic(path, content);
  std::cout << "wrote " << path.string() << '\n';
}

void cmd_generate(const CommonOptions& opts) {
  const auto cfg = resolve_config(opts);
  const auto log = smes::generate(smes::synth_spec_from_config(cfg));
  const auto dir = output_dir(opts);
  smes::write_log(log, dir / "interactions.tsv");
  std::cout << "wrote " << (dir / "interactions.tsv").string() << " (" << log.size()
            << " records)\n";
}

void cmd_train(const CommonOptions& opts) {
  const auto cfg = resolve_config(opts);
  if (opts.data.empty()) {
    smes::fail(smes::ErrorCode::kInvalidArgument, "train needs --data <interactions.tsv>");
  }
  const auto log = smes::read_log(opts.data);
  const double valid_fraction = cfg.get_double("valid_fraction", 0.2);
  if (valid_fraction < 0.0 || valid_fraction >= 1.0) {
    cfg.invalid("valid_fraction", "must lie in [0, 1)");
  }
  const auto train_config = smes::bench::train_config_from_config(cfg);
  const auto spec = smes::bench::model_spec_from_config(cfg, log.dim, log.num_tasks());
  auto [train_log, valid_log] = smes::split_log(log, valid_fraction, train_config.seed);
  const auto result = smes::train(train_log, valid_log, spec, train_config);
  const auto dir = output_dir(opts);
  smes::save_checkpoint(result.model, dir / "model.ckpt");
  std::cout << "wrote " << (dir / "model.ckpt").string() << '\n';
  emit(dir / "metrics.csv", smes::format_metrics_csv(result.log, log.task_names));
}

void cmd_bench(const CommonOptions& opts) {
  const auto cfg = resolve_config(opts);
  const auto rows = smes::bench::run_bench(cfg);
  emit(output_dir(opts) / "bench.csv", smes::bench::format_bench_csv(rows));
}

void cmd_pathology(const CommonOptions& opts) {
  const auto cfg = resolve_config(opts);
  const auto rows =
      smes::bench::run_pathology(smes::bench::pathology_settings_from_config(cfg));
  emit(output_dir(opts) / "pathology.csv", smes::bench::format_pathology_csv(rows));
}

void cmd_profile_workspace(const CommonOptions& opts) {
  const auto cfg = resolve_config(opts);
  const auto report = smes::bench::profile_workspace(cfg);
  const auto dir = output_dir(opts);
  emit(dir / "samples.txt", report.profile.to_text());
  emit(dir / "provision.csv", smes::format_provision_csv(report.provision));
  emit(dir / "replay.csv", smes::bench::format_replay_csv(report));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smes: sparse multi-task mixture-of-experts toolkit"};
  app.require_subcommand(1);
  CommonOptions opts;

  auto* gen = app.add_subcommand("generate", "write a synthetic interaction log");
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  auto* bench = app.add_subcommand("bench", "dense vs sparse cost and quality sweep");
  auto* path = app.add_subcommand("pathology", "naive vs progressive routing statistics");
  auto* ws = app.add_subcommand("profile-workspace", "profile loads and provision a pool");
  for (auto* cmd : {gen, train, bench, path, ws}) add_common(cmd, opts);
  train->add_option("--data", opts.data, "interaction log to train on");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (gen->parsed()) cmd_generate(opts);
    if (train->parsed()) cmd_train(opts);
    if (bench->parsed()) cmd_bench(opts);
    if (path->parsed()) cmd_pathology(opts);
    if (ws->parsed()) cmd_profile_workspace(opts);
  } catch (const smes::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
