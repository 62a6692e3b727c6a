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


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "smes/bench.hpp"
#include "smes/checkpoint.hpp"
#include "smes/text.hpp"

namespace smes {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("smes_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(SMES_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = text::read_file(out);
    r.err = text::read_file(err);
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    text::write_file_atomic(dir_ / name, content);
  }

  fs::path dir_;
};

TEST_F(CliTest, GenerateWritesHeaderAndRecords) {
  const auto r = run("generate --set users=20 --set records_per_user=5 --out " + path("a"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto log = text::read_file(path("a/interactions.tsv"));
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 101);
  EXPECT_EQ(log.rfind("user_id\tf_0\t", 0), 0u);
}

TEST_F(CliTest, GenerateIsByteIdentical) {
  write("gen.cfg", "users = 30\nrecords_per_user = 10\nseed = 5\n");
  ASSERT_EQ(run("generate --config " + path("gen.cfg") + " --out " + path("a")).exit_code, 0);
  ASSERT_EQ(run("generate --config " + path("gen.cfg") + " --out " + path("b")).exit_code, 0);
  EXPECT_EQ(text::read_file(path("a/interactions.tsv")), text::read_file(path("b/interactions.tsv")));
  ASSERT_EQ(run("generate --config " + path("gen.cfg") + " --seed 6 --out " + path("c")).exit_code, 0);
  EXPECT_NE(text::read_file(path("a/interactions.tsv")), text::read_file(path("c/interactions.tsv")));
}

TEST_F(CliTest, InvalidRateIsAValidationError) {
  const auto r = run("generate --set positive_rates=1.5,0.1 --out " + path("a"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("positive_rates"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownFlagIsAValidationError) {
  EXPECT_EQ(run("generate --bogus").exit_code, 1);
  EXPECT_EQ(run("").exit_code, 1);
}

TEST_F(CliTest, MissingDataFileIsARuntimeErrorNamingThePath) {
  const auto r = run("train --data " + path("missing.tsv") + " --out " + path("m"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find(path("missing.tsv")), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingConfigFileIsReported) {
  const auto r = run("bench --config " + path("nope.cfg"));
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("nope.cfg"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainWritesCheckpointAndMetrics) {
  ASSERT_EQ(run("generate --set users=40 --set records_per_user=10 --set positive_rates=0.3,0.1 "
                "--out " + path("d")).exit_code,
            0);
  write("train.cfg", "experts = 6\nk_shared = 1\nk_adaptive = 1\nepochs = 3\nbatch_size = 64\n");
  const auto r = run("train --config " + path("train.cfg") + " --data " +
                     path("d/interactions.tsv") + " --out " + path("m"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto csv = text::read_file(path("m/metrics.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,loss_task,l_lb,loss_total,mean_union,load_cv,load_max_mean,dead_fraction,"
            "auc_0,auc_1,gauc_0,gauc_1");
  const auto model = load_checkpoint(path("m/model.ckpt"));
  EXPECT_EQ(model.dims.num_experts, 6u);
  EXPECT_EQ(model.dims.num_tasks, 2u);
}

TEST_F(CliTest, BadTrainingKeyIsAValidationError) {
  ASSERT_EQ(run("generate --set users=10 --set records_per_user=10 --out " + path("d")).exit_code, 0);
  const auto r = run("train --data " + path("d/interactions.tsv") +
                     " --set k_shared=9 --set experts=8 --out " + path("m"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("k_shared"), std::string::npos) << r.err;
}

TEST(CheckpointTest, RoundTripGivesBitwiseIdenticalPredictions) {
  ModelSpec spec;
  spec.dims = {6, 8, 5, 4, 7, 3};
  spec.budget = {2, 1};
  spec.router_init_scale = 1.0;
  spec.loss_weights = {1.0, 0.5, 2.0};
  spec.beta = 0.03;
  spec.seed = 17;
  const auto model = make_model(spec);
  const auto path = fs::temp_directory_path() / "smes_roundtrip.ckpt";
  save_checkpoint(model, path);
  const auto loaded = load_checkpoint(path);
  fs::remove(path);
  EXPECT_EQ(loaded.dims, model.dims);
  EXPECT_EQ(loaded.seed, model.seed);
  EXPECT_EQ(loaded.beta, model.beta);
  EXPECT_EQ(loaded.loss_weights, model.loss_weights);
  EXPECT_EQ(serialize_model(loaded), serialize_model(model));
  std::mt19937_64 rng(1);
  Matrix x(9, 6);
  for (double& v : x.values()) v = std::normal_distribution<double>()(rng);
  EXPECT_EQ(forward_sparse(x, loaded).predictions, forward_sparse(x, model).predictions);
}

TEST(CheckpointTest, CorruptInputIsAParseError) {
  ModelSpec spec;
  const auto bytes = serialize_model(make_model(spec));
  for (const std::string& bad : {std::string("NOTACKPT"), bytes.substr(0, bytes.size() / 2),
                                 bytes + "extra"}) {
    try {
      deserialize_model(bad, "x.ckpt");
      ADD_FAILURE() << "expected an error";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse);
    }
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), Error);
}

Config bench_config(const std::string& extra) {
  return Config::parse(
      "users = 20\nrecords_per_user = 20\ndim = 8\npositive_rates = 0.3, 0.2, 0.1, 0.1\n"
      "batch_size = 16\nbatches = 4\n" + extra);
}

TEST(BenchTest, ExecutionsStayWithinTheUnionBound) {
  const auto rows = bench::run_bench(
      bench_config("experts_sweep = 128\nk_shared = 4\nk_adaptive = 4\nrouter_init_scale = 1\n"));
  ASSERT_EQ(rows.size(), 1u);
  const auto& r = rows[0];
  EXPECT_GE(r.min_union, 8u);
  EXPECT_LE(r.max_union, 20u);
  EXPECT_LE(static_cast<double>(r.sparse_expert_flops) / static_cast<double>(r.dense_expert_flops),
            20.0 / 128.0);
  EXPECT_EQ(r.union_bound, 20u);
}

TEST(BenchTest, SparsityRatioConfiguration) {
  const auto rows = bench::run_bench(
      bench_config("experts_sweep = 100\nsparsity_ratio = 0.08\nshared_fraction = 0.5\n"));
  EXPECT_EQ(rows[0].k_shared + rows[0].k_adaptive, 8u);
  EXPECT_NEAR(rows[0].active_ratio(), 0.08, 0.01 * 0.08);
  EXPECT_LE(rows[0].expert_params_active, rows[0].expert_params_total);
}

TEST(BenchTest, FullBudgetMatchesDenseFlops) {
  const auto rows =
      bench::run_bench(bench_config("experts_sweep = 8\nk_shared = 8\nk_adaptive = 0\n"));
  EXPECT_EQ(rows[0].sparse_expert_flops, rows[0].dense_expert_flops);
}

TEST(BenchTest, CsvSchemaAndTimingPlaceholders) {
  const auto csv = bench::format_bench_csv(bench::run_bench(bench_config("experts_sweep = 8, 16\n")));
  const auto lines = text::split(csv, '\n');
  EXPECT_EQ(lines[0].rfind("experts,k_shared,k_adaptive,tasks,instances,", 0), 0u);
  EXPECT_NE(std::string(lines[0]).find("dense_ms,sparse_ms,auc_0,auc_1,auc_2,auc_3,gauc_0"),
            std::string::npos);
  EXPECT_NE(std::string(lines[1]).find(",nan,nan,"), std::string::npos);
  EXPECT_EQ(lines.size(), 4u);  // header, two rows, trailing empty
}

TEST(BenchTest, TimingNeedsFiveRepetitions) {
  EXPECT_THROW(bench::run_bench(bench_config("experts_sweep = 8\ntiming = true\ntiming_reps = 3\n")),
               Error);
  const auto rows =
      bench::run_bench(bench_config("experts_sweep = 8\ntiming = true\ntiming_reps = 5\n"));
  EXPECT_GE(rows[0].dense_ms, 0.0);
  EXPECT_GE(rows[0].sparse_ms, 0.0);
}

TEST(BenchTest, InconsistentBudgetIsAValidationError) {
  try {
    bench::run_bench(bench_config("experts_sweep = 8\nk_shared = 6\nk_adaptive = 4\n"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_TRUE(e.is_validation());
  }
}

TEST(PathologyTest, AdversarialNaiveHitsCeilingProgressiveStaysBounded) {
  bench::PathologySettings s;
  s.experts = 32;
  s.budget = {2, 2};
  s.mode = bench::LogitMode::kAdversarial;
  const auto rows = bench::run_pathology(s);
  for (const auto& r : rows) {
    if (r.mode == "naive") {
      EXPECT_EQ(r.max_union, std::min<std::size_t>(32, r.tasks * 4));
      EXPECT_EQ(r.mean_union, static_cast<double>(std::min<std::size_t>(32, r.tasks * 4)));
    } else {
      EXPECT_LE(r.max_union, 2 + r.tasks * 2);
      EXPECT_GE(r.min_overlap, 2u);
    }
  }
}

TEST(PathologyTest, SingleTaskWithoutSharingCoincides) {
  bench::PathologySettings s;
  s.budget = {0, 3};
  s.tasks_sweep = {1};
  const auto rows = bench::run_pathology(s);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].mean_union, rows[1].mean_union);
  EXPECT_EQ(rows[0].load_cv, rows[1].load_cv);
  EXPECT_EQ(rows[0].dead_fraction, rows[1].dead_fraction);
}

TEST_F(CliTest, EveryCommandIsDeterministic) {
  const std::vector<std::string> commands{
      "generate --set users=20",
      "bench --set experts_sweep=8,16 --set users=20",
      "pathology --set tasks_sweep=1,4",
      "profile-workspace --set users=20 --set profile_batches=8 --set hold_us=50",
  };
  for (const auto& cmd : commands) {
    ASSERT_EQ(run(cmd + " --out " + path("one")).exit_code, 0) << cmd;
    ASSERT_EQ(run(cmd + " --out " + path("two")).exit_code, 0) << cmd;
  }
  ASSERT_EQ(run("train --data " + path("one/interactions.tsv") +
                " --set epochs=1 --set experts=4 --out " + path("one")).exit_code,
            0);
  ASSERT_EQ(run("train --data " + path("one/interactions.tsv") +
                " --set epochs=1 --set experts=4 --out " + path("two")).exit_code,
            0);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(path("one"))) {
    const auto other = fs::path(path("two")) / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(text::read_file(entry.path()), text::read_file(other)) << entry.path();
    ++compared;
  }
  EXPECT_EQ(compared, 8u);
}

TEST_F(CliTest, ProfileWorkspaceReportsZeroWaitsAtFullQuantile) {
  const auto r = run("profile-workspace --set profile_batches=16 --set workers=4 --out " + path("w"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto replay = text::read_file(path("w/replay.csv"));
  const auto lines = text::split(replay, '\n');
  EXPECT_EQ(lines[0], "quantile,capacity_pages,requests,infeasible,wait_events");
  EXPECT_EQ(lines[1].substr(lines[1].rfind(',') + 1), "0");
  const auto samples = LoadProfile::parse(text::read_file(path("w/samples.txt")));
  EXPECT_EQ(samples.samples.size(), 16u);
  EXPECT_EQ(run("profile-workspace --set profile_batches=0 --out " + path("x")).exit_code, 1);
}

}  // namespace
}  // namespace smes
