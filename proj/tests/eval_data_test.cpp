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


#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "smes/config.hpp"
#include "smes/data.hpp"
#include "smes/metrics.hpp"

namespace smes {
namespace {

std::vector<int> labels_of(const InteractionLog& log, std::size_t t) { return task_labels(log, t); }

double positive_rate(const InteractionLog& log, std::size_t t) {
  const auto y = labels_of(log, t);
  return static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
}

TEST(AucTest, PerfectRanking) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
}

TEST(AucTest, AllTies) {
  EXPECT_EQ(auc(std::vector<double>(7, 0.3), std::vector<int>{1, 0, 0, 1, 0, 1, 0}), 0.5);
}

TEST(AucTest, SingleClassIsAnError) {
  try {
    auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(AucTest, MatchesPairwiseOracleExactly) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial) * 5 % 999;
    std::vector<double> s(n);
    std::vector<int> y(n);
    // Coarse scores produce plenty of ties.
    std::uniform_int_distribution<int> level(0, trial % 2 == 0 ? 9 : 100000);
    std::bernoulli_distribution coin(0.3);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) / 10.0;
      y[i] = coin(rng) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(auc(s, y), oracle::pairwise_auc(s, y));
  }
}

TEST(AucTest, RankInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(50);
    std::vector<int> y(50);
    std::vector<std::string> users(50);
    for (std::size_t i = 0; i < 50; ++i) {
      s[i] = n(rng);
      y[i] = i % 3 == 0 ? 1 : 0;
      users[i] = "u" + std::to_string(i % 5);
    }
    std::vector<double> t(50);
    for (std::size_t i = 0; i < 50; ++i) t[i] = std::exp(2.0 * s[i]) + 3.0;
    EXPECT_EQ(auc(s, y), auc(t, y));
    EXPECT_EQ(gauc(s, y, users), gauc(t, y, users));
  }
}

TEST(GaucTest, SingleUserEqualsAuc) {
  const std::vector<double> s{0.2, 0.8, 0.5, 0.1, 0.9};
  const std::vector<int> y{0, 1, 0, 1, 1};
  EXPECT_EQ(gauc(s, y, std::vector<std::string>(5, "solo")), auc(s, y));
}

TEST(GaucTest, HandCase) {
  // User a ranks perfectly, user b ties.
  const std::vector<double> s{0.9, 0.1, 0.4, 0.4};
  const std::vector<int> y{1, 0, 1, 0};
  const std::vector<std::string> users{"a", "a", "b", "b"};
  EXPECT_EQ(oracle::pairwise_auc({0.9, 0.1}, {1, 0}), 1.0);
  EXPECT_EQ(oracle::pairwise_auc({0.4, 0.4}, {1, 0}), 0.5);
  EXPECT_EQ(gauc(s, y, users), 0.75);
}

TEST(GaucTest, SingleClassUsersAreDropped) {
  // User c has only positives and must not dilute the weights.
  const std::vector<double> s{0.9, 0.1, 0.4, 0.4, 0.3, 0.2, 0.7};
  const std::vector<int> y{1, 0, 1, 0, 1, 1, 1};
  const std::vector<std::string> users{"a", "a", "b", "b", "c", "c", "c"};
  EXPECT_EQ(gauc(s, y, users), 0.75);
}

TEST(GaucTest, NoEligibleUserIsAnError) {
  EXPECT_THROW(gauc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 0},
                    std::vector<std::string>{"a", "b"}),
               Error);
}

TEST(GaucTest, NullDistributionCentersOnHalf) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.3);
  double total = 0.0;
  const int seeds = 1000;
  for (int seed = 0; seed < seeds; ++seed) {
    const std::size_t n = 400;
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::vector<std::string> users(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      y[i] = coin(rng) ? 1 : 0;
      users[i] = "u" + std::to_string(i % 40);
    }
    total += gauc(s, y, users);
  }
  EXPECT_NEAR(total / seeds, 0.5, 0.02);
}

TEST(GeneratorTest, HitsTargetRates) {
  SynthSpec spec;
  spec.users = 200;
  spec.records_per_user = 50;
  spec.positive_rates = {0.3, 0.01};
  const auto log = generate(spec);
  ASSERT_EQ(log.size(), 10000u);
  EXPECT_GE(positive_rate(log, 0), 0.27);
  EXPECT_LE(positive_rate(log, 0), 0.33);
  EXPECT_GE(positive_rate(log, 1), 0.009);
  EXPECT_LE(positive_rate(log, 1), 0.011);
}

TEST(GeneratorTest, RatesConvergeWithSize) {
  for (std::size_t users : {200u, 2000u}) {
    SynthSpec spec;
    spec.users = users;
    spec.records_per_user = 50;
    spec.dim = 6;
    spec.positive_rates = {0.3, 0.05, 0.013};
    const auto log = generate(spec);
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_NEAR(positive_rate(log, t), spec.positive_rates[t], 0.1 * spec.positive_rates[t]);
    }
  }
}

TEST(GeneratorTest, UnreachableRateIsInfeasible) {
  SynthSpec spec;
  spec.users = 10;
  spec.records_per_user = 10;
  spec.positive_rates = {0.001};
  try {
    generate(spec);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(GeneratorTest, SameSeedIsBitwiseIdentical) {
  SynthSpec spec;
  spec.users = 20;
  spec.seed = 77;
  EXPECT_EQ(format_log(generate(spec)), format_log(generate(spec)));
  auto other = spec;
  other.seed = 78;
  EXPECT_NE(format_log(generate(spec)), format_log(generate(other)));
}

// Cosine between the least-squares predictors of two tasks.
double predictor_cosine(double correlation) {
  SynthSpec spec;
  spec.users = 400;
  spec.records_per_user = 50;
  spec.dim = 8;
  spec.positive_rates = {0.3, 0.3};
  spec.correlation = correlation;
  spec.user_effect = 0.0;
  spec.seed = 5;
  const auto log = generate(spec);
  oracle::Rows x;
  for (const auto& r : log.records) x.push_back(r.features);
  std::vector<std::vector<double>> coef;
  for (std::size_t t = 0; t < 2; ++t) {
    std::vector<double> y;
    for (const auto& r : log.records) y.push_back(r.labels[t] - 0.3);
    coef.push_back(oracle::least_squares(x, y));
  }
  return oracle::cosine(coef[0], coef[1]);
}

TEST(GeneratorTest, ZeroCorrelationGivesOrthogonalPredictors) {
  EXPECT_LT(std::abs(predictor_cosine(0.0)), 0.05);
  EXPECT_GT(predictor_cosine(0.8), 0.6);
}

TEST(GeneratorTest, InvalidSpecsAreRejected) {
  SynthSpec spec;
  spec.positive_rates = {1.5};
  EXPECT_THROW(generate(spec), Error);
  spec.positive_rates = {0.3, 0.3};
  spec.dim = 2;
  EXPECT_THROW(generate(spec), Error);
}

TEST(LogFormatTest, EmptyLogRoundTrip) {
  InteractionLog log{{"0", "1"}, 3, {}};
  const auto text = format_log(log);
  EXPECT_EQ(text, "user_id\tf_0\tf_1\tf_2\ty_0\ty_1\n");
  EXPECT_EQ(parse_log(text), log);
}

TEST(LogFormatTest, GeneratedLogRoundTripThroughFile) {
  SynthSpec spec;
  spec.users = 30;
  spec.records_per_user = 7;
  const auto log = generate(spec);
  const auto path = std::filesystem::temp_directory_path() / "smes_log_roundtrip.tsv";
  write_log(log, path);
  EXPECT_EQ(read_log(path), log);
  std::filesystem::remove(path);
}

TEST(LogFormatTest, MissingLabelNamesLineAndField) {
  const std::string text =
      "user_id\tf_0\ty_0\ty_1\n"
      "u1\t0.5\t1\t0\n"
      "u2\t0.25\t1\n";
  try {
    parse_log(text, "log.tsv");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    const std::string what = e.what();
    EXPECT_NE(what.find("log.tsv:3"), std::string::npos) << what;
    EXPECT_NE(what.find("y_1"), std::string::npos) << what;
  }
}

TEST(LogFormatTest, BadValuesNameTheField) {
  try {
    parse_log("user_id\tf_0\ty_0\nu1\tabc\t1\n", "log.tsv");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("log.tsv:2: field 'f_0'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_log("user_id\tf_0\ty_0\nu1\t0.5\t2\n"), Error);
}

TEST(LogFormatTest, MissingFileIsAnIoError) {
  try {
    read_log("/nonexistent/smes.tsv");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/smes.tsv"), std::string::npos);
  }
}

TEST(SplitTest, PartitionsRecords) {
  SynthSpec spec;
  spec.users = 10;
  spec.records_per_user = 10;
  spec.positive_rates = {0.3};
  const auto log = generate(spec);
  const auto [train, valid] = split_log(log, 0.25, 3);
  EXPECT_EQ(valid.size(), 25u);
  EXPECT_EQ(train.size(), 75u);
  const auto again = split_log(log, 0.25, 3);
  EXPECT_EQ(again.first, train);
}

TEST(ConfigTest, ParsesAndOverrides) {
  auto cfg = Config::parse("# comment\nusers = 12\npositive_rates = 0.3, 0.1\n\nname = x # trailing\n");
  EXPECT_EQ(cfg.get_size("users", 0), 12u);
  EXPECT_EQ(cfg.get_doubles("positive_rates", {}), (std::vector<double>{0.3, 0.1}));
  EXPECT_EQ(cfg.get_string("name", ""), "x");
  cfg.apply_override("users=40");
  EXPECT_EQ(cfg.get_size("users", 0), 40u);
  EXPECT_THROW(cfg.apply_override("novalue"), Error);
  EXPECT_THROW(Config::parse("just words\n"), Error);
}

TEST(ConfigTest, ValidationErrorsNameTheKey) {
  const auto cfg = Config::parse("positive_rates = 0.3, 1.5\n", "gen.cfg");
  try {
    synth_spec_from_config(cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_TRUE(e.is_validation());
    EXPECT_NE(std::string(e.what()).find("positive_rates"), std::string::npos) << e.what();
  }
  const auto bad_number = Config::parse("users = many\n");
  try {
    synth_spec_from_config(bad_number);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("users"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace smes
