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


#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "smes/forward.hpp"
#include "smes/matrix.hpp"
#include "smes/model.hpp"

namespace smes {
namespace {

TEST(MatmulTest, IdentityTimesColumn) {
  FlopCounter c;
  const auto out = matmul(Matrix::from_rows({{1, 0}, {0, 1}}), Matrix::from_rows({{3}, {4}}), c);
  EXPECT_EQ(out, Matrix::from_rows({{3}, {4}}));
  EXPECT_EQ(c.multiply_adds, 4u);
}

TEST(MatmulTest, RowTimesColumn) {
  FlopCounter c;
  const auto out = matmul(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3}, {4}}), c);
  EXPECT_EQ(out, Matrix::from_rows({{11}}));
  EXPECT_EQ(c.multiply_adds, 2u);
}

TEST(MatmulTest, MatchesTripleLoop) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_matrix(3, 4, rng);
    const auto b = oracle::random_matrix(4, 2, rng);
    FlopCounter c;
    const auto got = matmul(a, b, c);
    const auto want = oracle::triple_loop_matmul(oracle::to_rows(a), oracle::to_rows(b));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-12);
    }
    EXPECT_EQ(c.multiply_adds, 3u * 4u * 2u);
  }
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    const std::string what = e.what();
    EXPECT_NE(what.find("2x3"), std::string::npos) << what;
  }
}

TEST(MatmulTest, Associative) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_matrix(3, 5, rng);
    const auto b = oracle::random_matrix(5, 4, rng);
    const auto c = oracle::random_matrix(4, 2, rng);
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_LE(oracle::relative_error(left.values()[i], right.values()[i]), 1e-9);
    }
  }
}

TEST(MatmulTest, TransposedVariantsAgreeWithExplicitTranspose) {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_matrix(4, 3, rng);
  const auto b = oracle::random_matrix(4, 2, rng);
  Matrix at(3, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) at(j, i) = a(i, j);
  }
  const auto got = matmul_transpose_a(a, b);
  const auto want = matmul(at, b);
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got.values()[i], want.values()[i], 1e-12);
  }
  const auto c = oracle::random_matrix(5, 3, rng);
  Matrix ct(3, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) ct(j, i) = c(i, j);
  }
  const auto got_b = matmul_transpose_b(a, c);
  const auto want_b = matmul(a, ct);
  for (std::size_t i = 0; i < got_b.size(); ++i) {
    EXPECT_NEAR(got_b.values()[i], want_b.values()[i], 1e-12);
  }
}

TEST(SoftmaxTest, UniformLogits) {
  const auto p = softmax(std::vector<double>{0, 0, 0});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, TwoTermValues) {
  const auto p = softmax(std::vector<double>{2, 1});
  const double e2 = std::exp(2.0);
  const double e1 = std::exp(1.0);
  EXPECT_NEAR(p[0], e2 / (e2 + e1), 1e-15);
  EXPECT_NEAR(p[1], e1 / (e2 + e1), 1e-15);
  EXPECT_NEAR(p[0], 0.731059, 1e-6);
  EXPECT_NEAR(p[1], 0.268941, 1e-6);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  const auto p = softmax(std::vector<double>{1000, 0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_GE(p[1], 0.0);
  EXPECT_LT(p[1], 1e-300);
}

TEST(SoftmaxTest, EmptyAndNonFiniteInputsAreRejected) {
  EXPECT_THROW(softmax(std::vector<double>{}), Error);
  EXPECT_THROW(softmax(std::vector<double>{1.0, std::nan("")}), Error);
}

TEST(SoftmaxTest, SumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(1 + trial % 17);
    for (double& v : z) v = n(rng);
    const auto p = softmax(z);
    double total = 0.0;
    for (double v : p) {
      EXPECT_GT(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    auto shifted = z;
    for (double& v : shifted) v += 42.5;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(TopKTest, PicksLargest) {
  EXPECT_EQ(top_k(std::vector<double>{0.1, 0.9, 0.5}, 2), (IndexSet{1, 2}));
}

TEST(TopKTest, TiesGoToLowestIndex) {
  EXPECT_EQ(top_k(std::vector<double>{0.5, 0.5, 0.5}, 1), (IndexSet{0}));
  EXPECT_EQ(top_k(std::vector<double>{1, 2, 2, 2}, 2), (IndexSet{1, 2}));
}

TEST(TopKTest, FullSelection) {
  EXPECT_EQ(top_k(std::vector<double>{3, 1, 2}, 3), (IndexSet{0, 1, 2}));
  EXPECT_TRUE(top_k(std::vector<double>{3, 1, 2}, 0).empty());
}

TEST(TopKTest, KLargerThanLengthIsAnError) {
  try {
    top_k(std::vector<double>{1, 2}, 3);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(TopKTest, MatchesSortOracleAndIsDeterministic) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> small(0, 4);  // many ties
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 12;
    std::vector<double> s(n);
    for (double& v : s) v = small(rng);
    const std::size_t k = static_cast<std::size_t>(trial) % (n + 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    IndexSet want(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(want.begin(), want.end());
    EXPECT_EQ(top_k(s, k), want);
    EXPECT_EQ(top_k(s, k), top_k(s, k));
  }
}

TEST(TopKTest, ExcludingSkipsGivenIndices) {
  const std::vector<double> s{4, 3, 2, 1};
  EXPECT_EQ(top_k_excluding(s, IndexSet{0}, 2), (IndexSet{1, 2}));
  EXPECT_THROW(top_k_excluding(s, IndexSet{0, 1, 2}, 2), Error);
}

TEST(FlopCounterTest, DenseForwardMatchesClosedForm) {
  ModelSpec spec;
  spec.dims = {6, 10, 5, 3, 7, 4};
  spec.budget = {2, 1};
  spec.seed = 9;
  const auto model = make_model(spec);
  std::mt19937_64 rng(1);
  const std::size_t batch = 11;
  const auto x = oracle::random_matrix(batch, 6, rng);
  const auto f = forward_dense(x, model);
  const std::uint64_t b = batch;
  EXPECT_EQ(f.cost.expert.multiply_adds, b * 7 * 5 * 3);
  EXPECT_EQ(f.cost.router.multiply_adds, b * 4 * 5 * 7);
  EXPECT_EQ(f.cost.head.multiply_adds, b * 4 * 3);
  EXPECT_EQ(f.cost.encoder.multiply_adds, b * (6 * 10 + 10 * 5));
  FlopCounter counter;
  counter.add(5);
  counter.reset();
  EXPECT_EQ(counter.multiply_adds, 0u);
}

TEST(MatrixTest, RejectsBadData) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), Error);
}

TEST(MatrixTest, NonFiniteProductIsReported) {
  const double big = 1e308;
  try {
    matmul(Matrix::from_rows({{big, big}}), Matrix::from_rows({{big}, {big}}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

}  // namespace
}  // namespace smes
