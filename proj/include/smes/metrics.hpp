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
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "smes/error.hpp"

namespace smes {

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. Computed by rank sum with midranks; the statistic is
/// accumulated as the integer 2U so the result is an exact ratio.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  check(scores.size() == labels.size(), ErrorCode::kShapeMismatch,
        "auc: " + std::to_string(scores.size()) + " scores for " +
            std::to_string(labels.size()) + " labels");
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    check(!std::isnan(scores[i]), ErrorCode::kInvalidArgument, "auc: NaN score");
    check(labels[i] == 0 || labels[i] == 1, ErrorCode::kInvalidArgument,
          "auc: labels must be 0 or 1");
    positives += static_cast<std::uint64_t>(labels[i]);
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorCode::kInvalidArgument,
         "auc is undefined without both positive and negative labels");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Twice the positive rank sum; a tie group spanning 1-based ranks
  // [i+1, j] has midrank (i+1+j)/2.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t group_pos = 0;
    for (std::size_t k = i; k < j; ++k) group_pos += labels[order[k]];
    twice_rank_sum += group_pos * (i + 1 + j);
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

/// Sample-weighted mean of per-user AUC. Users whose samples are all one
/// class are dropped from both the sum and the weight denominator.
inline double gauc(std::span<const double> scores, std::span<const int> labels,
                   std::span<const std::string> users) {
  check(scores.size() == labels.size() && scores.size() == users.size(),
        ErrorCode::kShapeMismatch, "gauc: scores, labels and users differ in length");
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < users.size(); ++i) by_user[users[i]].push_back(i);

  double weighted = 0.0;
  std::uint64_t included = 0;
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& [user, idx] : by_user) {
    s.clear();
    l.clear();
    int pos = 0;
    for (std::size_t i : idx) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
      pos += labels[i] == 1;
    }
    if (pos == 0 || pos == static_cast<int>(idx.size())) continue;
    weighted += static_cast<double>(idx.size()) * auc(s, l);
    included += idx.size();
  }
  if (included == 0) {
    fail(ErrorCode::kInvalidArgument,
         "gauc is undefined: no user has both positive and negative labels");
  }
  return weighted / static_cast<double>(included);
}

}  // namespace smes
