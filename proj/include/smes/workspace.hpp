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
#include <barrier>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "smes/error.hpp"
#include "smes/text.hpp"

namespace smes {

/// Pages needed for packed inputs and outputs of n_act rows:
/// ceil(n_act * (d_in + d_out) * elem_bytes / page_size).
inline std::uint64_t required_pages(std::uint64_t n_act, std::size_t d_in,
                                    std::size_t d_out, std::size_t elem_bytes,
                                    std::size_t page_size) {
  check(page_size > 0, ErrorCode::kInvalidArgument, "page size must be positive");
  const std::uint64_t bytes = n_act * (d_in + d_out) * elem_bytes;
  return (bytes + page_size - 1) / page_size;
}

struct WorkspaceDims {
  std::size_t d_in = 16;
  std::size_t d_out = 8;
  std::size_t elem_bytes = 8;
  std::size_t page_size = 4096;

  std::uint64_t pages_for(std::uint64_t n_act) const {
    return required_pages(n_act, d_in, d_out, elem_bytes, page_size);
  }
};

/// A contiguous run of pages [first_page, first_page + page_count).
struct Block {
  std::uint64_t id = 0;
  std::size_t first_page = 0;
  std::size_t page_count = 0;

  std::size_t end_page() const noexcept { return first_page + page_count; }
  friend bool operator==(const Block&, const Block&) = default;
};

struct PoolCounters {
  std::uint64_t allocations = 0;
  std::uint64_t releases = 0;
  std::uint64_t wait_events = 0;
  std::uint64_t timeouts = 0;
  std::size_t pages_in_use = 0;
  std::size_t peak_pages_in_use = 0;
  std::size_t held_blocks = 0;
};

/// Fixed pool of equally sized pages handing out contiguous blocks.
/// Placement is first fit by lowest page index; requests are served strictly
/// in arrival order, so a request that does not fit blocks the ones behind
/// it until enough pages are released.
class WorkspacePool {
 public:
  using Clock = std::chrono::steady_clock;

  explicit WorkspacePool(std::size_t page_count, std::size_t page_size = 4096)
      : page_count_(page_count), page_size_(page_size) {
    check(page_count > 0 && page_size > 0, ErrorCode::kInvalidArgument,
          "workspace pool needs a positive page count and page size");
  }

  WorkspacePool(const WorkspacePool&) = delete;
  WorkspacePool& operator=(const WorkspacePool&) = delete;

  std::size_t page_count() const noexcept { return page_count_; }
  std::size_t page_size() const noexcept { return page_size_; }

  /// Waits until the block is granted or `deadline` passes (nullopt).
  std::optional<Block> allocate(std::size_t pages, Clock::time_point deadline) {
    if (pages == 0) fail(ErrorCode::kInvalidArgument, "allocation of zero pages");
    if (pages > page_count_) {
      fail(ErrorCode::kInfeasible, "request for " + std::to_string(pages) +
                                       " pages exceeds the pool of " +
                                       std::to_string(page_count_));
    }
    std::unique_lock lock(mu_);
    const std::uint64_t ticket = next_ticket_++;
    queue_.push_back(ticket);
    bool waited = false;
    while (true) {
      if (queue_.front() == ticket) {
        if (auto start = first_fit(pages)) {
          queue_.pop_front();
          Block block{next_id_++, *start, pages};
          held_.emplace(block.first_page, block);
          ++counters_.allocations;
          counters_.pages_in_use += pages;
          counters_.peak_pages_in_use =
              std::max(counters_.peak_pages_in_use, counters_.pages_in_use);
          // The next queued request may fit as well.
          cv_.notify_all();
          return block;
        }
      }
      if (!waited) {
        waited = true;
        ++counters_.wait_events;
      }
      if (deadline == Clock::time_point::max()) {
        cv_.wait(lock);
        continue;
      }
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout &&
          Clock::now() >= deadline) {
        if (queue_.front() == ticket) {
          if (auto start = first_fit(pages)) {
            continue;  // became feasible right at the deadline
          }
        }
        queue_.erase(std::find(queue_.begin(), queue_.end(), ticket));
        ++counters_.timeouts;
        cv_.notify_all();
        return std::nullopt;
      }
    }
  }

  Block allocate(std::size_t pages) { return *allocate(pages, Clock::time_point::max()); }

  void release(const Block& block) {
    std::lock_guard lock(mu_);
    auto it = held_.find(block.first_page);
    if (it == held_.end() || !(it->second == block)) {
      fail(ErrorCode::kInvalidArgument,
           "release of block " + std::to_string(block.id) + " at page " +
               std::to_string(block.first_page) + " which is not held");
    }
    held_.erase(it);
    ++counters_.releases;
    counters_.pages_in_use -= block.page_count;
    cv_.notify_all();
  }

  PoolCounters counters() const {
    std::lock_guard lock(mu_);
    PoolCounters c = counters_;
    c.held_blocks = held_.size();
    return c;
  }

  /// Held blocks ordered by first page.
  std::vector<Block> ledger() const {
    std::lock_guard lock(mu_);
    std::vector<Block> out;
    for (const auto& [_, b] : held_) out.push_back(b);
    return out;
  }

  std::size_t waiting() const {
    std::lock_guard lock(mu_);
    return queue_.size();
  }

 private:
  std::optional<std::size_t> first_fit(std::size_t pages) const {
    std::size_t cursor = 0;
    for (const auto& [start, b] : held_) {
      if (start - cursor >= pages) return cursor;
      cursor = b.end_page();
    }
    if (page_count_ - cursor >= pages) return cursor;
    return std::nullopt;
  }

  const std::size_t page_count_;
  const std::size_t page_size_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::size_t, Block> held_;  // keyed by first page
  std::deque<std::uint64_t> queue_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t next_id_ = 1;
  PoolCounters counters_;
};

/// Nearest-rank quantile: the ceil(q * n)-th smallest sample, q in (0, 1].
inline std::uint64_t nearest_rank_quantile(std::span<const std::uint64_t> samples,
                                           double q) {
  check(!samples.empty(), ErrorCode::kInvalidArgument, "quantile of an empty profile");
  check(q > 0.0 && q <= 1.0, ErrorCode::kInvalidArgument,
        "quantile must lie in (0, 1], got " + text::format_real(q));
  std::vector<std::uint64_t> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

/// Observed N_act per batch.
struct LoadProfile {
  std::vector<std::uint64_t> samples;

  std::uint64_t quantile(double q) const { return nearest_rank_quantile(samples, q); }

  std::string to_text() const {
    std::string out;
    for (auto s : samples) out += std::to_string(s) + '\n';
    return out;
  }

  static LoadProfile parse(std::string_view content) {
    LoadProfile p;
    std::size_t line_no = 0;
    for (auto line : text::split(content, '\n')) {
      ++line_no;
      line = text::trim(line);
      if (line.empty()) continue;
      const auto v = text::parse_u64(line);
      if (!v) {
        fail(ErrorCode::kParse, "profile line " + std::to_string(line_no) +
                                    ": expected a non-negative integer");
      }
      p.samples.push_back(*v);
    }
    return p;
  }
};

/// Recommended page count: concurrency * pages for the q-quantile of N_act.
/// A recommendation, not a guarantee.
inline std::uint64_t provision(const LoadProfile& profile, double q,
                               const WorkspaceDims& dims, std::size_t concurrency) {
  check(!profile.samples.empty(), ErrorCode::kInvalidArgument,
        "cannot provision from an empty load profile");
  check(concurrency > 0, ErrorCode::kInvalidArgument, "concurrency must be positive");
  return concurrency * dims.pages_for(profile.quantile(q));
}

struct ProvisionRow {
  double quantile = 0.0;
  std::uint64_t n_act = 0;
  std::uint64_t pages = 0;
  std::uint64_t capacity = 0;
};

inline std::vector<ProvisionRow> provision_report(const LoadProfile& profile,
                                                  std::span<const double> quantiles,
                                                  const WorkspaceDims& dims,
                                                  std::size_t concurrency) {
  std::vector<ProvisionRow> rows;
  for (double q : quantiles) {
    ProvisionRow r;
    r.quantile = q;
    r.n_act = profile.quantile(q);
    r.pages = dims.pages_for(r.n_act);
    r.capacity = provision(profile, q, dims, concurrency);
    rows.push_back(r);
  }
  return rows;
}

inline std::string format_provision_csv(std::span<const ProvisionRow> rows) {
  std::string out = "quantile,n_act,pages,recommended_capacity\n";
  for (const auto& r : rows) {
    out += text::format_real(r.quantile) + ',' + std::to_string(r.n_act) + ',' +
           std::to_string(r.pages) + ',' + std::to_string(r.capacity) + '\n';
  }
  return out;
}

struct ReplayResult {
  std::size_t capacity_pages = 0;
  std::uint64_t requests = 0;
  std::uint64_t infeasible = 0;  // larger than the whole pool, skipped
  PoolCounters counters;
  bool ledger_empty = true;
};

/// Replays N_act samples against a pool of `capacity_pages`. Samples are
/// processed in rounds of `workers` concurrent requests; each worker
/// allocates its block, holds it for `hold`, and releases it before the next
/// round starts.
inline ReplayResult replay_workload(std::span<const std::uint64_t> samples,
                                    const WorkspaceDims& dims,
                                    std::size_t capacity_pages, std::size_t workers,
                                    std::chrono::microseconds hold) {
  check(workers > 0, ErrorCode::kInvalidArgument, "replay needs at least one worker");
  WorkspacePool pool(capacity_pages, dims.page_size);
  const std::size_t rounds = (samples.size() + workers - 1) / workers;
  std::barrier sync(static_cast<std::ptrdiff_t>(workers));
  std::vector<std::uint64_t> requests(workers, 0);
  std::vector<std::uint64_t> infeasible(workers, 0);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        for (std::size_t r = 0; r < rounds; ++r) {
          sync.arrive_and_wait();
          const std::size_t i = r * workers + w;
          if (i >= samples.size() || errors[w]) continue;
          const auto pages = dims.pages_for(samples[i]);
          if (pages == 0) continue;
          if (pages > capacity_pages) {
            ++infeasible[w];
            continue;
          }
          try {
            ++requests[w];
            const Block block = pool.allocate(pages);
            if (hold.count() > 0) std::this_thread::sleep_for(hold);
            pool.release(block);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  ReplayResult res;
  res.capacity_pages = capacity_pages;
  for (std::size_t w = 0; w < workers; ++w) {
    res.requests += requests[w];
    res.infeasible += infeasible[w];
  }
  res.counters = pool.counters();
  res.ledger_empty = pool.ledger().empty();
  return res;
}

}  // namespace smes
