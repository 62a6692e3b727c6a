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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "smes/error.hpp"
#include "smes/execution.hpp"
#include "smes/model.hpp"
#include "smes/text.hpp"

// Portable checkpoint of a MoeModel. All integers and reals little-endian.
//
//   magic        8 bytes  "SMESCKPT"
//   version      u32      1
//   dims         6 x u64  input_dim, encoder_hidden, expert_in, expert_out,
//                         num_experts, num_tasks
//   seed         u64
//   budget       2 x u64  shared, adaptive
//   activation   u32      0 identity, 1 relu
//   beta         f64
//   loss_weights T x f64
//   task_weights T x f64
//   blocks       u64 count, then per block (canonical parameter order):
//                u64 length, length x f64
namespace smes {

inline constexpr std::string_view kCheckpointMagic = "SMESCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { out_ += s; }
  const std::string& bytes() const { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_ += static_cast<char>((v >> (8 * i)) & 0xff);
  }
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source)
      : data_(data), source_(std::move(source)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      fail(ErrorCode::kParse, source_ + ": truncated checkpoint at byte " +
                                  std::to_string(pos_));
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace detail

inline std::string serialize_model(const MoeModel& model) {
  model.validate();
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto& d = model.dims;
  for (auto v : {d.input_dim, d.encoder_hidden, d.expert_in, d.expert_out,
                 d.num_experts, d.num_tasks}) {
    w.u64(v);
  }
  w.u64(model.seed);
  w.u64(model.budget.shared);
  w.u64(model.budget.adaptive);
  w.u32(model.params.experts.activation == Activation::kRelu ? 1 : 0);
  w.f64(model.beta);
  for (double v : model.loss_weights) w.f64(v);
  for (double v : model.params.routers.task_weights) w.f64(v);
  Parameters copy = model.params;
  const auto blocks = parameter_blocks(copy);
  w.u64(blocks.size());
  for (const auto& b : blocks) {
    w.u64(b.values.size());
    for (double v : b.values) w.f64(v);
  }
  return w.bytes();
}

inline MoeModel deserialize_model(std::string_view bytes,
                                  const std::string& source = "<checkpoint>") {
  detail::ByteReader r(bytes, source);
  if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic) {
    fail(ErrorCode::kParse, source + ": not a checkpoint (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kParse, source + ": unsupported checkpoint version " +
                                std::to_string(version));
  }
  ModelSpec spec;
  auto& d = spec.dims;
  d.input_dim = r.u64();
  d.encoder_hidden = r.u64();
  d.expert_in = r.u64();
  d.expert_out = r.u64();
  d.num_experts = r.u64();
  d.num_tasks = r.u64();
  spec.seed = r.u64();
  spec.budget.shared = r.u64();
  spec.budget.adaptive = r.u64();
  const auto act = r.u32();
  check(act <= 1, ErrorCode::kParse, source + ": unknown activation code");
  spec.expert_activation = act == 1 ? Activation::kRelu : Activation::kIdentity;
  spec.beta = r.f64();
  check(d.num_tasks > 0 && d.num_tasks < (1u << 20), ErrorCode::kParse,
        source + ": implausible task count");
  spec.loss_weights.resize(d.num_tasks);
  for (double& v : spec.loss_weights) v = r.f64();
  spec.task_weights.resize(d.num_tasks);
  for (double& v : spec.task_weights) v = r.f64();

  MoeModel model = make_model(spec);
  auto blocks = parameter_blocks(model.params);
  const auto count = r.u64();
  if (count != blocks.size()) {
    fail(ErrorCode::kParse, source + ": expected " + std::to_string(blocks.size()) +
                                " parameter blocks, found " + std::to_string(count));
  }
  for (auto& b : blocks) {
    const auto len = r.u64();
    if (len != b.values.size()) {
      fail(ErrorCode::kParse, source + ": block " + b.name + " has length " +
                                  std::to_string(len) + ", expected " +
                                  std::to_string(b.values.size()));
    }
    for (double& v : b.values) v = r.f64();
  }
  check(r.done(), ErrorCode::kParse, source + ": trailing bytes after checkpoint");
  model.validate();
  return model;
}

inline void save_checkpoint(const MoeModel& model, const std::filesystem::path& path) {
  text::write_file_atomic(path, serialize_model(model));
}

inline MoeModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kIo, "checkpoint not found: " + path.string());
  }
  return deserialize_model(text::read_file(path), path.string());
}

}  // namespace smes
