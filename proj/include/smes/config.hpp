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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smes/error.hpp"
#include "smes/text.hpp"

namespace smes {

/// Flat `key = value` configuration. `#` starts a comment; blank lines are
/// ignored; later assignments win. Lists are comma separated.
class Config {
 public:
  static Config parse(std::string_view content,
                      const std::string& source = "<config>") {
    Config cfg;
    cfg.source_ = source;
    std::size_t line_no = 0;
    for (auto raw : text::split(content, '\n')) {
      ++line_no;
      if (const auto hash = raw.find('#'); hash != std::string_view::npos) {
        raw = raw.substr(0, hash);
      }
      const auto line = text::trim(raw);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const auto key = eq == std::string_view::npos
                           ? std::string_view{}
                           : text::trim(line.substr(0, eq));
      if (key.empty()) {
        fail(ErrorCode::kParse, source + ":" + std::to_string(line_no) +
                                    ": expected 'key = value'");
      }
      cfg.values_[std::string(key)] = std::string(text::trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
      fail(ErrorCode::kIo, "config file not found: " + path.string());
    }
    return parse(text::read_file(path), path.string());
  }

  /// Accepts `key=value`, as given on the command line.
  void apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || text::trim(assignment.substr(0, eq)).empty()) {
      fail(ErrorCode::kParse, "override '" + std::string(assignment) +
                                  "' is not of the form key=value");
    }
    set(std::string(text::trim(assignment.substr(0, eq))),
        std::string(text::trim(assignment.substr(eq + 1))));
  }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_double(key, it->second);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto v = text::parse_u64(it->second);
    if (!v) invalid(key, "expected a non-negative integer, got '" + it->second + "'");
    return *v;
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    invalid(key, "expected true/false, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (auto part : text::split(it->second, ',')) {
      out.push_back(to_double(key, std::string(text::trim(part))));
    }
    return out;
  }

  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    for (auto part : text::split(it->second, ',')) {
      const auto v = text::parse_u64(text::trim(part));
      if (!v) invalid(key, "expected a list of non-negative integers, got '" +
                               it->second + "'");
      out.push_back(static_cast<std::size_t>(*v));
    }
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::string> out;
    for (auto part : text::split(it->second, ',')) {
      out.emplace_back(text::trim(part));
    }
    return out;
  }

  /// Validation failure attributed to `key`.
  [[noreturn]] void invalid(const std::string& key, const std::string& why) const {
    fail(ErrorCode::kInvalidArgument,
         source_ + ": config key '" + key + "': " + why);
  }

 private:
  double to_double(const std::string& key, const std::string& raw) const {
    const auto v = text::parse_double(raw);
    if (!v || !std::isfinite(*v)) invalid(key, "expected a real number, got '" + raw + "'");
    return *v;
  }

  std::map<std::string, std::string> values_;
  std::string source_ = "<config>";
};

}  // namespace smes
