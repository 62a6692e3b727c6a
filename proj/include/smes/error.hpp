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

#include <stdexcept>
#include <string>
#include <string_view>

namespace smes {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kInconsistent,  // plan/decision/stats disagree with each other
  kInfeasible,
  kParse,
  kIo,
  kNumeric,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInconsistent: return "inconsistent";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNumeric: return "numeric";
  }
  return "unknown";
}

// Every failure in the library surfaces as an smes::Error carrying a code so
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Validation errors are caused by bad input; everything else is a runtime
  // failure (I/O, numerical blow-up).
  bool is_validation() const noexcept {
    return code_ != ErrorCode::kIo && code_ != ErrorCode::kNumeric;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void check(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace smes
