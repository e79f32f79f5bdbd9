// Copyright 2026 The PAS Authors
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

#ifndef PAS_COMMON_HPP
#define PAS_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace pas {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: shape mismatch, out-of-range label, gamma outside [0,1], ...
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed file (checkpoint, IDX, path file). Carries the byte offset when known.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::int64_t offset = -1)
      : Error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
        offset_(offset) {}
  std::int64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t offset_;
};

/// Inconsistent run configuration (architecture mismatch, missing inputs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A configuration that is well-formed but deliberately not supported.
class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf detected in a forward or backward pass.
class NumericalError : public Error {
 public:
  using Error::Error;
};

template <typename T>
concept Scalar = std::is_same_v<T, float> || std::is_same_v<T, double>;

}  // namespace pas

#endif  // PAS_COMMON_HPP
