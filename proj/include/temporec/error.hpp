/*
 * Copyright 2026 The temporec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace temporec {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kBackend = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const { return ExitCode::kUsage; }
};

// Bad configuration, bad arguments, or a stage run out of order.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kData; }
};

// Remote chat or embedding service failure. `fatal` marks errors that
// were not retried (4xx responses, dimension mismatches).
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool fatal = false)
      : Error(what), fatal_(fatal) {}
  bool fatal() const { return fatal_; }
  ExitCode exit_code() const override { return ExitCode::kBackend; }

 private:
  bool fatal_;
};

}  // namespace temporec
