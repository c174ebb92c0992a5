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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "temporec/baselines.hpp"
#include "temporec/model.hpp"

namespace temporec {

struct Tensor {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Binary layout, little-endian: "TMLP", u32 version, u32 d, u32 h,
// string method, string variant, u32 tensor count, tensors (string name,
// u64 rows, u64 cols, f64 data), then u64 adam_t, u64 n, f64 m[n], f64 v[n].
// Strings are u32 length + bytes.
struct Checkpoint {
  std::string method;
  std::string variant;
  std::uint32_t d = 0;
  std::uint32_t h = 0;
  std::vector<Tensor> tensors;
  AdamState adam;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const std::string& method, const ScorerParams& params,
                         const AdamState& adam);
ScorerParams scorer_from_checkpoint(const Checkpoint& ckpt);

Checkpoint to_checkpoint(const std::string& method, const MfParams& params,
                         const AdamState& adam);
MfParams mf_from_checkpoint(const Checkpoint& ckpt);

}  // namespace temporec
