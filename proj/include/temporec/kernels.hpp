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

// Batch kernels behind training and scoring. Each parallel kernel has a
// serial reference with the plainest possible loop structure; the tests
// hold the two against each other and the benchmark target times them.
//
// Parallel gradients are reduced over fixed chunks of kGradChunk examples
// in chunk order, so results do not depend on the OpenMP thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "temporec/dataset.hpp"
#include "temporec/matrix.hpp"
#include "temporec/model.hpp"

namespace temporec::kernels {

inline constexpr std::size_t kGradChunk = 64;

struct Batch {
  std::span<const Example> examples;
  // examples.size() x h keep flags (1 keep, 0 drop); empty disables dropout.
  std::span<const std::uint8_t> keep;
  double dropout_rate = 0.0;
};

// Mean BCE over the batch; writes d(mean BCE)/d(params) into `grad`.
double batch_gradient(const ScorerParams& params, const UserFeatures& features,
                      const Matrix& items, const Batch& batch, ScorerParams& grad);

double batch_gradient_serial(const ScorerParams& params, const UserFeatures& features,
                             const Matrix& items, const Batch& batch, ScorerParams& grad);

// Scores every catalog item for each user in `users`; out is users x items.
// The parallel form projects items through the item half of layer 1 once.
void score_catalog(const ScorerParams& params, const UserFeatures& features, const Matrix& items,
                   std::span<const std::uint32_t> users, std::vector<double>& out);

void score_catalog_serial(const ScorerParams& params, const UserFeatures& features,
                          const Matrix& items, std::span<const std::uint32_t> users,
                          std::vector<double>& out);

}  // namespace temporec::kernels
