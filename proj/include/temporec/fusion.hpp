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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace temporec {

// Logistic function evaluated without overflow for large |x|.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// The learnable 1 x d attention vector and its gradient buffer.
struct AttentionParams {
  std::vector<double> w_a;
  std::vector<double> grad_w_a;

  explicit AttentionParams(std::size_t d = 0) : w_a(d, 0.0), grad_w_a(d, 0.0) {}
  std::size_t dim() const { return w_a.size(); }

  // w_a ~ U(-1/sqrt(d), 1/sqrt(d)).
  static AttentionParams init(std::size_t d, std::uint64_t seed);
};

struct FusionOutput {
  std::vector<double> e_u;
  double alpha_short = 0.5;
  double alpha_long = 0.5;
  double logit_short = 0.0;
  double logit_long = 0.0;
};

// Two-way softmax over w_a . r_short and w_a . r_long, written as
// sigmoid(logit_short - logit_long), then e_u = a r_short + (1 - a) r_long.
// `logit_shift` is added to both logits and must not change the result.
FusionOutput attention_forward(std::span<const double> r_short, std::span<const double> r_long,
                               std::span<const double> w_a, double logit_shift = 0.0);

struct FusionGrads {
  std::vector<double> r_short;
  std::vector<double> r_long;
  std::vector<double> w_a;
};

FusionGrads attention_backward(std::span<const double> r_short, std::span<const double> r_long,
                               std::span<const double> w_a, const FusionOutput& out,
                               std::span<const double> upstream);

// In-place pieces used by the batch kernels.

// Writes e_u into `e_u` and returns alpha_short.
double fuse_into(std::span<const double> r_short, std::span<const double> r_long,
                 std::span<const double> w_a, std::span<double> e_u);

// Adds d loss / d w_a into `grad_w_a` given alpha_short and d loss / d e_u.
void accumulate_attention_grad(std::span<const double> r_short, std::span<const double> r_long,
                               double alpha_short, std::span<const double> upstream,
                               std::span<double> grad_w_a);

}  // namespace temporec
