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

#include "temporec/fusion.hpp"

#include <cmath>

#include "temporec/error.hpp"
#include "temporec/matrix.hpp"
#include "temporec/rng.hpp"

namespace temporec {

AttentionParams AttentionParams::init(std::size_t d, std::uint64_t seed) {
  AttentionParams p(d);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& w : p.w_a) w = rng.uniform(-bound, bound);
  return p;
}

FusionOutput attention_forward(std::span<const double> r_short, std::span<const double> r_long,
                               std::span<const double> w_a, double logit_shift) {
  if (r_short.size() != r_long.size() || r_short.size() != w_a.size()) {
    throw ConfigError("attention_forward: dimension mismatch (" +
                      std::to_string(r_short.size()) + ", " + std::to_string(r_long.size()) +
                      ", " + std::to_string(w_a.size()) + ")");
  }
  FusionOutput out;
  out.logit_short = dot(w_a, r_short) + logit_shift;
  out.logit_long = dot(w_a, r_long) + logit_shift;
  out.alpha_short = stable_sigmoid(out.logit_short - out.logit_long);
  out.alpha_long = 1.0 - out.alpha_short;
  out.e_u.resize(r_short.size());
  for (std::size_t j = 0; j < r_short.size(); ++j) {
    out.e_u[j] = out.alpha_short * r_short[j] + out.alpha_long * r_long[j];
  }
  return out;
}

FusionGrads attention_backward(std::span<const double> r_short, std::span<const double> r_long,
                               std::span<const double> w_a, const FusionOutput& out,
                               std::span<const double> upstream) {
  const std::size_t d = r_short.size();
  const double a = out.alpha_short;
  double d_alpha = 0.0;
  for (std::size_t j = 0; j < d; ++j) d_alpha += upstream[j] * (r_short[j] - r_long[j]);
  const double d_logit = d_alpha * a * (1.0 - a);
  FusionGrads g{std::vector<double>(d), std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t j = 0; j < d; ++j) {
    g.w_a[j] = d_logit * (r_short[j] - r_long[j]);
    g.r_short[j] = a * upstream[j] + d_logit * w_a[j];
    g.r_long[j] = (1.0 - a) * upstream[j] - d_logit * w_a[j];
  }
  return g;
}

double fuse_into(std::span<const double> r_short, std::span<const double> r_long,
                 std::span<const double> w_a, std::span<double> e_u) {
  const double diff = dot(w_a, r_short) - dot(w_a, r_long);
  const double a = stable_sigmoid(diff);
  const double b = 1.0 - a;
  for (std::size_t j = 0; j < e_u.size(); ++j) e_u[j] = a * r_short[j] + b * r_long[j];
  return a;
}

void accumulate_attention_grad(std::span<const double> r_short, std::span<const double> r_long,
                               double alpha_short, std::span<const double> upstream,
                               std::span<double> grad_w_a) {
  double d_alpha = 0.0;
  for (std::size_t j = 0; j < upstream.size(); ++j) {
    d_alpha += upstream[j] * (r_short[j] - r_long[j]);
  }
  const double d_logit = d_alpha * alpha_short * (1.0 - alpha_short);
  for (std::size_t j = 0; j < grad_w_a.size(); ++j) {
    grad_w_a[j] += d_logit * (r_short[j] - r_long[j]);
  }
}

}  // namespace temporec
