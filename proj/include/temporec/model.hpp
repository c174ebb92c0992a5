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
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "temporec/dataset.hpp"
#include "temporec/matrix.hpp"

namespace temporec {

enum class ScoringVariant { kFull, kShortOnly, kLongOnly, kGeneralOnly, kDotProduct };

std::string_view to_string(ScoringVariant v);
ScoringVariant scoring_variant_from_string(std::string_view name);

// Whether the variant scores through attention fusion of (short, long).
inline bool uses_fusion(ScoringVariant v) {
  return v == ScoringVariant::kFull || v == ScoringVariant::kDotProduct;
}

struct ModelShape {
  std::size_t d = 384;
  std::size_t h = 128;
  ScoringVariant variant = ScoringVariant::kFull;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// All learnable weights in one contiguous buffer, so that the optimizer and
// gradient checks can treat them as a flat vector. The same type holds
// gradients. Layout: w_a [d] | w1 [h x 2d, row j = hidden unit j] |
// b1 [h] | w2 [h] | b2 [1].
class ScorerParams {
 public:
  ScorerParams() = default;
  explicit ScorerParams(const ModelShape& shape);

  // w_a ~ U(+-1/sqrt(d)), w1 ~ U(+-1/sqrt(2d)), w2 ~ U(+-1/sqrt(h)),
  // biases zero.
  static ScorerParams init(const ModelShape& shape, std::uint64_t seed);

  const ModelShape& shape() const { return shape_; }
  std::size_t d() const { return shape_.d; }
  std::size_t h() const { return shape_.h; }

  std::span<double> w_a() { return seg(0, shape_.d); }
  std::span<const double> w_a() const { return seg(0, shape_.d); }
  std::span<double> w1() { return seg(off_w1(), 2 * shape_.d * shape_.h); }
  std::span<const double> w1() const { return seg(off_w1(), 2 * shape_.d * shape_.h); }
  std::span<double> w1_row(std::size_t j) { return seg(off_w1() + j * 2 * shape_.d, 2 * shape_.d); }
  std::span<const double> w1_row(std::size_t j) const {
    return seg(off_w1() + j * 2 * shape_.d, 2 * shape_.d);
  }
  std::span<double> b1() { return seg(off_b1(), shape_.h); }
  std::span<const double> b1() const { return seg(off_b1(), shape_.h); }
  std::span<double> w2() { return seg(off_b1() + shape_.h, shape_.h); }
  std::span<const double> w2() const { return seg(off_b1() + shape_.h, shape_.h); }
  double& b2() { return data_.back(); }
  double b2() const { return data_.back(); }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  friend bool operator==(const ScorerParams&, const ScorerParams&) = default;

 private:
  std::size_t off_w1() const { return shape_.d; }
  std::size_t off_b1() const { return shape_.d + 2 * shape_.d * shape_.h; }
  std::span<double> seg(std::size_t off, std::size_t n) { return {data_.data() + off, n}; }
  std::span<const double> seg(std::size_t off, std::size_t n) const {
    return {data_.data() + off, n};
  }

  ModelShape shape_;
  std::vector<double> data_;
};

struct MlpActivations {
  std::vector<double> pre;     // layer-1 pre-activation
  std::vector<double> hidden;  // after ReLU and dropout
  double logit = 0.0;
  double y_hat = 0.5;
};

// y_hat = sigmoid(w2 . (ReLU(w1 [e_u; e_i] + b1) * mask) + b2). `dropout_mask`
// holds per-unit multipliers (0 or 1/(1-p)); empty means inference.
MlpActivations mlp_forward(std::span<const double> e_u, std::span<const double> e_i,
                           const ScorerParams& params,
                           std::span<const double> dropout_mask = {});

inline constexpr double kProbClamp = 1e-7;

// Binary cross-entropy with y_hat clamped to [1e-7, 1 - 1e-7].
double bce_loss(double y_hat, int y);

// Per-user input embeddings. A variant reads only the matrices it needs;
// unused ones may be empty.
struct UserFeatures {
  Matrix short_term;
  Matrix long_term;
  Matrix general;
};

// Throws ConfigError naming the variant when a required matrix is missing
// or has the wrong shape.
void check_features(ScoringVariant variant, const UserFeatures& features, std::size_t n_users,
                    std::size_t d);

// Writes user u's embedding under the params' variant into `e_u`; returns
// alpha_short for fusion variants and NaN otherwise.
double user_embedding(const ScorerParams& params, const UserFeatures& features, std::size_t u,
                      std::span<double> e_u);

// Single-pair score under `variant`. Spans for unused inputs may be empty.
double score_variant(ScoringVariant variant, std::span<const double> r_short,
                     std::span<const double> r_long, std::span<const double> r_general,
                     std::span<const double> e_i, const ScorerParams& params);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 2048;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout_rate = 0.2;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  std::size_t n_neg_per_pos = 4;
  std::uint64_t rng_seed = 42;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

// Log-odds of a positive among one positive and `n_neg` sampled negatives.
inline double prior_logit(std::size_t n_neg) {
  return n_neg == 0 ? 0.0 : -std::log(static_cast<double>(n_neg));
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update; advances state.t before use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg);

// Tracks the best validation metric; stops after `patience` epochs in a row
// without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when `metric` is a new best.
  bool observe(std::size_t epoch, double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = -1.0;
  bool any_ = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_recall10 = 0.0;
  double seconds = 0.0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  ScorerParams params;
  AdamState adam;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_recall10 = 0.0;
};

// Validation hook: returns the monitored metric for the current weights.
using Validator = std::function<double(const ScorerParams&, std::size_t epoch)>;

// Mini-batch Adam on mean BCE over positives and freshly sampled negatives
// each epoch, early-stopped on validation Recall@10 (or `validator` when
// given). Returns the weights of the best epoch.
TrainResult train_scorer(const IndexedSplit& split, const UserFeatures& features,
                         const Matrix& item_embeddings, const ModelShape& shape,
                         const TrainConfig& cfg, const Validator& validator = {});

// Inference scores for `users` x catalog into `out` (row-major).
void score_users(const ScorerParams& params, const UserFeatures& features,
                 const Matrix& item_embeddings, std::span<const std::uint32_t> users,
                 std::vector<double>& out);

// Attention weights (alpha_short, alpha_long) of user `u` for fusion
// variants.
std::pair<double, double> attention_weights(const ScorerParams& params,
                                            const UserFeatures& features, std::size_t u);

}  // namespace temporec
