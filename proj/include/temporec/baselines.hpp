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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "temporec/dataset.hpp"
#include "temporec/matrix.hpp"
#include "temporec/model.hpp"

namespace temporec {

// Centric: mean of the user's train-item embeddings (repeats count).
std::vector<double> centric_user_embedding(std::span<const std::uint32_t> train_items,
                                           const Matrix& item_embeddings);

// Temp-Fusion numeric profiles: mean of the last min(recent_k, n) train
// items, and mean of the whole train history.
std::pair<std::vector<double>, std::vector<double>> tempfusion_user_embeddings(
    std::span<const std::uint32_t> train_items, const Matrix& item_embeddings,
    std::size_t recent_k = 5);

// Row-per-user matrices of the above for every user in `split`.
Matrix centric_features(const IndexedSplit& split, const Matrix& item_embeddings);
std::pair<Matrix, Matrix> tempfusion_features(const IndexedSplit& split,
                                              const Matrix& item_embeddings,
                                              std::size_t recent_k = 5);

// Catalog indices by descending train count, ties by ascending index.
std::vector<std::uint32_t> popularity_rank(const IndexedSplit& split);
// Item ids in popularity order; throws DataError on an empty train set.
std::vector<std::string> popularity_rank(const SplitDataset& split);

// Popularity as a score vector: train count of each item.
std::vector<double> popularity_scores(const IndexedSplit& split);

// Implicit-feedback matrix factorization parameters, flat layout
// P [users x k] | Q [items x k] | b_user [users] | b_item [items].
class MfParams {
 public:
  MfParams() = default;
  MfParams(std::size_t n_users, std::size_t n_items, std::size_t k);

  // Factors ~ N(0, 0.01), biases zero.
  static MfParams init(std::size_t n_users, std::size_t n_items, std::size_t k,
                       std::uint64_t seed);

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t k() const { return k_; }

  std::span<double> user(std::size_t u) { return {data_.data() + u * k_, k_}; }
  std::span<const double> user(std::size_t u) const { return {data_.data() + u * k_, k_}; }
  std::span<double> item(std::size_t i) { return {data_.data() + item_off() + i * k_, k_}; }
  std::span<const double> item(std::size_t i) const {
    return {data_.data() + item_off() + i * k_, k_};
  }
  double& user_bias(std::size_t u) { return data_[bias_off() + u]; }
  double user_bias(std::size_t u) const { return data_[bias_off() + u]; }
  double& item_bias(std::size_t i) { return data_[bias_off() + n_users_ + i]; }
  double item_bias(std::size_t i) const { return data_[bias_off() + n_users_ + i]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  friend bool operator==(const MfParams&, const MfParams&) = default;

 private:
  std::size_t item_off() const { return n_users_ * k_; }
  std::size_t bias_off() const { return (n_users_ + n_items_) * k_; }

  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::size_t k_ = 0;
  std::vector<double> data_;
};

// sigmoid(p_u . q_i + b_u + b_i); throws DataError on out-of-range ids.
double mf_score(const MfParams& params, std::size_t user, std::size_t item);

void mf_score_users(const MfParams& params, std::span<const std::uint32_t> users,
                    std::vector<double>& out);

struct MfTrainResult {
  MfParams params;
  AdamState adam;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_recall10 = 0.0;
};

using MfValidator = std::function<double(const MfParams&, std::size_t epoch)>;

// Pointwise BCE with the shared negative sampler, Adam and early stopping
// on validation Recall@10. Dropout does not apply.
MfTrainResult mf_train(const IndexedSplit& split, std::size_t k, const TrainConfig& cfg,
                       const MfValidator& validator = {});

}  // namespace temporec
