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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "temporec/baselines.hpp"
#include "temporec/dataset.hpp"
#include "temporec/encoder.hpp"
#include "temporec/eval.hpp"
#include "temporec/matrix.hpp"
#include "temporec/model.hpp"
#include "temporec/profiles.hpp"

namespace temporec {

// Encoded inputs for one split: item embeddings in catalog order and the
// three profile embeddings per user in split order.
struct ExperimentData {
  SplitDataset split;
  IndexedSplit index;
  Matrix items;
  UserFeatures profiles;
};

// Encodes items and profiles through `encoder` (and `cache` when given).
// Throws DataError when a catalog item has no metadata or a user has no
// profile.
ExperimentData prepare_experiment(SplitDataset split, std::span<const ItemMeta> items,
                                  std::span<const TemporalProfile> profiles,
                                  TextEncoder& encoder, EmbeddingCache* cache = nullptr);

enum class Method { kCentric, kTempFusion, kPopularity, kMf, kLlmTp };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
const std::vector<Method>& all_methods();

struct ExperimentSettings {
  std::size_t h = 128;
  TrainConfig train;
  std::size_t mf_k = 64;
  std::size_t recent_k = 5;
};

// A trained (or, for popularity, counted) recommender ready to score.
struct TrainedMethod {
  std::string name;
  Method method = Method::kLlmTp;
  ScoringVariant variant = ScoringVariant::kFull;
  UserFeatures features;
  std::optional<TrainResult> scorer;
  std::optional<MfTrainResult> mf;
  std::vector<double> popularity;
};

// Input features of an embedding-based method: Centric fills the general
// slot, Temp-Fusion the numeric short/long slots, LLM-TP the profiles.
UserFeatures method_features(Method m, const ExperimentData& data, std::size_t recent_k);
ScoringVariant method_variant(Method m);

TrainedMethod train_method(Method m, const ExperimentData& data, const ExperimentSettings& s);

// LLM-TP profiles scored under an ablation variant.
TrainedMethod train_variant(ScoringVariant v, const ExperimentData& data,
                            const ExperimentSettings& s);

EvalReport evaluate_trained(const TrainedMethod& m, const ExperimentData& data);

// Per-user mean over runs (e.g. seeds) of reports with the same users.
EvalReport average_reports(std::span<const EvalReport> runs);

}  // namespace temporec
