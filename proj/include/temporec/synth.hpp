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
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "temporec/dataset.hpp"

namespace temporec {

// Generator settings. Items cycle through topics (item i has topic
// i % n_topics) and flavors ((i / n_topics) % n_flavors). Each user has a
// long-term topic and flavor; a drifting user's last recent_k train
// interactions plus all validation and test interactions move to a second
// topic. Validation and test items always carry the user's flavor, while
// the drifted train items keep it only with probability `recent_flavor_purity`.
struct SynthConfig {
  std::size_t n_users = 100;
  std::size_t n_items = 300;
  std::size_t n_topics = 10;
  std::size_t n_flavors = 1;
  double drift_prob = 0.5;
  double interactions_mean = 12.0;
  double interactions_std = 4.0;
  std::size_t min_interactions = 3;
  std::size_t recent_k = 5;
  SplitRatios ratios;
  double flavor_purity = 1.0;
  double recent_flavor_purity = 1.0;
  std::uint64_t rng_seed = 42;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig defaults = {});

struct SynthUserTruth {
  std::string user_id;
  std::size_t long_topic = 0;
  std::size_t short_topic = 0;
  std::size_t flavor = 0;
  bool drifted = false;
  // Index of the first drifted interaction in chronological order (equal
  // to the history length when the user did not drift).
  std::size_t drift_start = 0;
};

struct SynthData {
  std::vector<Interaction> interactions;  // sorted by (user, timestamp, item)
  std::vector<ItemMeta> items;
  std::vector<std::size_t> item_topic;
  std::vector<std::size_t> item_flavor;
  std::vector<std::string> topic_names;
  std::vector<std::string> flavor_names;
  std::vector<SynthUserTruth> users;
};

SynthData generate(const SynthConfig& cfg);

nlohmann::json truth_to_json(const SynthData& data);

// Writes interactions.jsonl, items.jsonl and truth.json under `dir`.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

}  // namespace temporec
