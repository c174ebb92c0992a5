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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace temporec {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct ItemMeta {
  std::string item_id;
  std::string title;
  std::string description;
};

enum class InteractionFormat { kJsonl, kCsv };

// Parses, deduplicates exact (user, item, timestamp) triples and sorts by
// (user_id, timestamp, item_id). Throws DataError naming the 1-based line
// of a malformed record, or on an empty file.
std::vector<Interaction> load_interactions(const std::filesystem::path& path,
                                           InteractionFormat format);
std::vector<Interaction> parse_interactions(std::string_view text,
                                            InteractionFormat format);

std::vector<ItemMeta> load_item_meta(const std::filesystem::path& path);

void write_interactions_jsonl(const std::filesystem::path& path,
                              std::span<const Interaction> rows);
void write_item_meta_jsonl(const std::filesystem::path& path,
                           std::span<const ItemMeta> items);

// Fraction of alphabetic code points that are ASCII letters. Text with no
// alphabetic code points yields 0.
double ascii_letter_ratio(std::string_view utf8);

// Keeps items whose description is strictly longer than `min_desc_chars`
// code points and whose ASCII-letter ratio is at least `min_ascii_ratio`.
std::vector<ItemMeta> filter_items(std::span<const ItemMeta> meta,
                                   std::size_t min_desc_chars = 500,
                                   double min_ascii_ratio = 0.9);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct UserSplit {
  std::string user_id;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
};

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double profile_size_mean = 0.0;
  double profile_size_median = 0.0;
  std::size_t profile_size_mode = 0;
  double profile_size_stddev = 0.0;
  std::size_t profile_size_max = 0;
};

// Per-user chronological holdout. Users are sorted by id; `item_catalog`
// is sorted ascending so an item's index doubles as its id rank.
struct SplitDataset {
  std::vector<UserSplit> users;
  std::vector<std::string> item_catalog;
  DatasetStats stats;

  std::optional<std::size_t> user_index(std::string_view user_id) const;
  std::optional<std::size_t> item_index(std::string_view item_id) const;
};

// Index cuts for a history of length n: train is [0, first), validation is
// [first, second), test is [second, n).
std::pair<std::size_t, std::size_t> split_cuts(std::size_t n, const SplitRatios& ratios);

// Splits each user's interactions (any order; sorted internally by
// timestamp then item_id). Users with fewer than `min_interactions` are
// dropped; throws DataError("empty split") if none remain.
SplitDataset temporal_split(std::span<const Interaction> interactions,
                            const SplitRatios& ratios = {},
                            std::size_t min_interactions = 3);

DatasetStats compute_stats(std::span<const std::size_t> profile_sizes,
                           std::size_t n_items);

struct LabeledExample {
  std::string user_id;
  std::string item_id;
  int label = 0;
};

// Negatives for one user: for every train positive draw `n_neg_per_pos`
// distinct items uniformly from the catalog minus everything the user has
// touched. If the pool is smaller than requested, the whole pool is used
// for that positive and `warn` (when set) is called.
std::vector<LabeledExample> sample_negatives(
    const SplitDataset& split, std::string_view user_id, std::size_t n_neg_per_pos,
    std::uint64_t rng_seed,
    const std::function<void(const std::string&)>& warn = {});

// Index-based variant used by the trainers. `pool` must be sorted item
// indices outside the user's history; returns sampled item indices.
std::vector<std::uint32_t> sample_from_pool(std::span<const std::uint32_t> pool,
                                            std::size_t n_positives,
                                            std::size_t n_neg_per_pos,
                                            std::uint64_t rng_seed);

// Split manifest: per-user index cuts plus a content hash over the
// canonical serialization of the split.
nlohmann::json split_manifest(const SplitDataset& split);
nlohmann::json stats_to_json(const DatasetStats& stats);

// Full split serialization used to hand the dataset between stages.
nlohmann::json split_to_json(const SplitDataset& split);
SplitDataset split_from_json(const nlohmann::json& j);

// Drops interactions whose item is not in `kept`.
std::vector<Interaction> restrict_to_items(std::span<const Interaction> rows,
                                           std::span<const ItemMeta> kept);

// Dense view of a split for the trainers: item indices per user, in
// chronological order, plus the sorted sets the samplers and rankers need.
struct IndexedSplit {
  std::size_t n_items = 0;
  std::vector<std::vector<std::uint32_t>> train;
  std::vector<std::vector<std::uint32_t>> validation;
  std::vector<std::vector<std::uint32_t>> test;
  // Sorted unique items of train, and of train + validation.
  std::vector<std::vector<std::uint32_t>> train_seen;
  std::vector<std::vector<std::uint32_t>> train_val_seen;
  // Sorted items the user never touched in any split.
  std::vector<std::vector<std::uint32_t>> negative_pool;

  std::size_t n_users() const { return train.size(); }
};

IndexedSplit index_split(const SplitDataset& split);

struct Example {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::uint8_t label = 0;
};

// One epoch of training examples: every train positive plus
// `n_neg_per_pos` sampled negatives each, shuffled. Depends only on
// (split, n_neg_per_pos, seed, epoch), so every trainer sees the same data.
std::vector<Example> build_epoch_examples(const IndexedSplit& split, std::size_t n_neg_per_pos,
                                          std::uint64_t seed, std::uint64_t epoch);

}  // namespace temporec
