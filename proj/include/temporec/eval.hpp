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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "temporec/dataset.hpp"

namespace temporec {

// Top-K catalog indices by descending score, ties broken by ascending index
// (the catalog is sorted by id, so this is the item_id tie rule). `exclude`
// must be sorted. Throws if every item is excluded.
std::vector<std::uint32_t> rank_items(std::span<const double> scores,
                                      std::span<const std::uint32_t> exclude, std::size_t k);

// String-keyed convenience form.
std::vector<std::string> rank_items(const std::map<std::string, double>& scores,
                                    const std::vector<std::string>& exclude, std::size_t k);

double recall_at_k(std::span<const std::uint32_t> top_k, std::span<const std::uint32_t> test_items);

// Binary relevance, 1/log2(rank + 1) discount, ideal DCG over
// min(k, |test|) hits.
double ndcg_at_k(std::span<const std::uint32_t> top_k, std::span<const std::uint32_t> test_items,
                 std::size_t k);

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value of Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  double mean_diff = 0.0;
  bool significant = false;
};

// Paired two-sided t-test on a - b; significant means p < alpha and a is
// better on average.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                          double alpha = 0.05);

struct UserMetrics {
  std::string user_id;
  double recall10 = 0.0;
  double recall20 = 0.0;
  double ndcg10 = 0.0;
  double ndcg20 = 0.0;
  std::optional<double> alpha_short;
  std::optional<double> alpha_long;
};

struct SignificanceEntry {
  std::string metric;
  std::string baseline_method;
  double p_value = 1.0;
  bool significant = false;
};

struct EvalReport {
  std::string method;
  std::vector<UserMetrics> users;
  std::map<std::string, double> aggregate;
  std::vector<SignificanceEntry> significance;

  // Per-user values of "recall@10", "ndcg@10", "recall@20" or "ndcg@20".
  std::vector<double> metric_values(std::string_view metric) const;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"recall@10", "ndcg@10", "recall@20", "ndcg@20"};
  return names;
}

// Fills `scores` (size n_items) for one user. May throw to signal a missing
// user representation.
using UserScorer = std::function<void(std::size_t user, std::span<double> scores)>;
using AttentionProbe = std::function<std::pair<double, double>(std::size_t user)>;

// Test-split evaluation: candidates are the catalog minus train and
// validation items. Users with an empty test set are skipped.
EvalReport evaluate(std::string method, const SplitDataset& split, const IndexedSplit& index,
                    const UserScorer& scorer, const AttentionProbe& attention = {});

// Same, from a precomputed score matrix (row u = user u over the catalog).
using ScoreBlockFn =
    std::function<void(std::span<const std::uint32_t> users, std::vector<double>& out)>;
EvalReport evaluate_blocked(std::string method, const SplitDataset& split,
                            const IndexedSplit& index, const ScoreBlockFn& score_block,
                            const AttentionProbe& attention = {}, std::size_t block = 256);

void recompute_aggregate(EvalReport& report);

// Appends significance entries of `report` against `baseline` for every
// metric; users are paired by id.
void add_significance(EvalReport& report, const EvalReport& baseline, double alpha = 0.05);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Mean validation Recall@10 over users with validation items, ranking the
// catalog minus train items.
double validation_recall_at_10(const IndexedSplit& index, const ScoreBlockFn& score_block,
                               std::size_t block = 256);

}  // namespace temporec
