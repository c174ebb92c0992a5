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
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "temporec/dataset.hpp"
#include "temporec/http.hpp"

namespace temporec {

enum class ProfileKind { kShortTerm, kLongTerm, kGeneral };

std::string_view to_string(ProfileKind kind);
ProfileKind profile_kind_from_string(std::string_view name);

using ItemMetaIndex = std::unordered_map<std::string, ItemMeta>;
ItemMetaIndex index_items(std::span<const ItemMeta> items);

// A prompt for one profile kind. Prompt files hold an optional system part,
// separated from the user template by a line containing only "---". A
// leading block of '#' lines is skipped.
struct PromptTemplate {
  ProfileKind kind = ProfileKind::kShortTerm;
  std::string system_text;
  std::string user_text_template;

  // Substitutes {history_block} and {recent_block}; throws ConfigError if
  // any other {placeholder} remains.
  std::string render(std::string_view history_block, std::string_view recent_block) const;

  static PromptTemplate builtin(ProfileKind kind);
  static PromptTemplate parse(ProfileKind kind, std::string_view file_text);
  static PromptTemplate load(ProfileKind kind, const std::filesystem::path& path);
};

struct HistoryBlocks {
  std::string history_block;
  std::string recent_block;
};

// One line per interaction, oldest first: ISO date, title and the first 200
// description chars, joined by a space-padded U+2014. history_block covers
// the last `max_items` interactions, recent_block the last `recent_k`.
HistoryBlocks render_history_block(std::span<const Interaction> history,
                                   const ItemMetaIndex& meta, std::size_t max_items = 50,
                                   std::size_t recent_k = 5);

// Title field of each rendered line.
std::vector<std::string> block_titles(std::string_view block);

struct ProfileRequest {
  std::string user_id;
  ProfileKind kind = ProfileKind::kShortTerm;
  std::string system_text;
  std::string user_prompt;
  HistoryBlocks blocks;
};

class ProfileBackend {
 public:
  virtual ~ProfileBackend() = default;
  // Recorded as provenance and folded into the prompt hash.
  virtual std::string model_id() const = 0;
  virtual std::string complete(const ProfileRequest& request) = 0;
  // Rendered prompts longer than this are shortened by dropping the oldest
  // history lines.
  virtual std::size_t max_prompt_chars() const { return static_cast<std::size_t>(-1); }
};

inline constexpr std::string_view kShortPreamble = "Recently, this user engaged with:";
inline constexpr std::string_view kLongPreamble =
    "Across their whole history, this user keeps returning to:";
inline constexpr std::string_view kGeneralPreamble = "Overall, this user enjoys:";

// Deterministic offline generator working from the history blocks only.
// Short term lists the recent titles. Long term lists the most frequent
// recurring title tokens from before the recent window. General lists the
// most frequent title tokens of the whole history.
std::string template_profile(const HistoryBlocks& blocks, ProfileKind kind);

class TemplateBackend final : public ProfileBackend {
 public:
  std::string model_id() const override { return "template"; }
  std::string complete(const ProfileRequest& request) override {
    return template_profile(request.blocks, request.kind);
  }
};

struct ChatConfig {
  std::string base_url;
  std::string api_key;
  std::string model = "gpt-4o-mini";
  double temperature = 0.0;
  int max_tokens = 512;
  std::size_t max_prompt_chars = 48000;
  RetryPolicy retry;

  // TEMPOREC_API_BASE / TEMPOREC_API_KEY.
  static ChatConfig from_env();
};

// OpenAI-compatible chat-completions client.
class ChatBackend final : public ProfileBackend {
 public:
  explicit ChatBackend(ChatConfig cfg);
  std::string model_id() const override { return cfg_.model; }
  std::string complete(const ProfileRequest& request) override;
  std::size_t max_prompt_chars() const override { return cfg_.max_prompt_chars; }

  std::string chat(const std::string& system_text, const std::string& user_text);

 private:
  ChatConfig cfg_;
  BaseUrl base_;
};

struct CachedProfile {
  std::string user_id;
  ProfileKind kind = ProfileKind::kShortTerm;
  std::string prompt_hash;
  std::string model;
  std::string text;
};

// JSONL profile cache. Concurrent lookups, serialized appends; every insert
// is flushed to the backing file when one is attached.
class ProfileCache {
 public:
  ProfileCache() = default;
  explicit ProfileCache(std::filesystem::path path);

  std::optional<std::string> lookup(std::string_view user_id, ProfileKind kind,
                                    std::string_view prompt_hash) const;
  void insert(const CachedProfile& entry);
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, int, std::string>;
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<Key, CachedProfile> entries_;
};

// Content hash of (template, rendered history, model id).
std::string prompt_hash(const PromptTemplate& tmpl, const HistoryBlocks& blocks,
                        std::string_view model_id);

// Renders, truncates to the backend budget, consults the cache and calls
// the backend on a miss. Empty completions throw and are not cached.
std::string generate_profile(std::string_view user_id, const HistoryBlocks& blocks,
                             const PromptTemplate& tmpl, ProfileBackend& backend,
                             ProfileCache* cache = nullptr);

struct TemporalProfile {
  std::string user_id;
  std::string short_text;
  std::string long_text;
  std::optional<std::string> general_text;
  std::string provenance;
  std::string prompt_hash;
};

struct ProfileOptions {
  std::size_t max_items = 50;
  std::size_t recent_k = 5;
  bool include_general = true;
  // Upper bound on concurrent backend requests.
  std::size_t concurrency = 4;
};

struct PromptSet {
  PromptTemplate short_term = PromptTemplate::builtin(ProfileKind::kShortTerm);
  PromptTemplate long_term = PromptTemplate::builtin(ProfileKind::kLongTerm);
  PromptTemplate general = PromptTemplate::builtin(ProfileKind::kGeneral);

  // Loads short_term.txt / long_term.txt / general.txt when present.
  static PromptSet from_dir(const std::filesystem::path& dir);
};

// Profiles for every user of `split`, built from train interactions only.
// Output order follows split.users.
std::vector<TemporalProfile> generate_profiles(const SplitDataset& split,
                                               const ItemMetaIndex& meta,
                                               const PromptSet& prompts,
                                               ProfileBackend& backend, ProfileCache* cache,
                                               const ProfileOptions& options = {});

nlohmann::json profiles_to_json(std::span<const TemporalProfile> profiles);
std::vector<TemporalProfile> profiles_from_json(const nlohmann::json& j);

}  // namespace temporec
