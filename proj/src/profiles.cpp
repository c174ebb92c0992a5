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

#include "temporec/profiles.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "temporec/error.hpp"
#include "temporec/hash.hpp"
#include "temporec/text.hpp"

namespace temporec {
namespace {

constexpr std::string_view kSeparator = " \xE2\x80\x94 ";  // U+2014 with a space each side

constexpr std::string_view kSystemText =
    "You analyze a person's consumption history and write concise, factual "
    "summaries of their preferences. Do not invent items that are not listed.";

constexpr std::string_view kShortUser =
    "Here is the user's interaction history, oldest first:\n"
    "{history_block}\n\n"
    "Their most recent interactions are:\n"
    "{recent_block}\n\n"
    "Focus on the recent interactions. Describe the user's short-term interests: "
    "what they have been engaging with lately and which passing themes, genres or "
    "moods those latest choices point to. Answer in one paragraph.";

constexpr std::string_view kLongUser =
    "Here is the user's interaction history, oldest first:\n"
    "{history_block}\n\n"
    "Consider the entire history. Describe the user's long-term preferences: the "
    "enduring interests and consistent themes that recur across all of their "
    "interactions, ignoring one-off choices. Answer in one paragraph.";

constexpr std::string_view kGeneralUser =
    "Here is the user's interaction history, oldest first:\n"
    "{history_block}\n\n"
    "Describe this user's preferences in a single paragraph.";

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open prompt file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::vector<std::string_view> split_lines(std::string_view block) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < block.size()) {
    auto end = block.find('\n', pos);
    if (end == std::string_view::npos) end = block.size();
    if (end > pos) lines.push_back(block.substr(pos, end - pos));
    pos = end + 1;
  }
  return lines;
}

std::string render_line(const Interaction& r, const ItemMetaIndex& meta) {
  std::string title;
  std::string desc;
  if (auto it = meta.find(r.item_id); it != meta.end()) {
    title = it->second.title;
    desc = utf8_prefix(it->second.description, 200);
  } else {
    title = "(unknown item " + r.item_id + ")";
  }
  std::replace(title.begin(), title.end(), '\n', ' ');
  std::replace(desc.begin(), desc.end(), '\n', ' ');
  std::string line = iso_date(r.timestamp);
  line.append(kSeparator).append(title).append(kSeparator).append(desc);
  return line;
}

std::string render_lines(std::span<const Interaction> rows, const ItemMetaIndex& meta) {
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out.push_back('\n');
    out += render_line(rows[i], meta);
  }
  return out;
}

std::string short_content(const HistoryBlocks& blocks) {
  auto titles = block_titles(blocks.recent_block);
  if (titles.empty()) return "(no recent items)";
  return join(titles, "; ") + ".";
}

// Top-10 title tokens of `titles` by count, ties alphabetical. With
// `recurring`, tokens seen once are dropped unless nothing else remains.
std::string top_tokens(const std::vector<std::string>& titles, bool recurring) {
  std::map<std::string, std::size_t> counts;
  for (const auto& title : titles) {
    for (auto& tok : tokenize(title)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  if (recurring && std::any_of(ranked.begin(), ranked.end(), [](auto& r) { return r.second > 1; })) {
    std::erase_if(ranked, [](const auto& r) { return r.second < 2; });
  }
  // Stable sort keeps alphabetical order among equal counts.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> top;
  for (std::size_t i = 0; i < ranked.size() && i < 10; ++i) top.push_back(ranked[i].first);
  return join(top, ", ") + ".";
}

// Enduring themes: recurring tokens from before the recent window, or from
// the whole history when it is no longer than that window.
std::string long_content(const HistoryBlocks& blocks) {
  auto titles = block_titles(blocks.history_block);
  if (titles.empty()) return "(no history)";
  const std::size_t recent = block_titles(blocks.recent_block).size();
  if (titles.size() > recent) titles.resize(titles.size() - recent);
  return top_tokens(titles, true);
}

std::string general_content(const HistoryBlocks& blocks) {
  const auto titles = block_titles(blocks.history_block);
  if (titles.empty()) return "(no history)";
  return top_tokens(titles, false);
}

}  // namespace

std::string_view to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::kShortTerm:
      return "short_term";
    case ProfileKind::kLongTerm:
      return "long_term";
    case ProfileKind::kGeneral:
      return "general";
  }
  return "short_term";
}

ProfileKind profile_kind_from_string(std::string_view name) {
  if (name == "short_term") return ProfileKind::kShortTerm;
  if (name == "long_term") return ProfileKind::kLongTerm;
  if (name == "general") return ProfileKind::kGeneral;
  throw ConfigError("unknown profile kind '" + std::string(name) + "'");
}

ItemMetaIndex index_items(std::span<const ItemMeta> items) {
  ItemMetaIndex idx;
  for (const auto& m : items) idx.emplace(m.item_id, m);
  return idx;
}

std::string PromptTemplate::render(std::string_view history_block,
                                   std::string_view recent_block) const {
  static const std::regex placeholder(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
  for (std::sregex_iterator it(user_text_template.begin(), user_text_template.end(), placeholder),
       end;
       it != end; ++it) {
    const std::string name = (*it)[1].str();
    if (name != "history_block" && name != "recent_block") {
      throw ConfigError("prompt template for " + std::string(to_string(kind)) +
                        " has unresolved placeholder {" + name + "}");
    }
  }
  std::string out = user_text_template;
  // Substituted text may itself contain braces, so resolve recent_block
  // markers before inserting the (larger) history block.
  replace_all(out, "{recent_block}", "\x01RECENT\x01");
  replace_all(out, "{history_block}", history_block);
  replace_all(out, "\x01RECENT\x01", recent_block);
  return out;
}

PromptTemplate PromptTemplate::builtin(ProfileKind kind) {
  PromptTemplate t;
  t.kind = kind;
  t.system_text = kSystemText;
  switch (kind) {
    case ProfileKind::kShortTerm:
      t.user_text_template = kShortUser;
      break;
    case ProfileKind::kLongTerm:
      t.user_text_template = kLongUser;
      break;
    case ProfileKind::kGeneral:
      t.user_text_template = kGeneralUser;
      break;
  }
  return t;
}

PromptTemplate PromptTemplate::parse(ProfileKind kind, std::string_view file_text) {
  PromptTemplate t;
  t.kind = kind;
  std::string text(file_text);
  replace_all(text, "\r\n", "\n");
  // Leading '#' lines (license, notes) are not part of the prompt.
  while (!text.empty() && text[0] == '#') {
    const auto nl = text.find('\n');
    text = nl == std::string::npos ? std::string() : text.substr(nl + 1);
  }
  while (!text.empty() && text[0] == '\n') text.erase(0, 1);
  const auto sep = text.find("\n---\n");
  if (sep != std::string::npos) {
    t.system_text = text.substr(0, sep);
    t.user_text_template = text.substr(sep + 5);
  } else {
    t.user_text_template = text;
  }
  while (!t.user_text_template.empty() && t.user_text_template.back() == '\n') {
    t.user_text_template.pop_back();
  }
  return t;
}

PromptTemplate PromptTemplate::load(ProfileKind kind, const std::filesystem::path& path) {
  return parse(kind, read_text(path));
}

PromptSet PromptSet::from_dir(const std::filesystem::path& dir) {
  PromptSet set;
  auto maybe = [&](ProfileKind kind, PromptTemplate& slot) {
    auto p = dir / (std::string(to_string(kind)) + ".txt");
    if (std::filesystem::exists(p)) slot = PromptTemplate::load(kind, p);
  };
  maybe(ProfileKind::kShortTerm, set.short_term);
  maybe(ProfileKind::kLongTerm, set.long_term);
  maybe(ProfileKind::kGeneral, set.general);
  return set;
}

HistoryBlocks render_history_block(std::span<const Interaction> history,
                                   const ItemMetaIndex& meta, std::size_t max_items,
                                   std::size_t recent_k) {
  const std::size_t n = history.size();
  HistoryBlocks b;
  b.history_block = render_lines(history.subspan(n - std::min(n, max_items)), meta);
  b.recent_block = render_lines(history.subspan(n - std::min(n, recent_k)), meta);
  return b;
}

std::vector<std::string> block_titles(std::string_view block) {
  std::vector<std::string> titles;
  for (auto line : split_lines(block)) {
    auto first = line.find(kSeparator);
    if (first == std::string_view::npos) continue;
    auto rest = line.substr(first + kSeparator.size());
    titles.emplace_back(rest.substr(0, rest.find(kSeparator)));
  }
  return titles;
}

std::string template_profile(const HistoryBlocks& blocks, ProfileKind kind) {
  switch (kind) {
    case ProfileKind::kShortTerm:
      return std::string(kShortPreamble) + " " + short_content(blocks);
    case ProfileKind::kLongTerm:
      return std::string(kLongPreamble) + " " + long_content(blocks);
    case ProfileKind::kGeneral:
      return std::string(kGeneralPreamble) + " " + general_content(blocks);
  }
  return std::string(kShortPreamble) + " " + short_content(blocks);
}

ChatConfig ChatConfig::from_env() {
  ChatConfig cfg;
  if (const char* base = std::getenv("TEMPOREC_API_BASE")) cfg.base_url = base;
  if (const char* key = std::getenv("TEMPOREC_API_KEY")) cfg.api_key = key;
  return cfg;
}

ChatBackend::ChatBackend(ChatConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw ConfigError("chat backend needs TEMPOREC_API_BASE");
  base_ = parse_base_url(cfg_.base_url);
}

std::string ChatBackend::chat(const std::string& system_text, const std::string& user_text) {
  nlohmann::json body = {
      {"model", cfg_.model},
      {"temperature", cfg_.temperature},
      {"max_tokens", cfg_.max_tokens},
      {"messages",
       {{{"role", "system"}, {"content", system_text}},
        {{"role", "user"}, {"content", user_text}}}}};
  Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);
  auto resp = post_json(base_, "/v1/chat/completions", body, headers, cfg_.retry, "chat");
  try {
    const auto& content = resp.at("choices").at(0).at("message").at("content");
    return content.is_string() ? content.get<std::string>() : std::string();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("chat: response has no choices[0].message.content", true);
  }
}

std::string ChatBackend::complete(const ProfileRequest& request) {
  return chat(request.system_text, request.user_prompt);
}

ProfileCache::ProfileCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw DataError(path_.string() + ": line " + std::to_string(line_no) + ": bad JSON");
    }
    CachedProfile e{j.at("user_id").get<std::string>(),
                    profile_kind_from_string(j.at("kind").get<std::string>()),
                    j.at("prompt_hash").get<std::string>(), j.at("model").get<std::string>(),
                    j.at("text").get<std::string>()};
    entries_[Key{e.user_id, static_cast<int>(e.kind), e.prompt_hash}] = std::move(e);
  }
}

std::optional<std::string> ProfileCache::lookup(std::string_view user_id, ProfileKind kind,
                                                std::string_view prompt_hash) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(
      Key{std::string(user_id), static_cast<int>(kind), std::string(prompt_hash)});
  if (it == entries_.end()) return std::nullopt;
  return it->second.text;
}

void ProfileCache::insert(const CachedProfile& entry) {
  std::unique_lock lock(mu_);
  Key key{entry.user_id, static_cast<int>(entry.kind), entry.prompt_hash};
  if (entries_.contains(key)) return;
  entries_[key] = entry;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to profile cache " + path_.string());
  out << nlohmann::json{{"user_id", entry.user_id},
                        {"kind", to_string(entry.kind)},
                        {"prompt_hash", entry.prompt_hash},
                        {"model", entry.model},
                        {"text", entry.text}}
             .dump()
      << '\n';
}

std::size_t ProfileCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::string prompt_hash(const PromptTemplate& tmpl, const HistoryBlocks& blocks,
                        std::string_view model_id) {
  std::string payload;
  for (std::string_view part : {to_string(tmpl.kind), std::string_view(tmpl.system_text),
                                std::string_view(tmpl.user_text_template),
                                std::string_view(blocks.history_block),
                                std::string_view(blocks.recent_block), model_id}) {
    payload.append(part);
    payload.push_back('\x1f');
  }
  return sha256_hex(payload);
}

std::string generate_profile(std::string_view user_id, const HistoryBlocks& blocks,
                             const PromptTemplate& tmpl, ProfileBackend& backend,
                             ProfileCache* cache) {
  ProfileRequest req;
  req.user_id = user_id;
  req.kind = tmpl.kind;
  req.system_text = tmpl.system_text;
  req.blocks = blocks;
  req.user_prompt = tmpl.render(req.blocks.history_block, req.blocks.recent_block);
  const std::size_t budget = backend.max_prompt_chars();
  while (utf8_length(req.system_text) + utf8_length(req.user_prompt) > budget &&
         !req.blocks.history_block.empty()) {
    auto nl = req.blocks.history_block.find('\n');
    req.blocks.history_block =
        nl == std::string::npos ? std::string() : req.blocks.history_block.substr(nl + 1);
    req.user_prompt = tmpl.render(req.blocks.history_block, req.blocks.recent_block);
  }

  const std::string hash = prompt_hash(tmpl, req.blocks, backend.model_id());
  if (cache) {
    if (auto hit = cache->lookup(user_id, tmpl.kind, hash)) return *hit;
  }
  std::string text;
  try {
    text = backend.complete(req);
  } catch (const BackendError& e) {
    throw BackendError("user " + std::string(user_id) + ", " +
                           std::string(to_string(tmpl.kind)) + " profile: " + e.what(),
                       e.fatal());
  }
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw BackendError("user " + std::string(user_id) + ", " +
                       std::string(to_string(tmpl.kind)) + " profile: empty completion");
  }
  if (cache) {
    cache->insert({std::string(user_id), tmpl.kind, hash, backend.model_id(), text});
  }
  return text;
}

std::vector<TemporalProfile> generate_profiles(const SplitDataset& split,
                                               const ItemMetaIndex& meta,
                                               const PromptSet& prompts,
                                               ProfileBackend& backend, ProfileCache* cache,
                                               const ProfileOptions& options) {
  const std::size_t n = split.users.size();
  std::vector<TemporalProfile> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    for (std::size_t u = next++; u < n; u = next++) {
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      try {
        const UserSplit& us = split.users[u];
        auto blocks = render_history_block(us.train, meta, options.max_items, options.recent_k);
        TemporalProfile p;
        p.user_id = us.user_id;
        p.provenance = backend.model_id();
        p.short_text = generate_profile(us.user_id, blocks, prompts.short_term, backend, cache);
        p.long_text = generate_profile(us.user_id, blocks, prompts.long_term, backend, cache);
        std::string hashes = prompt_hash(prompts.short_term, blocks, p.provenance) +
                             prompt_hash(prompts.long_term, blocks, p.provenance);
        if (options.include_general) {
          p.general_text = generate_profile(us.user_id, blocks, prompts.general, backend, cache);
          hashes += prompt_hash(prompts.general, blocks, p.provenance);
        }
        p.prompt_hash = sha256_hex(hashes);
        out[u] = std::move(p);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.concurrency, n));
  std::vector<std::thread> workers;
  for (std::size_t w = 1; w < n_workers; ++w) workers.emplace_back(work);
  work();
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

nlohmann::json profiles_to_json(std::span<const TemporalProfile> profiles) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : profiles) {
    nlohmann::json j = {{"user_id", p.user_id},
                        {"short_text", p.short_text},
                        {"long_text", p.long_text},
                        {"provenance", p.provenance},
                        {"prompt_hash", p.prompt_hash}};
    if (p.general_text) j["general_text"] = *p.general_text;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<TemporalProfile> profiles_from_json(const nlohmann::json& j) {
  std::vector<TemporalProfile> out;
  for (const auto& e : j) {
    TemporalProfile p;
    p.user_id = e.at("user_id").get<std::string>();
    p.short_text = e.at("short_text").get<std::string>();
    p.long_text = e.at("long_text").get<std::string>();
    p.provenance = e.at("provenance").get<std::string>();
    p.prompt_hash = e.at("prompt_hash").get<std::string>();
    if (e.contains("general_text")) p.general_text = e.at("general_text").get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace temporec
