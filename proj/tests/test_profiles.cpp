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

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "temporec/error.hpp"
#include "temporec/profiles.hpp"
#include "temporec/text.hpp"
#include "test_util.hpp"

namespace temporec {
namespace {

ItemMetaIndex catalog(const std::vector<std::pair<std::string, std::string>>& titles) {
  std::vector<ItemMeta> items;
  for (const auto& [id, title] : titles) items.push_back({id, title, "About " + title + "."});
  return index_items(items);
}

std::vector<Interaction> history_of(const std::vector<std::string>& ids) {
  std::vector<Interaction> rows;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    rows.push_back({"u", ids[k], static_cast<std::int64_t>(86400 * (k + 1))});
  }
  return rows;
}

std::size_t count_lines(const std::string& s) {
  return s.empty() ? 0 : std::count(s.begin(), s.end(), '\n') + 1;
}

// Counts backend calls; answers with a fixed text.
class CountingBackend final : public ProfileBackend {
 public:
  explicit CountingBackend(std::string reply) : reply_(std::move(reply)) {}
  std::string model_id() const override { return "counting"; }
  std::string complete(const ProfileRequest& req) override {
    ++calls;
    last_prompt = req.user_prompt;
    return reply_;
  }
  std::size_t max_prompt_chars() const override { return budget; }

  std::atomic<int> calls{0};
  std::string last_prompt;
  std::size_t budget = static_cast<std::size_t>(-1);

 private:
  std::string reply_;
};

// Chat-completions fixture: serves the queued statuses in order, then 200.
class FixtureServer {
 public:
  explicit FixtureServer(std::vector<int> statuses, std::string reply = "canned profile text")
      : statuses_(std::move(statuses)), reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int k = hits_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const int status = k < static_cast<int>(statuses_.size()) ? statuses_[k] : 200;
      res.status = status;
      if (status == 200) {
        nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply_}}}}}}};
        res.set_content(body.dump(), "application/json");
      } else {
        res.set_content("{\"error\":\"nope\"}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FixtureServer() {
    server_.stop();
    thread_.join();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits() const { return hits_; }
  nlohmann::json last_body() const { return nlohmann::json::parse(last_body_); }
  const std::string& last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::string reply_;
  std::atomic<int> hits_{0};
  std::string last_body_;
  std::string last_auth_;
  int port_ = 0;
  std::thread thread_;
};

ChatConfig fast_config(const std::string& base) {
  ChatConfig cfg;
  cfg.base_url = base;
  cfg.api_key = "sk-test";
  cfg.retry.backoff_base_s = 0.001;
  cfg.retry.timeout_s = 5.0;
  return cfg;
}

TEST(RenderHistoryBlock, LineFormat) {
  const auto meta = catalog({{"a", "Dark City"}});
  const auto b = render_history_block(history_of({"a"}), meta);
  EXPECT_EQ(b.history_block, "1970-01-02 \xE2\x80\x94 Dark City \xE2\x80\x94 About Dark City.");
}

TEST(RenderHistoryBlock, ShortHistoryRecentEqualsHistory) {
  const auto meta = catalog({{"a", "A"}, {"b", "B"}});
  const auto b = render_history_block(history_of({"a", "b"}), meta);
  EXPECT_EQ(b.recent_block, b.history_block);
  EXPECT_EQ(count_lines(b.history_block), 2u);
}

TEST(RenderHistoryBlock, TruncatesToLatestMaxItems) {
  std::vector<std::pair<std::string, std::string>> titles;
  std::vector<std::string> ids;
  for (int k = 0; k < 60; ++k) {
    titles.push_back({"i" + std::to_string(k), "Title" + std::to_string(k)});
    ids.push_back("i" + std::to_string(k));
  }
  const auto b = render_history_block(history_of(ids), catalog(titles), 50, 5);
  EXPECT_EQ(count_lines(b.history_block), 50u);
  const auto t = block_titles(b.history_block);
  EXPECT_EQ(t.front(), "Title10");
  EXPECT_EQ(t.back(), "Title59");
  EXPECT_EQ(block_titles(b.recent_block),
            (std::vector<std::string>{"Title55", "Title56", "Title57", "Title58", "Title59"}));
}

TEST(RenderHistoryBlock, MissingMetaPlaceholder) {
  const auto b = render_history_block(history_of({"ghost"}), {});
  EXPECT_NE(b.history_block.find("(unknown item ghost)"), std::string::npos);
}

TEST(RenderHistoryBlock, DescriptionCutAt200CodePoints) {
  std::vector<ItemMeta> items = {{"a", "T", std::string(150, 'x') + std::string(100, 'y')}};
  const auto b = render_history_block(history_of({"a"}), index_items(items));
  EXPECT_NE(b.history_block.find(std::string(150, 'x') + std::string(50, 'y')), std::string::npos);
  EXPECT_EQ(b.history_block.find(std::string(51, 'y')), std::string::npos);
}

TEST(PromptTemplate, RendersBothPlaceholders) {
  PromptTemplate t;
  t.user_text_template = "H:{history_block}|R:{recent_block}";
  EXPECT_EQ(t.render("h", "r"), "H:h|R:r");
}

TEST(PromptTemplate, BracesInsideSubstitutedTextSurvive) {
  PromptTemplate t;
  t.user_text_template = "{history_block}/{recent_block}";
  EXPECT_EQ(t.render("{recent_block}", "x"), "{recent_block}/x");
}

TEST(PromptTemplate, UnknownPlaceholderRejected) {
  PromptTemplate t;
  t.user_text_template = "{history_block} {mood}";
  EXPECT_THROW(t.render("h", "r"), ConfigError);
}

TEST(PromptTemplate, BuiltinsRenderCleanly) {
  for (auto k : {ProfileKind::kShortTerm, ProfileKind::kLongTerm, ProfileKind::kGeneral}) {
    const auto out = PromptTemplate::builtin(k).render("HIST", "REC");
    EXPECT_NE(out.find("HIST"), std::string::npos);
    EXPECT_EQ(out.find("{"), std::string::npos) << out;
  }
}

TEST(PromptTemplate, ParseSplitsSystemPart) {
  const auto t = PromptTemplate::parse(ProfileKind::kLongTerm, "sys line\n---\nuser {history_block}\n\n");
  EXPECT_EQ(t.system_text, "sys line");
  EXPECT_EQ(t.user_text_template, "user {history_block}");
  const auto u = PromptTemplate::parse(ProfileKind::kLongTerm, "only user\n");
  EXPECT_EQ(u.system_text, "");
  EXPECT_EQ(u.user_text_template, "only user");
}

TEST(PromptTemplate, LeadingHashLinesAreSkipped) {
  const auto t = PromptTemplate::parse(ProfileKind::kShortTerm,
                                       "# license\n#\n\nsys\n---\n# kept {history_block}\n");
  EXPECT_EQ(t.system_text, "sys");
  EXPECT_EQ(t.user_text_template, "# kept {history_block}");
}

TEST(PromptSet, ShippedPromptFilesMatchBuiltins) {
  const auto set = PromptSet::from_dir(TEMPOREC_SOURCE_DIR "/prompts");
  EXPECT_EQ(set.short_term.user_text_template,
            PromptTemplate::builtin(ProfileKind::kShortTerm).user_text_template);
  EXPECT_EQ(set.long_term.system_text, PromptTemplate::builtin(ProfileKind::kLongTerm).system_text);
  EXPECT_EQ(set.general.user_text_template,
            PromptTemplate::builtin(ProfileKind::kGeneral).user_text_template);
}

TEST(TemplateBackend, ShortTermListsRecentTitles) {
  const auto meta = catalog({{"a", "Alpha"}, {"b", "Beta"}, {"c", "Gamma"}});
  const auto b = render_history_block(history_of({"a", "b", "c"}), meta, 50, 2);
  const auto text = template_profile(b, ProfileKind::kShortTerm);
  EXPECT_EQ(text, "Recently, this user engaged with: Beta; Gamma.");
}

TEST(TemplateBackend, EmptyRecentBlock) {
  const auto text = template_profile(HistoryBlocks{}, ProfileKind::kShortTerm);
  EXPECT_EQ(text, std::string(kShortPreamble) + " (no recent items)");
}

TEST(TemplateBackend, IdenticalHistoriesIdenticalText) {
  const auto meta = catalog({{"a", "Alpha One"}, {"b", "Beta Two"}, {"c", "Alpha Three"}});
  const auto h = history_of({"a", "b", "c", "a"});
  for (auto k : {ProfileKind::kShortTerm, ProfileKind::kLongTerm, ProfileKind::kGeneral}) {
    EXPECT_EQ(template_profile(render_history_block(h, meta, 50, 1), k),
              template_profile(render_history_block(h, meta, 50, 1), k));
  }
}

TEST(TemplateBackend, MostFrequentTokenListedFirst) {
  // "noir" in 7 titles, every other token in at most 2, all before the
  // recent window.
  std::vector<std::pair<std::string, std::string>> titles = {
      {"n1", "Noir Alley"},  {"n2", "Noir Bay"},    {"n3", "Noir Alley"}, {"n4", "Noir Coast"},
      {"n5", "Noir Bay"},    {"n6", "Noir Coast"},  {"n7", "Noir Dusk"},  {"r1", "Zebra Dusk"},
      {"r2", "Yak Fields"},  {"r3", "Xenon Glow"},  {"r4", "Walrus Hill"}, {"r5", "Vole Isle"}};
  std::vector<std::string> ids;
  for (auto& [id, _] : titles) ids.push_back(id);
  const auto b = render_history_block(history_of(ids), catalog(titles), 50, 5);
  const auto text = template_profile(b, ProfileKind::kLongTerm);
  const std::string expect_prefix = std::string(kLongPreamble) + " noir, ";
  EXPECT_EQ(text.rfind(expect_prefix, 0), 0u) << text;
  // Then the count-2 tokens alphabetically; "dusk" recurs only via the
  // recent window.
  EXPECT_EQ(text, std::string(kLongPreamble) + " noir, alley, bay, coast.");
  const auto general = template_profile(b, ProfileKind::kGeneral);
  EXPECT_EQ(general.rfind(std::string(kGeneralPreamble) + " noir, ", 0), 0u) << general;
}

TEST(TemplateBackend, OldTokenExcludedFromShortTerm) {
  const auto meta = catalog({{"o", "Quasar"}, {"a", "Noir A"}, {"b", "Noir B"}, {"c", "Noir C"},
                             {"d", "Noir D"}, {"e", "Noir E"}});
  const auto b = render_history_block(history_of({"o", "a", "b", "c", "d", "e"}), meta, 50, 5);
  const auto s = template_profile(b, ProfileKind::kShortTerm);
  EXPECT_EQ(s.find("Quasar"), std::string::npos);
  EXPECT_NE(template_profile(b, ProfileKind::kLongTerm).find("quasar"), std::string::npos);
}

TEST(GenerateProfile, CacheHitSkipsBackend) {
  const auto meta = catalog({{"a", "Alpha"}});
  const auto blocks = render_history_block(history_of({"a"}), meta);
  CountingBackend backend("profile!");
  ProfileCache cache;
  const auto tmpl = PromptTemplate::builtin(ProfileKind::kShortTerm);
  EXPECT_EQ(generate_profile("u", blocks, tmpl, backend, &cache), "profile!");
  EXPECT_EQ(backend.calls, 1);
  EXPECT_EQ(generate_profile("u", blocks, tmpl, backend, &cache), "profile!");
  EXPECT_EQ(backend.calls, 1);
  EXPECT_EQ(cache.size(), 1u);
}

TEST(GenerateProfile, EmptyCompletionIsAnErrorAndNotCached) {
  const auto blocks = render_history_block(history_of({"a"}), catalog({{"a", "Alpha"}}));
  CountingBackend backend("  \n");
  ProfileCache cache;
  try {
    generate_profile("u7", blocks, PromptTemplate::builtin(ProfileKind::kLongTerm), backend, &cache);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("u7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("long_term"), std::string::npos);
  }
  EXPECT_EQ(cache.size(), 0u);
}

TEST(GenerateProfile, OverBudgetDropsOldestHistoryLines) {
  std::vector<std::pair<std::string, std::string>> titles;
  std::vector<std::string> ids;
  for (int k = 0; k < 20; ++k) {
    titles.push_back({"i" + std::to_string(k), "Title" + std::to_string(k)});
    ids.push_back(titles.back().first);
  }
  const auto blocks = render_history_block(history_of(ids), catalog(titles));
  CountingBackend backend("ok");
  const auto tmpl = PromptTemplate::builtin(ProfileKind::kLongTerm);
  const auto full =
      utf8_length(tmpl.system_text) + utf8_length(tmpl.render(blocks.history_block, ""));
  backend.budget = full - 100;
  generate_profile("u", blocks, tmpl, backend, nullptr);
  EXPECT_EQ(backend.last_prompt.find("Title0 "), std::string::npos);
  EXPECT_NE(backend.last_prompt.find("Title19"), std::string::npos);
  EXPECT_LE(utf8_length(tmpl.system_text) + utf8_length(backend.last_prompt), backend.budget);
}

TEST(ProfileCache, FileRoundTripIsByteIdentical) {
  testing::TempDir dir;
  const std::string text = "Likes \"noir\"\nand caf\xc3\xa9s.";
  {
    ProfileCache cache(dir / "cache.jsonl");
    cache.insert({"u1", ProfileKind::kShortTerm, "h1", "m", text});
    cache.insert({"u1", ProfileKind::kLongTerm, "h1", "m", "other"});
  }
  ProfileCache reread(dir / "cache.jsonl");
  EXPECT_EQ(reread.size(), 2u);
  EXPECT_EQ(reread.lookup("u1", ProfileKind::kShortTerm, "h1"), text);
  EXPECT_FALSE(reread.lookup("u1", ProfileKind::kShortTerm, "h2").has_value());
  const auto line = nlohmann::json::parse(testing::read_file(dir / "cache.jsonl").substr(
      0, testing::read_file(dir / "cache.jsonl").find('\n')));
  for (const char* key : {"user_id", "kind", "prompt_hash", "model", "text"}) {
    EXPECT_TRUE(line.contains(key)) << key;
  }
}

TEST(PromptHash, ChangesWithModelAndHistory) {
  const auto tmpl = PromptTemplate::builtin(ProfileKind::kShortTerm);
  HistoryBlocks a{"h", "r"}, b{"h2", "r"};
  EXPECT_EQ(prompt_hash(tmpl, a, "m"), prompt_hash(tmpl, a, "m"));
  EXPECT_NE(prompt_hash(tmpl, a, "m"), prompt_hash(tmpl, a, "m2"));
  EXPECT_NE(prompt_hash(tmpl, a, "m"), prompt_hash(tmpl, b, "m"));
  EXPECT_EQ(prompt_hash(tmpl, a, "m").size(), 64u);
}

TEST(GenerateProfiles, OrderedAndFromTrainOnly) {
  std::vector<Interaction> rows;
  std::vector<ItemMeta> items;
  for (int u = 0; u < 6; ++u) {
    for (int k = 0; k < 10; ++k) {
      const std::string id = "u" + std::to_string(u) + "i" + std::to_string(k);
      rows.push_back({"user" + std::to_string(u), id, k + 1});
      items.push_back({id, "Title " + id, "d"});
    }
  }
  const auto split = temporal_split(rows);
  TemplateBackend backend;
  ProfileOptions opt;
  opt.concurrency = 3;
  const auto profiles = generate_profiles(split, index_items(items), PromptSet{}, backend, nullptr, opt);
  ASSERT_EQ(profiles.size(), 6u);
  for (std::size_t u = 0; u < 6; ++u) {
    EXPECT_EQ(profiles[u].user_id, split.users[u].user_id);
    EXPECT_EQ(profiles[u].provenance, "template");
    // Items 8 and 9 are validation and test.
    EXPECT_NE(profiles[u].short_text.find("i7"), std::string::npos);
    EXPECT_EQ(profiles[u].short_text.find("i8"), std::string::npos);
    EXPECT_EQ(profiles[u].short_text.find("i9"), std::string::npos);
    EXPECT_TRUE(profiles[u].general_text.has_value());
  }
  const auto back = profiles_from_json(profiles_to_json(profiles));
  EXPECT_EQ(profiles_to_json(back), profiles_to_json(profiles));
}

TEST(ChatBackend, ReturnsFixtureTextVerbatim) {
  FixtureServer server({}, "A user who loves \"noir\".");
  ChatBackend chat(fast_config(server.base()));
  EXPECT_EQ(chat.chat("sys", "usr"), "A user who loves \"noir\".");
  const auto body = server.last_body();
  EXPECT_EQ(body["model"], "gpt-4o-mini");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 512);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "usr");
  EXPECT_EQ(server.last_auth(), "Bearer sk-test");
}

TEST(ChatBackend, RetriesAfter429) {
  FixtureServer server({429});
  ChatBackend chat(fast_config(server.base()));
  EXPECT_EQ(chat.chat("s", "u"), "canned profile text");
  EXPECT_EQ(server.hits(), 2);
}

TEST(ChatBackend, Unauthorized401IsFatalWithoutRetry) {
  FixtureServer server({401});
  ChatBackend chat(fast_config(server.base()));
  try {
    chat.chat("s", "u");
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.fatal());
  }
  EXPECT_EQ(server.hits(), 1);
}

TEST(ChatBackend, ServerErrorsExhaustRetries) {
  FixtureServer server({500, 502, 503, 500});
  ChatBackend chat(fast_config(server.base()));
  try {
    chat.chat("s", "u");
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_FALSE(e.fatal());
  }
  EXPECT_EQ(server.hits(), 4);
}

TEST(ChatBackend, UnreachableServerIsTransportError) {
  const int port = testing::closed_port();
  auto cfg = fast_config("http://127.0.0.1:" + std::to_string(port));
  cfg.retry.max_retries = 1;
  ChatBackend chat(cfg);
  EXPECT_THROW(chat.chat("s", "u"), BackendError);
}

TEST(ChatBackend, MissingBaseUrlIsConfigError) {
  EXPECT_THROW(ChatBackend(ChatConfig{}), ConfigError);
}

TEST(ChatBackend, GeneratesProfilesEndToEnd) {
  FixtureServer server({});
  ChatBackend chat(fast_config(server.base()));
  const auto blocks = render_history_block(history_of({"a"}), catalog({{"a", "Alpha"}}));
  ProfileCache cache;
  EXPECT_EQ(generate_profile("u", blocks, PromptTemplate::builtin(ProfileKind::kShortTerm), chat, &cache),
            "canned profile text");
  const auto user_msg = server.last_body()["messages"][1]["content"].get<std::string>();
  EXPECT_NE(user_msg.find("Alpha"), std::string::npos);
}

}  // namespace
}  // namespace temporec
