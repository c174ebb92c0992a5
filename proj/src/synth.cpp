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

#include "temporec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "temporec/error.hpp"
#include "temporec/rng.hpp"
#include "temporec/text.hpp"

namespace temporec {
namespace {

struct TopicWords {
  const char* name;
  const char* words[6];
};

constexpr TopicWords kTopics[] = {
    {"noir", {"detective", "alley", "smoke", "rain", "cigarette", "fedora"}},
    {"western", {"saddle", "canyon", "sheriff", "outlaw", "frontier", "stagecoach"}},
    {"anime", {"mecha", "academy", "spirit", "ninja", "festival", "transfer"}},
    {"horror", {"haunting", "cellar", "scream", "curse", "zombie", "asylum"}},
    {"comedy", {"prank", "sitcom", "roommate", "blunder", "standup", "wedding"}},
    {"romance", {"courtship", "letters", "summer", "heartbreak", "proposal", "ballroom"}},
    {"scifi", {"starship", "android", "galaxy", "wormhole", "colony", "reactor"}},
    {"documentary", {"archive", "interview", "wildlife", "expedition", "footage", "history"}},
    {"fantasy", {"dragon", "wizard", "kingdom", "quest", "sorcery", "elven"}},
    {"thriller", {"conspiracy", "hostage", "pursuit", "informant", "deadline", "cipher"}},
    {"musical", {"chorus", "broadway", "rehearsal", "duet", "overture", "encore"}},
    {"sports", {"championship", "rookie", "stadium", "coach", "rivalry", "playoff"}},
};

constexpr const char* kFlavors[] = {"vintage", "indie", "deluxe", "animated",
                                    "restored", "foreign", "family", "silent"};

constexpr const char* kFiller[] = {"story", "journey", "collection", "edition", "classic",
                                   "feature", "season", "episode", "tale", "chronicle"};

std::string topic_name(std::size_t t) {
  if (t < std::size(kTopics)) return kTopics[t].name;
  return "topic" + std::to_string(t);
}

std::string topic_word(std::size_t t, std::size_t w) {
  if (t < std::size(kTopics)) return kTopics[t].words[w % 6];
  return "topic" + std::to_string(t) + "word" + std::to_string(w % 6);
}

std::string flavor_name(std::size_t f) {
  if (f < std::size(kFlavors)) return kFlavors[f];
  return "flavor" + std::to_string(f);
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string pad_id(char prefix, std::size_t i, std::size_t width) {
  std::string digits = std::to_string(i);
  return std::string(1, prefix) + std::string(width - std::min(width, digits.size()), '0') +
         digits;
}

ItemMeta make_item(std::size_t i, std::size_t topic, std::size_t flavor, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6974656d0000ULL + i));
  const std::string t = topic_name(topic);
  const std::string f = flavor_name(flavor);
  ItemMeta m;
  m.item_id = pad_id('i', i, 5);
  m.title = capitalize(t) + " " + capitalize(f) + " " + capitalize(topic_word(topic, rng.index(6))) +
            " " + std::to_string(i);
  std::string d;
  while (utf8_length(d) <= 560) {
    d += "A " + f + " " + t + " " + kFiller[rng.index(std::size(kFiller))] + " about the " +
         topic_word(topic, rng.index(6)) + " and the " + topic_word(topic, rng.index(6)) +
         ", a " + t + " pick for " + f + " " + t + " fans. ";
  }
  m.description = d;
  return m;
}

// Draws `n` distinct items of `topic`, each with the user's flavor with
// probability `purity` and otherwise any flavor of that topic.
std::vector<std::uint32_t> draw_items(const std::vector<std::vector<std::uint32_t>>& by_topic,
                                      const std::vector<std::size_t>& item_flavor,
                                      std::size_t topic, std::size_t flavor, double purity,
                                      std::size_t n, std::vector<std::uint8_t>& used, Rng& rng) {
  std::vector<std::uint32_t> out;
  const auto& pool = by_topic[topic];
  for (std::size_t k = 0; k < n; ++k) {
    const bool want_flavor = rng.bernoulli(purity);
    std::vector<std::uint32_t> cands;
    for (auto i : pool) {
      if (!used[i] && (!want_flavor || item_flavor[i] == flavor)) cands.push_back(i);
    }
    if (cands.empty()) {
      for (auto i : pool) {
        if (!used[i]) cands.push_back(i);
      }
    }
    if (cands.empty()) break;
    const auto pick = cands[rng.index(cands.size())];
    used[pick] = 1;
    out.push_back(pick);
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 1 || n_items < 1 || n_topics < 1 || n_flavors < 1) {
    throw ConfigError("synth: counts must be at least 1");
  }
  if (n_topics > n_items) throw ConfigError("synth: n_topics exceeds n_items");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("synth: ") + name + " not in [0,1]");
  };
  prob(drift_prob, "drift_prob");
  prob(flavor_purity, "flavor_purity");
  prob(recent_flavor_purity, "recent_flavor_purity");
  if (!(interactions_mean >= 1.0) || !(interactions_std >= 0.0)) {
    throw ConfigError("synth: bad interactions distribution");
  }
  if (min_interactions < 1) throw ConfigError("synth: min_interactions must be at least 1");
  if (drift_prob > 0.0 && n_topics < 2) throw ConfigError("synth: drift needs two topics");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_users", c.n_users},
          {"n_items", c.n_items},
          {"n_topics", c.n_topics},
          {"n_flavors", c.n_flavors},
          {"drift_prob", c.drift_prob},
          {"interactions_mean", c.interactions_mean},
          {"interactions_std", c.interactions_std},
          {"min_interactions", c.min_interactions},
          {"recent_k", c.recent_k},
          {"ratios", {c.ratios.train, c.ratios.validation, c.ratios.test}},
          {"flavor_purity", c.flavor_purity},
          {"recent_flavor_purity", c.recent_flavor_purity},
          {"rng_seed", c.rng_seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c) {
  try {
    c.n_users = j.value("n_users", c.n_users);
    c.n_items = j.value("n_items", c.n_items);
    c.n_topics = j.value("n_topics", c.n_topics);
    c.n_flavors = j.value("n_flavors", c.n_flavors);
    c.drift_prob = j.value("drift_prob", c.drift_prob);
    c.interactions_mean = j.value("interactions_mean", c.interactions_mean);
    c.interactions_std = j.value("interactions_std", c.interactions_std);
    c.min_interactions = j.value("min_interactions", c.min_interactions);
    c.recent_k = j.value("recent_k", c.recent_k);
    if (j.contains("ratios")) {
      const auto& r = j.at("ratios");
      c.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
    }
    c.flavor_purity = j.value("flavor_purity", c.flavor_purity);
    c.recent_flavor_purity = j.value("recent_flavor_purity", c.recent_flavor_purity);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthData out;
  for (std::size_t t = 0; t < cfg.n_topics; ++t) out.topic_names.push_back(topic_name(t));
  for (std::size_t f = 0; f < cfg.n_flavors; ++f) out.flavor_names.push_back(flavor_name(f));

  std::vector<std::vector<std::uint32_t>> by_topic(cfg.n_topics);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const std::size_t topic = i % cfg.n_topics;
    const std::size_t flavor = (i / cfg.n_topics) % cfg.n_flavors;
    out.item_topic.push_back(topic);
    out.item_flavor.push_back(flavor);
    out.items.push_back(make_item(i, topic, flavor, cfg.rng_seed));
    by_topic[topic].push_back(static_cast<std::uint32_t>(i));
  }
  const std::size_t topic_cap = cfg.n_items / cfg.n_topics;

  Rng rng(derive_seed(cfg.rng_seed, 0x7573657273ULL));
  const std::size_t width = std::to_string(cfg.n_users).size() + 1;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    SynthUserTruth truth;
    truth.user_id = pad_id('u', u, width);
    truth.long_topic = rng.index(cfg.n_topics);
    truth.flavor = rng.index(cfg.n_flavors);
    truth.drifted = rng.bernoulli(cfg.drift_prob);
    truth.short_topic = truth.long_topic;
    if (truth.drifted) {
      truth.short_topic = (truth.long_topic + 1 + rng.index(cfg.n_topics - 1)) % cfg.n_topics;
    }
    const double draw = std::round(rng.normal(cfg.interactions_mean, cfg.interactions_std));
    std::size_t n = draw < static_cast<double>(cfg.min_interactions)
                        ? cfg.min_interactions
                        : static_cast<std::size_t>(draw);
    n = std::min(n, truth.drifted ? 2 * topic_cap : topic_cap);

    // Drift covers the last recent_k train interactions plus the held-out
    // tail, but never the whole history.
    std::size_t drift_len = 0;
    if (truth.drifted && n >= 2) {
      const auto cuts = split_cuts(n, cfg.ratios);
      drift_len = std::min({n - 1, cfg.recent_k + (n - cuts.first), topic_cap});
      n = std::min(n, drift_len + topic_cap);
    }
    const std::size_t base_len = n - drift_len;
    truth.drift_start = truth.drifted ? base_len : n;
    const auto cuts = split_cuts(n, cfg.ratios);

    std::vector<std::uint8_t> used(cfg.n_items, 0);
    // Base items that land in the held-out tail (stable users) always carry
    // the user's flavor; drifted train items keep it less reliably.
    const std::size_t base_train = std::min(base_len, cuts.first);
    auto items = draw_items(by_topic, out.item_flavor, truth.long_topic, truth.flavor,
                            cfg.flavor_purity, base_train, used, rng);
    auto base_held = draw_items(by_topic, out.item_flavor, truth.long_topic, truth.flavor, 1.0,
                                base_len - base_train, used, rng);
    items.insert(items.end(), base_held.begin(), base_held.end());
    const std::size_t drift_train = cuts.first - base_train;
    auto recent = draw_items(by_topic, out.item_flavor, truth.short_topic, truth.flavor,
                             cfg.recent_flavor_purity, drift_train, used, rng);
    auto tail = draw_items(by_topic, out.item_flavor, truth.short_topic, truth.flavor, 1.0,
                           drift_len - drift_train, used, rng);
    items.insert(items.end(), recent.begin(), recent.end());
    items.insert(items.end(), tail.begin(), tail.end());

    std::int64_t ts = 1'500'000'000 + static_cast<std::int64_t>(rng.index(86'400 * 365));
    for (auto i : items) {
      ts += 3'600 + static_cast<std::int64_t>(rng.index(86'400 * 10));
      out.interactions.push_back({truth.user_id, out.items[i].item_id, ts});
    }
    out.users.push_back(std::move(truth));
  }
  std::sort(out.interactions.begin(), out.interactions.end(),
            [](const Interaction& a, const Interaction& b) {
              return std::tie(a.user_id, a.timestamp, a.item_id) <
                     std::tie(b.user_id, b.timestamp, b.item_id);
            });
  return out;
}

nlohmann::json truth_to_json(const SynthData& data) {
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : data.users) {
    users.push_back({{"user_id", u.user_id},
                     {"long_topic", data.topic_names[u.long_topic]},
                     {"short_topic", data.topic_names[u.short_topic]},
                     {"flavor", data.flavor_names[u.flavor]},
                     {"drifted", u.drifted},
                     {"drift_start", u.drift_start}});
  }
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    items.push_back({{"item_id", data.items[i].item_id},
                     {"topic", data.topic_names[data.item_topic[i]]},
                     {"flavor", data.flavor_names[data.item_flavor[i]]}});
  }
  return {{"users", users}, {"items", items}};
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_interactions_jsonl(dir / "interactions.jsonl", data.interactions);
  write_item_meta_jsonl(dir / "items.jsonl", data.items);
  std::ofstream out(dir / "truth.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "truth.json").string());
  out << truth_to_json(data).dump(1) << '\n';
}

}  // namespace temporec
